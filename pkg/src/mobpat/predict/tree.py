"""CART classification tree over 0/1 indicator features.

Every split tests a single indicator (``x[f] == 1`` goes right), so the Gini
gain of all candidate features at a node comes from one matrix product of
the node's indicators against its weighted class one-hot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class _Node:
    dist: np.ndarray  # weighted class distribution, normalized
    feature: int = -1
    left: "_Node | None" = None
    right: "_Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


def _gini(counts: np.ndarray, totals: np.ndarray) -> np.ndarray:
    safe = np.where(totals > 0, totals, 1.0)
    return 1.0 - ((counts / safe[..., None]) ** 2).sum(axis=-1)


class DecisionTree:
    def __init__(
        self,
        n_classes: int,
        max_depth: int = 12,
        min_leaf: int = 2,
        max_features: int | None = None,
        seed: int = 0,
    ):
        self.n_classes = n_classes
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.seed = seed
        self.root: _Node | None = None

    def fit(self, x: np.ndarray, y: np.ndarray, sample_weight: np.ndarray | None = None) -> "DecisionTree":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
        self._rng = np.random.default_rng(self.seed)
        yw = np.zeros((len(y), self.n_classes))
        yw[np.arange(len(y)), y] = w
        self.root = self._grow(x, yw, np.arange(len(y)), 0)
        return self

    def _grow(self, x: np.ndarray, yw: np.ndarray, idx: np.ndarray, depth: int) -> _Node:
        counts = yw[idx].sum(axis=0)
        total = counts.sum()
        node = _Node(counts / total if total > 0 else np.full(self.n_classes, 1.0 / self.n_classes))
        if depth >= self.max_depth or len(idx) < 2 * self.min_leaf or np.count_nonzero(counts) <= 1:
            return node
        n_feat = x.shape[1]
        if self.max_features is not None and self.max_features < n_feat:
            feats = np.sort(self._rng.choice(n_feat, size=self.max_features, replace=False))
        else:
            feats = np.arange(n_feat)
        xs = x[np.ix_(idx, feats)]
        right = xs.T @ yw[idx]  # F x C weighted class mass where feature is on
        left = counts[None, :] - right
        n_right = xs.sum(axis=0)
        n_left = len(idx) - n_right
        w_right = right.sum(axis=1)
        w_left = total - w_right
        impurity = w_left * _gini(left, w_left) + w_right * _gini(right, w_right)
        ok = (n_right >= self.min_leaf) & (n_left >= self.min_leaf)
        if not ok.any():
            return node
        impurity = np.where(ok, impurity, np.inf)
        best = int(np.argmin(impurity))
        if impurity[best] >= total * _gini(counts[None, :], np.array([total]))[0] - 1e-12:
            return node
        f = int(feats[best])
        on = x[idx, f] > 0.5
        node.feature = f
        node.left = self._grow(x, yw, idx[~on], depth + 1)
        node.right = self._grow(x, yw, idx[on], depth + 1)
        return node

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = np.empty((len(x), self.n_classes))
        self._route(self.root, x, np.arange(len(x)), out)
        return out

    def _route(self, node: _Node, x: np.ndarray, idx: np.ndarray, out: np.ndarray) -> None:
        if len(idx) == 0:
            return
        if node.is_leaf:
            out[idx] = node.dist
            return
        on = x[idx, node.feature] > 0.5
        self._route(node.left, x, idx[~on], out)
        self._route(node.right, x, idx[on], out)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)

    def depth(self) -> int:
        def walk(n):
            return 0 if n.is_leaf else 1 + max(walk(n.left), walk(n.right))

        return walk(self.root)
