"""Classical next-location predictors sharing the recurrent model's interface.

All models consume M x W windows of location ids and expose
``predict_proba(x)`` (rows sum to 1) and ``predict(x)``.  Argmax ties always
resolve to the smallest class id.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import EmptySet, UnfittedModel
from .tree import DecisionTree
from .windows import WindowedSet, one_hot

KINDS = (
    "uniform",
    "most_frequent",
    "knn",
    "naive_bayes",
    "decision_tree",
    "random_forest",
    "linear_svm",
    "adaboost",
)


def _point_mass(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _mode(values: np.ndarray, n_classes: int) -> int:
    return int(np.argmax(np.bincount(values, minlength=n_classes)))


class BaselineModel:
    kind = ""

    def __init__(self, n_classes: int, seed: int = 0):
        self.n_classes = n_classes
        self.seed = seed
        self.fitted = False

    def fit(self, ws: WindowedSet) -> "BaselineModel":
        if len(ws) == 0:
            raise EmptySet(f"{self.kind}: no training windows")
        self._fit(ws)
        self.fitted = True
        return self

    def _fit(self, ws: WindowedSet) -> None:
        raise NotImplementedError

    def _check(self, x) -> np.ndarray:
        if not self.fitted:
            raise UnfittedModel(f"{self.kind} model has not been fitted")
        x = np.asarray(x, dtype=np.int64)
        return x[None, :] if x.ndim == 1 else x

    def predict_proba(self, x, objects=None) -> np.ndarray:
        raise NotImplementedError

    def predict(self, x, objects=None) -> np.ndarray:
        return np.argmax(self.predict_proba(x, objects), axis=1)


class UniformModel(BaselineModel):
    """Guesses a class uniformly at random.

    ``predict`` draws from a generator re-seeded on every call, so identical
    calls give identical guesses; the probability vector is flat.
    """

    kind = "uniform"

    def fit(self, ws: WindowedSet) -> "UniformModel":
        self.fitted = True
        return self

    def predict_proba(self, x, objects=None):
        x = self._check(x)
        return np.full((len(x), self.n_classes), 1.0 / self.n_classes)

    def predict(self, x, objects=None):
        x = self._check(x)
        rng = np.random.default_rng(self.seed)
        return rng.integers(0, self.n_classes, size=len(x))


class MostFrequentModel(BaselineModel):
    """Modal location.

    With object indices at predict time the object's modal training label is
    used (global mode for unseen objects); without them, the mode of the
    window itself.
    """

    kind = "most_frequent"

    def _fit(self, ws):
        self.global_mode = _mode(ws.labels, self.n_classes)
        self.per_object = {}
        for obj in np.unique(ws.objects):
            self.per_object[int(obj)] = _mode(ws.labels[ws.objects == obj], self.n_classes)

    def predict_proba(self, x, objects=None):
        x = self._check(x)
        if objects is None:
            counts = np.zeros((len(x), self.n_classes), dtype=np.int64)
            np.add.at(counts, (np.repeat(np.arange(len(x)), x.shape[1]), x.reshape(-1)), 1)
            labels = np.argmax(counts, axis=1)
        else:
            labels = np.array([self.per_object.get(int(o), self.global_mode) for o in objects], dtype=np.int64)
        return _point_mass(labels, self.n_classes)


class KnnModel(BaselineModel):
    """k nearest windows by Hamming distance; majority vote among them."""

    kind = "knn"

    def __init__(self, n_classes, seed=0, k: int = 5):
        super().__init__(n_classes, seed)
        self.k = k

    def _fit(self, ws):
        self.x = ws.inputs.copy()
        self.y = ws.labels.copy()
        self._hot = one_hot(self.x, self.n_classes).astype(np.float32)

    def predict_proba(self, x, objects=None):
        x = self._check(x)
        m = len(self.y)
        k = min(self.k, m)
        width = self.x.shape[1]
        out = np.zeros((len(x), self.n_classes))
        chunk = max(1, 8_000_000 // max(1, m))
        for s in range(0, len(x), chunk):
            q = one_hot(x[s : s + chunk], self.n_classes).astype(np.float32)
            # Hamming distance = width - number of matching positions
            dist = width - np.rint(q @ self._hot.T).astype(np.int64)
            # unique key: equal distances resolve to the earlier training row
            key = dist * m + np.arange(m)[None, :]
            part = np.argpartition(key, k - 1, axis=1)[:, :k] if k < m else np.tile(np.arange(m), (len(q), 1))
            votes = self.y[part]
            for j, row in enumerate(votes):
                out[s + j] = np.bincount(row, minlength=self.n_classes)[: self.n_classes] / k
        return out


class NaiveBayesModel(BaselineModel):
    """Per-position categorical likelihoods with add-one smoothing."""

    kind = "naive_bayes"

    def _fit(self, ws):
        c = self.n_classes
        w = ws.width
        counts = np.zeros((c, w, c))
        np.add.at(counts, (np.repeat(ws.labels, w), np.tile(np.arange(w), len(ws)), ws.inputs.reshape(-1)), 1)
        class_counts = np.bincount(ws.labels, minlength=c).astype(np.float64)
        self.log_prior = np.log((class_counts + 1.0) / (len(ws) + c))
        self.log_like = np.log((counts + 1.0) / (class_counts[:, None, None] + c))
        self.width = w

    def predict_proba(self, x, objects=None):
        x = self._check(x)
        pos = np.arange(x.shape[1])
        # log_like[:, pos, x] -> classes x M x W
        scores = self.log_prior[None, :] + self.log_like[:, pos[None, :], x].sum(axis=2).T
        scores -= scores.max(axis=1, keepdims=True)
        p = np.exp(scores)
        return p / p.sum(axis=1, keepdims=True)


class DecisionTreeModel(BaselineModel):
    kind = "decision_tree"

    def __init__(self, n_classes, seed=0, max_depth: int = 12, min_leaf: int = 2):
        super().__init__(n_classes, seed)
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def _fit(self, ws):
        self.tree = DecisionTree(self.n_classes, self.max_depth, self.min_leaf, seed=self.seed)
        self.tree.fit(one_hot(ws.inputs, self.n_classes), ws.labels)

    def predict_proba(self, x, objects=None):
        x = self._check(x)
        return self.tree.predict_proba(one_hot(x, self.n_classes))


class RandomForestModel(BaselineModel):
    """Bagged CART trees with sqrt-feature subsampling; majority vote."""

    kind = "random_forest"

    def __init__(self, n_classes, seed=0, n_trees: int = 50, max_depth: int = 12, min_leaf: int = 2):
        super().__init__(n_classes, seed)
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def _fit(self, ws):
        xs = one_hot(ws.inputs, self.n_classes)
        m = len(ws)
        n_feat = math.ceil(math.sqrt(xs.shape[1]))
        seeds = np.random.SeedSequence(self.seed).spawn(self.n_trees)
        self.trees = []
        for ss in seeds:
            rng = np.random.default_rng(ss)
            boot = rng.integers(0, m, size=m)
            tree = DecisionTree(
                self.n_classes,
                self.max_depth,
                self.min_leaf,
                max_features=n_feat,
                seed=int(rng.integers(0, 2**63 - 1)),
            )
            self.trees.append(tree.fit(xs[boot], ws.labels[boot]))

    def predict_proba(self, x, objects=None):
        x = self._check(x)
        xs = one_hot(x, self.n_classes)
        votes = np.zeros((len(x), self.n_classes))
        for tree in self.trees:
            votes[np.arange(len(x)), tree.predict(xs)] += 1
        return votes / len(self.trees)


class LinearSvmModel(BaselineModel):
    """One-vs-rest linear SVM fitted by stochastic subgradient descent on the hinge loss."""

    kind = "linear_svm"

    def __init__(self, n_classes, seed=0, epochs: int = 5, lam: float = 1e-4, eta0: float = 0.1):
        super().__init__(n_classes, seed)
        self.epochs = epochs
        self.lam = lam
        self.eta0 = eta0

    def _fit(self, ws):
        c, w = self.n_classes, ws.width
        self.weights = np.zeros((c, w * c))
        self.bias = np.zeros(c)
        cols = ws.inputs + np.arange(w)[None, :] * c  # active indicator columns
        rng = np.random.default_rng(self.seed)
        step = 0
        for _ in range(self.epochs):
            for i in rng.permutation(len(ws)):
                eta = self.eta0 / (1.0 + self.eta0 * self.lam * step)
                step += 1
                target = -np.ones(c)
                target[ws.labels[i]] = 1.0
                score = self.weights[:, cols[i]].sum(axis=1) + self.bias
                viol = (target * score < 1.0) * target
                self.weights *= 1.0 - eta * self.lam
                self.weights[:, cols[i]] += eta * viol[:, None]
                self.bias += eta * viol

    def decision_function(self, x) -> np.ndarray:
        x = self._check(x)
        return one_hot(x, self.n_classes) @ self.weights.T + self.bias

    def predict_proba(self, x, objects=None):
        return _point_mass(np.argmax(self.decision_function(x), axis=1), self.n_classes)


class AdaBoostModel(BaselineModel):
    """Multi-class AdaBoost (SAMME) over depth-1 CART stumps."""

    kind = "adaboost"

    def __init__(self, n_classes, seed=0, rounds: int = 100):
        super().__init__(n_classes, seed)
        self.rounds = rounds

    def _fit(self, ws):
        xs = one_hot(ws.inputs, self.n_classes)
        y = ws.labels
        k = self.n_classes
        w = np.full(len(y), 1.0 / len(y))
        self.stumps, self.alphas = [], []
        for r in range(self.rounds):
            stump = DecisionTree(k, max_depth=1, min_leaf=1, seed=self.seed + r).fit(xs, y, w)
            miss = stump.predict(xs) != y
            err = float(w[miss].sum() / w.sum())
            if err <= 0.0:
                self.stumps.append(stump)
                self.alphas.append(1.0)
                break
            if err >= 1.0 - 1.0 / k:
                if not self.stumps:
                    self.stumps.append(stump)
                    self.alphas.append(1.0)
                break
            alpha = math.log((1.0 - err) / err) + math.log(k - 1.0)
            self.stumps.append(stump)
            self.alphas.append(alpha)
            w = w * np.exp(alpha * miss)
            w /= w.sum()

    def predict_proba(self, x, objects=None):
        x = self._check(x)
        xs = one_hot(x, self.n_classes)
        score = np.zeros((len(x), self.n_classes))
        for stump, alpha in zip(self.stumps, self.alphas):
            score[np.arange(len(x)), stump.predict(xs)] += alpha
        return score / score.sum(axis=1, keepdims=True)


_REGISTRY = {
    cls.kind: cls
    for cls in (
        UniformModel,
        MostFrequentModel,
        KnnModel,
        NaiveBayesModel,
        DecisionTreeModel,
        RandomForestModel,
        LinearSvmModel,
        AdaBoostModel,
    )
}


def train_baseline(kind: str, ws: WindowedSet, hyper: dict | None = None, seed: int = 0) -> BaselineModel:
    """Fit one of :data:`KINDS` on a window set."""
    if kind not in _REGISTRY:
        raise ValueError(f"unknown baseline {kind!r}; expected one of {KINDS}")
    model = _REGISTRY[kind](ws.n_classes, seed, **(hyper or {}))
    return model.fit(ws)
