import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from mobpat.predict.tree import DecisionTree


def gini(labels, n_classes):
    if not labels:
        return 0.0
    p = np.bincount(labels, minlength=n_classes) / len(labels)
    return 1.0 - float((p**2).sum())


def best_split_by_scan(x, y, n_classes, min_leaf):
    """Weighted child impurity of every single-feature split, first minimum wins."""
    best_f, best = -1, None
    for f in range(x.shape[1]):
        on = [int(v) for v, b in zip(y, x[:, f]) if b]
        off = [int(v) for v, b in zip(y, x[:, f]) if not b]
        if len(on) < min_leaf or len(off) < min_leaf:
            continue
        score = len(on) * gini(on, n_classes) + len(off) * gini(off, n_classes)
        if best is None or score < best - 1e-12:
            best_f, best = f, score
    return best_f, best


class TestDecisionTree:
    @settings(max_examples=80, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(4, 40), st.integers(1, 8), st.integers(2, 4))
    def test_root_split_matches_scan(self, seed, n, n_feat, n_classes):
        rng = np.random.default_rng(seed)
        x = rng.integers(0, 2, size=(n, n_feat)).astype(float)
        y = rng.integers(0, n_classes, size=n)
        tree = DecisionTree(n_classes, max_depth=1, min_leaf=1).fit(x, y)
        f, score = best_split_by_scan(x, y, n_classes, 1)
        parent = n * gini([int(v) for v in y], n_classes)
        if f < 0 or score >= parent - 1e-12:
            assert tree.root.is_leaf
        else:
            assert tree.root.feature == f

    def test_pure_node_is_leaf(self):
        tree = DecisionTree(3).fit(np.eye(4), np.array([2, 2, 2, 2]))
        assert tree.root.is_leaf
        assert tree.predict(np.zeros((1, 4))).tolist() == [2]

    def test_weights_shift_the_leaf_vote(self):
        x = np.zeros((3, 1))
        y = np.array([0, 1, 1])
        tree = DecisionTree(2, max_depth=0).fit(x, y, sample_weight=np.array([5.0, 1.0, 1.0]))
        assert tree.predict(x).tolist() == [0, 0, 0]
        assert np.allclose(tree.predict_proba(x)[0], [5 / 7, 2 / 7])

    def test_split_without_gain_is_not_taken(self):
        x = np.array([[0, 0], [0, 1], [1, 0], [1, 1]] * 3, dtype=float)
        y = np.array([0, 1, 1, 0] * 3)
        # no single indicator lowers Gini on xor
        assert DecisionTree(2, max_depth=2, min_leaf=1).fit(x, y).depth() == 0
