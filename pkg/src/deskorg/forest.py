"""Random forest over binary features, grown from scratch.

Trees split on single binary features (left = 0, right = 1) using Gini
impurity and are grown until pure; the forest bags trees over bootstrap
resamples and averages their normalised leaf distributions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import ConfigurationError, DataError, DegeneratePairError, DimensionError
from .features import FeatureVector, ModalityMask


@dataclass(frozen=True)
class Leaf:
    counts: tuple[int, ...]  # aligned with the owning model's label_domain

    def __post_init__(self):
        if any(c < 0 for c in self.counts) or sum(self.counts) == 0:
            raise DataError(f"leaf counts must be nonnegative and not all zero: {self.counts}")


@dataclass(frozen=True)
class Split:
    feature: int
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[TreeNode, ...]
    label_domain: tuple
    input_dim: int
    k_train: Optional[int] = None
    mask: Optional[ModalityMask] = None
    target: str = ""

    def __post_init__(self):
        if len(self.trees) < 1:
            raise ConfigurationError("a forest needs at least one tree")
        for tree in self.trees:
            for node in iter_nodes(tree):
                if isinstance(node, Split) and not 0 <= node.feature < self.input_dim:
                    raise DataError(f"split feature {node.feature} outside input_dim {self.input_dim}")
                if isinstance(node, Leaf) and len(node.counts) != len(self.label_domain):
                    raise DataError("leaf counts do not match the label domain")


def iter_nodes(node: TreeNode):
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        if isinstance(n, Split):
            stack.extend((n.right, n.left))


def gini(class_counts: Mapping[Hashable, int] | Sequence[int]) -> float:
    counts = list(class_counts.values()) if isinstance(class_counts, Mapping) else list(class_counts)
    total = sum(counts)
    if total <= 0:
        raise DegeneratePairError("gini impurity of an empty node is undefined")
    return 1.0 - sum((c / total) ** 2 for c in counts)


def _as_matrix(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        X = samples
    else:
        rows = [s.values if isinstance(s, FeatureVector) else s for s in samples]
        if not rows:
            raise DataError("no samples")
        lengths = {len(r) for r in rows}
        if len(lengths) != 1:
            raise DataError(f"samples have inconsistent dimensionality {sorted(lengths)}")
        X = np.asarray(rows)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError(f"expected a nonempty 2-D sample matrix, got shape {X.shape}")
    return X.astype(np.uint8, copy=False)


def _weighted_child_gini(X: np.ndarray, Y: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Weighted child impurity for splitting on each of ``features``.

    X is (n, d) binary, Y is (n, C) one-hot labels.
    """
    n = X.shape[0]
    right = X[:, features].T.astype(np.int64) @ Y  # (m, C)
    left = Y.sum(axis=0)[None, :] - right
    n_right = right.sum(axis=1)
    n_left = n - n_right
    with np.errstate(invalid="ignore", divide="ignore"):
        g_right = 1.0 - np.where(n_right > 0, (right**2).sum(axis=1) / np.maximum(n_right, 1) ** 2, 0.0)
        g_left = 1.0 - np.where(n_left > 0, (left**2).sum(axis=1) / np.maximum(n_left, 1) ** 2, 0.0)
    return (n_left * g_left + n_right * g_right) / n


def _grow(X, Y, rng, m_try):
    counts = Y.sum(axis=0)
    n = X.shape[0]
    leaf = Leaf(tuple(int(c) for c in counts))
    parent = 1.0 - float((counts.astype(np.float64) ** 2).sum()) / n**2
    if parent == 0.0:
        return leaf
    # candidates are drawn among features that actually vary in this node
    ones = X.sum(axis=0)
    order = rng.permutation(X.shape[1])
    candidates = order[(ones[order] > 0) & (ones[order] < n)][:m_try]
    if candidates.size == 0:
        return leaf
    # a zero-gain split is still taken so trees grow until pure (XOR-like nodes)
    scores = _weighted_child_gini(X, Y, candidates)
    f = int(candidates[int(np.argmin(scores))])
    go_right = X[:, f] == 1
    left = _grow(X[~go_right], Y[~go_right], rng, m_try)
    right = _grow(X[go_right], Y[go_right], rng, m_try)
    return Split(f, left, right)


def _label_indices(labels, label_domain) -> np.ndarray:
    index = {lab: i for i, lab in enumerate(label_domain)}
    try:
        return np.array([index[lab] for lab in labels], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"label {exc.args[0]!r} not in label domain") from None


def fit_tree(
    samples,
    labels: Sequence,
    rng_seed: int,
    m_try: Optional[int] = None,
    label_domain: Optional[Sequence] = None,
) -> TreeNode:
    """Grow one unpruned tree; ``m_try`` features are examined at each node."""
    X = _as_matrix(samples)
    if len(labels) != X.shape[0]:
        raise DataError(f"{X.shape[0]} samples but {len(labels)} labels")
    domain = tuple(label_domain) if label_domain is not None else tuple(sorted(set(labels), key=repr))
    y = _label_indices(labels, domain)
    m_try = X.shape[1] if m_try is None else int(m_try)
    if not 1 <= m_try <= X.shape[1]:
        raise ConfigurationError(f"m_try must be in 1..{X.shape[1]}, got {m_try}")
    Y = np.eye(len(domain), dtype=np.int64)[y]
    return _grow(X, Y, np.random.default_rng(rng_seed), m_try)


def fit_forest(
    samples,
    labels: Sequence,
    n_trees: int = 20,
    rng_seed: int = 0,
    *,
    label_domain: Optional[Sequence] = None,
    m_try: Optional[int] = None,
    bootstrap: bool = True,
    k_train: Optional[int] = None,
    mask: Optional[ModalityMask] = None,
    target: str = "",
) -> ForestModel:
    if n_trees < 1:
        raise ConfigurationError(f"n_trees must be >= 1, got {n_trees}")
    X = _as_matrix(samples)
    if len(labels) != X.shape[0]:
        raise DataError(f"{X.shape[0]} samples but {len(labels)} labels")
    domain = tuple(label_domain) if label_domain is not None else tuple(sorted(set(labels), key=repr))
    y = _label_indices(labels, domain)
    Y = np.eye(len(domain), dtype=np.int64)[y]
    d = X.shape[1]
    m_try = math.ceil(math.sqrt(d)) if m_try is None else int(m_try)
    m_try = max(1, min(m_try, d))
    trees = []
    for child in np.random.SeedSequence(rng_seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        if bootstrap:
            rows = rng.integers(0, X.shape[0], size=X.shape[0])
            Xb, Yb = X[rows], Y[rows]
        else:
            Xb, Yb = X, Y
        trees.append(_grow(Xb, Yb, rng, m_try))
    return ForestModel(tuple(trees), domain, d, k_train, mask, target)


def _tree_distributions(node: TreeNode, X: np.ndarray, rows: np.ndarray, out: np.ndarray) -> None:
    if isinstance(node, Leaf):
        counts = np.asarray(node.counts, dtype=np.float64)
        out[rows] += counts / counts.sum()
        return
    go_right = X[rows, node.feature] == 1
    if (~go_right).any():
        _tree_distributions(node.left, X, rows[~go_right], out)
    if go_right.any():
        _tree_distributions(node.right, X, rows[go_right], out)


def _check_dim(model: ForestModel, X: np.ndarray) -> None:
    if X.shape[1] != model.input_dim:
        raise DimensionError(f"input has {X.shape[1]} features; model expects {model.input_dim}")


def predict_proba_matrix(model: ForestModel, X) -> np.ndarray:
    """(n, |labels|) mean of per-tree normalised leaf distributions."""
    X = np.atleast_2d(np.asarray(X.values if isinstance(X, FeatureVector) else X))
    _check_dim(model, X)
    total = np.zeros((X.shape[0], len(model.label_domain)))
    rows = np.arange(X.shape[0])
    for tree in model.trees:
        _tree_distributions(tree, X, rows, total)
    return total / len(model.trees)


def predict_many(model: ForestModel, X) -> list:
    proba = predict_proba_matrix(model, X)
    # argmax takes the first maximum, i.e. the earliest label in label_domain
    return [model.label_domain[i] for i in np.argmax(proba, axis=1)]


def predict(model: ForestModel, x) -> Hashable:
    return predict_many(model, x)[0]


def predict_proba(model: ForestModel, x) -> dict:
    proba = predict_proba_matrix(model, x)[0]
    return dict(zip(model.label_domain, proba.tolist()))


def tree_predict(tree: TreeNode, x, label_domain: Sequence) -> Hashable:
    node = tree
    values = x.values if isinstance(x, FeatureVector) else x
    while isinstance(node, Split):
        node = node.right if values[node.feature] == 1 else node.left
    return label_domain[int(np.argmax(node.counts))]


def tree_depth(node: TreeNode) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))
