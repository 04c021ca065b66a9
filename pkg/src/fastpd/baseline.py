"""Reference estimators.

``VanillaPD`` averages the model over hybrid points ``(x_S, X^(i)_notS)``,
which costs ``O(n_e * n_b)`` per subset and serves as the correctness
oracle. ``PathDependent`` is the coverage-weighted traversal used by
path-dependent TreeSHAP; it only approximates the empirical PD and is
inconsistent under correlated features.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from . import kernels
from .data import as_matrix
from .errors import BudgetExceededError, DimensionError
from .explain import ShapMatrix, decompose, shap_from_decomposition
from .model import Tree, TreeEnsemble, check_points
from .subsets import FeatureSubset, as_subset

LATTICE_BUDGET = 1 << 20


def vanilla_pd(ensemble: TreeEnsemble, background, x, s) -> float:
    """Mean prediction over background rows with the coordinates in ``s`` set to ``x``."""
    B = as_matrix(background)
    x = check_points(x, ensemble.num_features)[0]
    if B.shape[1] != ensemble.num_features:
        raise DimensionError("background and model disagree on the number of features")
    s = as_subset(s)
    if s.max_index() >= ensemble.num_features:
        raise DimensionError(f"subset {s!r} out of range")
    hybrid = B.copy()
    cols = list(s.indices)
    hybrid[:, cols] = x[cols]
    return float(np.mean(ensemble.predict(hybrid)))


def _in_s(s: FeatureSubset, d: int) -> np.ndarray:
    mask = np.zeros(d, dtype=np.bool_)
    mask[list(s.indices)] = True
    return mask


def _check(ensemble, background):
    B = as_matrix(background)
    if B.shape[1] != ensemble.num_features:
        raise DimensionError(
            f"background has {B.shape[1]} columns, model expects {ensemble.num_features}")
    return np.ascontiguousarray(B)


class _TreeLatticeMixin:
    ensemble: TreeEnsemble

    def _tree_pd(self, t: int, X: np.ndarray, s: FeatureSubset) -> np.ndarray:
        raise NotImplementedError

    def pd(self, X, subsets: Iterable) -> np.ndarray:
        d = self.ensemble.num_features
        X = check_points(X, d)
        subsets = [as_subset(s) for s in subsets]
        for s in subsets:
            if s.max_index() >= d:
                raise DimensionError(f"subset {s!r} references a feature index >= {d}")
        out = np.full((X.shape[0], len(subsets)), float(self.ensemble.intercept))
        for t, tree in enumerate(self.ensemble.trees):
            F = tree.split_features
            seen: dict[FeatureSubset, np.ndarray] = {}
            for k, s in enumerate(subsets):
                u = s & F
                if u not in seen:
                    seen[u] = self._tree_pd(t, X, u)
                out[:, k] += seen[u]
        return out

    def lattices(self, X, budget: int = LATTICE_BUDGET) -> list[dict[FeatureSubset, np.ndarray]]:
        X = check_points(X, self.ensemble.num_features)
        out = []
        for t, tree in enumerate(self.ensemble.trees):
            F = tree.split_features
            if (1 << len(F)) > budget:
                raise BudgetExceededError(f"tree {t} splits on {len(F)} features")
            out.append({u: self._tree_pd(t, X, u) for u in F.subsets()})
        return out

    def decompose(self, X, **kw):
        X = check_points(X, self.ensemble.num_features)
        return decompose(self.lattices(X), self.ensemble.intercept, eval_points=X,
                         num_features=self.ensemble.num_features,
                         feature_names=self.ensemble.feature_names, **kw)

    def shap(self, X) -> ShapMatrix:
        return shap_from_decomposition(self.decompose(X))


class VanillaPD(_TreeLatticeMixin):
    """Brute-force empirical PD, evaluated tree by tree."""

    def __init__(self, ensemble: TreeEnsemble, background):
        self.ensemble = ensemble
        self.background = _check(ensemble, background)
        self.n_b = self.background.shape[0]

    def _tree_pd(self, t, X, s):
        tree = self.ensemble.trees[t]
        return kernels.vanilla_pd(tree.feature, tree.threshold, tree.left, tree.right,
                                  tree.value, X, self.background,
                                  _in_s(s, self.ensemble.num_features))


def vanilla_pd_batch(ensemble: TreeEnsemble, background, X, subsets) -> np.ndarray:
    return VanillaPD(ensemble, background).pd(X, subsets)


def coverage(tree: Tree, background) -> np.ndarray:
    """Number of background rows reaching each node under plain routing."""
    B = as_matrix(background)
    cover = np.zeros(tree.n_nodes, dtype=np.int64)
    stack = [(0, np.arange(B.shape[0], dtype=np.int64))]
    while stack:
        j, rows = stack.pop()
        cover[j] = len(rows)
        f = tree.feature[j]
        if f < 0:
            continue
        lo, hi = kernels.split_rows(rows, np.ascontiguousarray(B[:, f]), tree.threshold[j])
        stack.append((int(tree.left[j]), lo))
        stack.append((int(tree.right[j]), hi))
    return cover


def path_dependent_pd(tree: Tree, cover: np.ndarray, x, s) -> float:
    """Coverage-weighted PD of one tree at one point.

    Splits on ``s`` follow ``x``; other splits average both children by
    their coverage. A node with zero coverage contributes 0.
    """
    x = np.asarray(x, dtype=np.float64)
    s = as_subset(s)

    def rec(j: int) -> float:
        f = int(tree.feature[j])
        if f < 0:
            return float(tree.value[j])
        l, r = int(tree.left[j]), int(tree.right[j])
        if f in s:
            return rec(l) if x[f] < tree.threshold[j] else rec(r)
        if cover[j] == 0:
            return 0.0
        return (cover[l] * rec(l) + cover[r] * rec(r)) / cover[j]

    return rec(0)


class PathDependent(_TreeLatticeMixin):
    """Path-dependent PD with node coverage taken from the background sample."""

    def __init__(self, ensemble: TreeEnsemble, background):
        self.ensemble = ensemble
        B = _check(ensemble, background)
        self.n_b = B.shape[0]
        self.covers = [coverage(t, B) for t in ensemble.trees]

    def _tree_pd(self, t, X, s):
        tree = self.ensemble.trees[t]
        return kernels.path_pd(tree.feature, tree.threshold, tree.left, tree.right, tree.value,
                               self.covers[t], X, _in_s(s, self.ensemble.num_features))


def path_dependent_shap(ensemble: TreeEnsemble, background, X) -> ShapMatrix:
    """SHAP values from path-dependent PD functions (standard Shapley weights)."""
    return PathDependent(ensemble, background).shap(X)
