"""Linear-time empirical partial dependence for tree ensembles.

Two phases per tree:

* :func:`augment` walks the tree once with the background sample. Each leaf
  ``j`` ends up with its path features ``T_j`` and, for every ``S ⊆ T_j``,
  the rows that would reach ``j`` if splits on ``S`` were ignored.
* Evaluation reduces a query subset to ``U = S ∩ F`` (``F`` = features the
  tree splits on), finds the leaves an evaluation point reaches when only
  splits on ``U`` are enforced, and sums ``value_j * |D_{U ∩ T_j}| / n_b``.

Leaf subsets are stored as *leaf-local* bitmasks: bit ``p`` refers to
``leaf.features[p]``. Leaves are kept in preorder, and every evaluation path
(single point, batched, either kernel backend) adds leaf contributions in
that order, so all of them agree bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .data import as_matrix
from .errors import BudgetExceededError, DataError, DimensionError, ModelFormatError
from .explain import Decomposition, ShapMatrix, decompose, shap_from_decomposition
from .model import Tree, TreeEnsemble, check_points
from .subsets import FeatureSubset, as_subset

DEFAULT_BUDGET = 1 << 20


@dataclass(frozen=True, eq=False)
class AugmentedLeaf:
    node: int
    value: float
    features: tuple[int, ...]
    counts: np.ndarray
    indices: dict[int, np.ndarray] | None = field(default=None, repr=False)

    @property
    def path_features(self) -> FeatureSubset:
        return FeatureSubset.of(self.features)

    def local_mask(self, subset) -> int:
        """Leaf-local mask of ``subset ∩ T_j``."""
        bits = as_subset(subset).bits
        m = 0
        for p, g in enumerate(self.features):
            if bits >> g & 1:
                m |= 1 << p
        return m

    def global_subset(self, local: int) -> FeatureSubset:
        return FeatureSubset.of(g for p, g in enumerate(self.features) if local >> p & 1)

    def count(self, subset) -> int:
        """``|D_{S ∩ T_j}|``."""
        return int(self.counts[self.local_mask(subset)])

    @property
    def partitions(self) -> dict[FeatureSubset, np.ndarray]:
        """Row-index list per ``S ⊆ T_j``; unavailable after :meth:`AugmentedTree.compact`."""
        if self.indices is None:
            raise ValueError("leaf was compacted; only partition counts are kept")
        return {self.global_subset(m): idx for m, idx in sorted(self.indices.items())}


class AugmentedTree:
    """A tree plus per-leaf partition counts over a fixed background sample."""

    def __init__(self, tree: Tree, leaves: Sequence[AugmentedLeaf] | None, n_b: int, *,
                 flat_counts: np.ndarray | None = None):
        self.tree = tree
        self.n_b = int(n_b)
        self.split_features = tree.split_features
        self.features = self.split_features.indices
        self.paths = paths = tree.paths
        self._leaf_at = None
        if leaves is None:
            # compact construction: per-leaf objects are built only on demand
            if flat_counts is None or len(flat_counts) != paths.offsets[-1]:
                raise DataError("flat counts do not match the tree")
            self._leaves = None
            self.flat_counts = flat_counts
        else:
            leaves = tuple(sorted(leaves, key=lambda lf: lf.node))
            if tuple(lf.node for lf in leaves) != tuple(int(v) for v in paths.leaves):
                raise DataError("augmented leaves do not match the tree")
            for lf, fs in zip(leaves, paths.features):
                if lf.features != fs or len(lf.counts) != 1 << len(fs):
                    raise DataError(f"leaf {lf.node}: path features or counts do not match the tree")
            self._leaves = leaves
            self.flat_counts = (np.concatenate([lf.counts for lf in leaves])
                                if leaves else np.zeros(0, dtype=np.int64))
        self.leaf_value = tree.value[paths.leaves]
        self._members = paths.members
        self._members_tpos = paths.members_tpos
        self._shift = np.arange(self._members.shape[1], dtype=np.int64)

    @property
    def leaves(self) -> tuple[AugmentedLeaf, ...]:
        if self._leaves is None:
            p, tree = self.paths, self.tree
            self._leaves = tuple(
                AugmentedLeaf(int(node), float(tree.value[node]), fs,
                              self.flat_counts[p.offsets[j]:p.offsets[j + 1]])
                for j, (node, fs) in enumerate(zip(p.leaves, p.features)))
        return self._leaves

    def leaf(self, node: int) -> AugmentedLeaf:
        if self._leaf_at is None:
            self._leaf_at = {lf.node: lf for lf in self.leaves}
        return self._leaf_at[node]

    @property
    def n_lists(self) -> int:
        return len(self.flat_counts)

    def compact(self) -> "AugmentedTree":
        """Drop the row-index lists, keeping only their lengths."""
        return AugmentedTree(self.tree, None, self.n_b, flat_counts=self.flat_counts)

    def reduce(self, subset) -> FeatureSubset:
        return as_subset(subset) & self.split_features

    # -- batched evaluation -------------------------------------------------

    def fail_masks(self, X: np.ndarray) -> np.ndarray:
        return self.paths.fail_masks(X)

    def _weights(self, UL: np.ndarray) -> np.ndarray:
        counts = self.flat_counts[self.paths.offsets[:-1, None] + UL]
        return self.leaf_value[:, None] * (counts / self.n_b)

    def _ul_from(self, members: np.ndarray, member_bits: np.ndarray) -> np.ndarray:
        # member_bits[k, q]: is the feature numbered q in subset k
        valid = members >= 0
        hit = member_bits[:, np.where(valid, members, 0)] & valid      # (K, L, w)
        return np.ascontiguousarray(
            (hit.astype(np.int64) << self._shift).sum(axis=2).T)

    def _ul_global(self, subsets: Sequence[FeatureSubset]) -> np.ndarray:
        d = max(int(self._members.max(initial=-1)) + 1, 1)
        bits = np.zeros((len(subsets), d), dtype=np.bool_)
        for k, s in enumerate(subsets):
            idx = [g for g in s.indices if g < d]
            bits[k, idx] = True
        return self._ul_from(self._members, bits)

    def _ul_local(self, masks: np.ndarray) -> np.ndarray:
        F = max(len(self.features), 1)
        bits = ((masks[:, None] >> np.arange(F)) & 1).astype(np.bool_)
        return self._ul_from(self._members_tpos, bits)

    def evaluate(self, X: np.ndarray, subsets: Sequence[FeatureSubset],
                 E: np.ndarray | None = None) -> np.ndarray:
        """Tree PD for each subset, shape ``(n_e, len(subsets))``; X is trusted."""
        if E is None:
            E = self.fail_masks(X)
        UL = self._ul_global(subsets)
        return kernels.accumulate(E, self._weights(UL), UL)

    def lattice(self, X: np.ndarray, budget: int = DEFAULT_BUDGET) -> np.ndarray:
        """PD for every ``U ⊆ F``; column ``m`` is the subset with tree-local mask ``m``."""
        F = len(self.features)
        if (1 << F) > budget:
            raise BudgetExceededError(
                f"tree splits on {F} features; 2^{F} subsets exceed the budget of {budget}")
        masks = np.arange(1 << F, dtype=np.int64)
        UL = self._ul_local(masks)
        return kernels.accumulate(self.fail_masks(X), self._weights(UL), UL)

    def local_to_global(self, mask: int) -> FeatureSubset:
        return FeatureSubset.of(g for q, g in enumerate(self.features) if mask >> q & 1)


def count_lists(tree: Tree) -> int:
    """``sum_j 2^|T_j|``, the number of partition lists augmentation creates."""
    return tree.paths.n_lists


def augment(tree: Tree, background, *, keep_indices: bool = True,
            budget_lists: int = DEFAULT_BUDGET) -> AugmentedTree:
    """Augment one tree with the background sample.

    Lists whose subset contains the split feature pass to both children
    unchanged; the others are filtered by the split. The first time a
    feature appears on a path, every list is duplicated under ``S ∪ {d_j}``.
    ``keep_indices=False`` skips the lists altogether: a row belongs to
    ``D_S`` at leaf ``j`` exactly when every split on the path that it fails
    is on a feature in ``S``, so the counts follow from a histogram of
    per-row fail masks summed over subsets. Both routes give the same counts.
    """
    X = as_matrix(background)
    n_b, d = X.shape
    top = tree.split_features.max_index()
    if top >= d:
        raise DimensionError(f"tree splits on feature {top} but background has {d} columns")
    n_lists = count_lists(tree)
    if n_lists > budget_lists:
        raise BudgetExceededError(
            f"augmentation needs {n_lists} partition lists, budget is {budget_lists}")

    if not keep_indices:
        return _augment_counts(tree, X)
    columns = [np.ascontiguousarray(X[:, f]) for f in range(d)]
    leaves = []
    # P maps a global feature bitmask S to the rows D_S; T is the path feature mask
    stack = [(0, 0, {0: np.arange(n_b, dtype=np.int64)})]
    while stack:
        j, T, P = stack.pop()
        if tree.feature[j] < 0:
            feats = FeatureSubset(T).indices
            counts = np.zeros(1 << len(feats), dtype=np.int64)
            local = {}
            for S, rows in P.items():
                m = _to_local(S, feats)
                counts[m] = len(rows)
                local[m] = rows
            leaves.append(AugmentedLeaf(j, float(tree.value[j]), feats, counts,
                                        local if keep_indices else None))
            continue
        f, t = int(tree.feature[j]), float(tree.threshold[j])
        bit = 1 << f
        yes, no = {}, {}
        for S, rows in P.items():
            if S & bit:
                yes[S] = no[S] = rows
            else:
                yes[S], no[S] = kernels.split_rows(rows, columns[f], t)
        if not T & bit:
            for S, rows in P.items():
                yes[S | bit] = no[S | bit] = rows
            T |= bit
        stack.append((int(tree.right[j]), T, no))
        stack.append((int(tree.left[j]), T, yes))
    return AugmentedTree(tree, leaves, n_b)


def _augment_counts(tree: Tree, X: np.ndarray) -> AugmentedTree:
    paths = tree.paths
    flat = kernels.leaf_counts(paths.fail_masks(X), paths.widths, paths.offsets)
    return AugmentedTree(tree, None, X.shape[0], flat_counts=flat)


def _to_local(S: int, feats: tuple[int, ...]) -> int:
    m = 0
    for p, g in enumerate(feats):
        if S >> g & 1:
            m |= 1 << p
    return m


def pd_evaluate(aug: AugmentedTree, x, s) -> float:
    """One tree's empirical PD at a single point by direct traversal.

    Splits on features in ``U = s ∩ F`` follow ``x``; all other splits send
    the traversal down both branches.
    """
    tree = aug.tree
    xv = np.asarray(x, dtype=np.float64)
    S = as_subset(s)
    if xv.ndim != 1 or not np.isfinite(xv).all():
        raise DataError("x must be a finite vector")
    if S.max_index() >= len(xv):
        raise DimensionError(f"subset {S!r} references a feature beyond {len(xv)} coordinates")
    if aug.split_features.max_index() >= len(xv):
        raise DimensionError("x has fewer coordinates than the tree uses")
    U = S & aug.split_features
    total = 0.0
    stack = [0]
    while stack:
        j = stack.pop()
        f = int(tree.feature[j])
        if f < 0:
            lf = aug.leaf(j)
            total += lf.value * (lf.counts[lf.local_mask(U)] / aug.n_b)
        elif f in U:
            stack.append(int(tree.left[j] if xv[f] < tree.threshold[j] else tree.right[j]))
        else:
            stack.append(int(tree.right[j]))
            stack.append(int(tree.left[j]))
    return total


def all_pd_per_tree(aug: AugmentedTree, x, budget: int = DEFAULT_BUDGET
                    ) -> dict[FeatureSubset, float]:
    """PD of one tree at ``x`` for every subset of its split features."""
    X = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if not np.isfinite(X).all():
        raise DataError("x must be finite")
    if aug.split_features.max_index() >= X.shape[1]:
        raise DimensionError("x has fewer coordinates than the tree uses")
    vals = aug.lattice(X, budget)[0]
    return {aug.local_to_global(m): float(v) for m, v in enumerate(vals)}


class PDCache:
    """Per-tree PD columns keyed by ``(tree, reduced subset, batch)``.

    Readers never lock; inserts are serialised. Two threads computing the
    same miss produce identical arrays, so a duplicate insert is harmless.
    """

    def __init__(self):
        self._data: dict[tuple, np.ndarray] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key):
        out = self._data.get(key)
        if out is None:
            self.misses += 1
        else:
            self.hits += 1
        return out

    def put(self, key, value: np.ndarray):
        value.setflags(write=False)
        with self._lock:
            self._data.setdefault(key, value)

    def clear(self):
        with self._lock:
            self._data.clear()

    def __len__(self):
        return len(self._data)


def batch_key(X: np.ndarray) -> str:
    h = hashlib.blake2b(digest_size=16)
    h.update(np.asarray(X.shape, dtype=np.int64).tobytes())
    h.update(np.ascontiguousarray(X).tobytes())
    return h.hexdigest()


class AugmentedEnsemble:
    """All trees of an ensemble augmented over one background sample."""

    def __init__(self, ensemble: TreeEnsemble, trees: Sequence[AugmentedTree], n_b: int):
        if len(trees) != len(ensemble.trees):
            raise DimensionError("one augmented tree per ensemble tree is required")
        self.ensemble = ensemble
        self.trees = tuple(trees)
        self.n_b = int(n_b)
        self.cache = PDCache()

    @property
    def num_features(self) -> int:
        return self.ensemble.num_features

    def _check_subsets(self, subsets) -> list[FeatureSubset]:
        out = [as_subset(s) for s in subsets]
        d = self.num_features
        for s in out:
            if s.max_index() >= d:
                raise DimensionError(f"subset {s!r} references a feature index >= {d}")
        return out

    def pd(self, X, subsets: Iterable, *, use_cache: bool = True) -> np.ndarray:
        """``v_S(x_S)`` for every row of ``X`` and every subset, ``(n_e, K)``."""
        X = check_points(X, self.num_features)
        subsets = self._check_subsets(subsets)
        key = batch_key(X) if use_cache else None
        out = np.full((X.shape[0], len(subsets)), float(self.ensemble.intercept))
        for t, aug in enumerate(self.trees):
            reduced = [aug.reduce(s) for s in subsets]
            cols: dict[FeatureSubset, np.ndarray] = {}
            todo = []
            for u in dict.fromkeys(reduced):
                hit = self.cache.get((t, u.bits, key)) if use_cache else None
                if hit is None:
                    todo.append(u)
                else:
                    cols[u] = hit
            if todo:
                vals = aug.evaluate(X, todo)
                for k, u in enumerate(todo):
                    col = np.ascontiguousarray(vals[:, k])
                    cols[u] = col
                    if use_cache:
                        self.cache.put((t, u.bits, key), col)
            for k, u in enumerate(reduced):
                out[:, k] += cols[u]
        return out

    def lattices(self, X, budget: int = DEFAULT_BUDGET) -> list[dict[FeatureSubset, np.ndarray]]:
        """Per-tree PD maps over each tree's own subset lattice."""
        X = check_points(X, self.num_features)
        out = []
        for aug in self.trees:
            vals = aug.lattice(X, budget)
            out.append({aug.local_to_global(m): vals[:, m] for m in range(vals.shape[1])})
        return out

    def decompose(self, X, budget: int = DEFAULT_BUDGET) -> Decomposition:
        X = check_points(X, self.num_features)
        return decompose(self.lattices(X, budget), self.ensemble.intercept, eval_points=X,
                         num_features=self.num_features,
                         feature_names=self.ensemble.feature_names)

    def shap(self, X, budget: int = DEFAULT_BUDGET) -> ShapMatrix:
        return shap_from_decomposition(self.decompose(X, budget))

    def compact(self) -> "AugmentedEnsemble":
        return AugmentedEnsemble(self.ensemble, [a.compact() for a in self.trees], self.n_b)


def augment_ensemble(ensemble: TreeEnsemble, background, *, keep_indices: bool = False,
                     budget_lists: int = DEFAULT_BUDGET,
                     threads: int | None = None) -> AugmentedEnsemble:
    X = as_matrix(background)
    if X.shape[1] != ensemble.num_features:
        raise DimensionError(
            f"background has {X.shape[1]} columns, model expects {ensemble.num_features}")

    def one(tree):
        return augment(tree, X, keep_indices=keep_indices, budget_lists=budget_lists)

    if threads and threads > 1 and len(ensemble.trees) > 1:
        with ThreadPoolExecutor(threads) as pool:
            trees = list(pool.map(one, ensemble.trees))
    else:
        trees = [one(t) for t in ensemble.trees]
    return AugmentedEnsemble(ensemble, trees, X.shape[0])


def pd_evaluate_ensemble(aug: AugmentedEnsemble, X, subsets, *, use_cache: bool = True
                         ) -> np.ndarray:
    return aug.pd(X, subsets, use_cache=use_cache)


# -- snapshots ---------------------------------------------------------------

SNAPSHOT_MAGIC = "FASTPD-AUG"
SNAPSHOT_VERSION = 1


def save_snapshot(aug: AugmentedEnsemble, path) -> None:
    """Write partition counts (not row lists) to an ``.npz`` archive."""

    header = {"magic": SNAPSHOT_MAGIC, "version": SNAPSHOT_VERSION,
              "model": aug.ensemble.fingerprint(), "n_b": aug.n_b,
              "trees": [[[lf.node, list(lf.features)] for lf in t.leaves] for t in aug.trees]}
    counts = [lf.counts for t in aug.trees for lf in t.leaves]
    offsets = np.cumsum([0] + [len(c) for c in counts])
    flat = np.concatenate(counts) if counts else np.zeros(0, dtype=np.int64)
    with open(path, "wb") as fh:
        np.savez(fh, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
                 counts=flat, offsets=offsets)


def load_snapshot(ensemble: TreeEnsemble, path) -> AugmentedEnsemble:
    with np.load(path) as z:
        header = json.loads(z["header"].tobytes().decode())
        flat, offsets = z["counts"], z["offsets"]
    if header.get("magic") != SNAPSHOT_MAGIC:
        raise ModelFormatError("not an augmentation snapshot")
    if header.get("version") != SNAPSHOT_VERSION:
        raise ModelFormatError(f"unsupported snapshot version {header.get('version')}")
    if header["model"] != ensemble.fingerprint():
        raise ModelFormatError("snapshot was built for a different model")
    trees, k = [], 0
    for tree, leaf_specs in zip(ensemble.trees, header["trees"]):
        leaves = []
        for node, feats in leaf_specs:
            leaves.append(AugmentedLeaf(int(node), float(tree.value[node]), tuple(feats),
                                        flat[offsets[k]:offsets[k + 1]].copy()))
            k += 1
        trees.append(AugmentedTree(tree, leaves, header["n_b"]))
    return AugmentedEnsemble(ensemble, trees, header["n_b"])
