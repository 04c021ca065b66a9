"""Tree ensembles as piecewise-constant functions.

A :class:`Tree` stores its nodes in flat arrays with the root at index 0.
Routing is strict: a point goes to the left child iff ``x[feature] <
threshold``. XGBoost uses the same convention; scikit-learn uses ``<=``,
which :func:`from_sklearn` converts by nudging every threshold up one ulp.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import kernels
from .errors import DataError, DimensionError, ModelFormatError, UnsupportedModelError
from .subsets import FeatureSubset

FORMATS = ("native-json", "xgboost-json")


@dataclass(frozen=True)
class Node:
    """One node of a parsed tree; leaves have ``feature is None``."""

    id: int
    feature: int | None = None
    threshold: float | None = None
    left: int | None = None
    right: int | None = None
    value: float | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass(frozen=True, eq=False)
class Tree:
    """A binary regression tree in array form.

    ``feature[j] == -1`` marks a leaf. ``node_ids`` keeps the identifiers of
    the source document so errors can name the offending node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    node_ids: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("feature", "threshold", "left", "right", "value", "node_ids"):
            getattr(self, name).setflags(write=False)

    @classmethod
    def from_nodes(cls, nodes: Sequence[Node]) -> "Tree":
        if not nodes:
            raise ModelFormatError("tree has no nodes")
        by_id: dict[int, Node] = {}
        for nd in nodes:
            if nd.id in by_id:
                raise ModelFormatError(f"duplicate node id {nd.id}")
            by_id[nd.id] = nd

        parent: dict[int, int] = {}
        for nd in nodes:
            if nd.is_leaf:
                if nd.left is not None or nd.right is not None:
                    raise ModelFormatError(f"leaf node {nd.id} has children")
                if nd.value is None or not np.isfinite(nd.value):
                    raise ModelFormatError(f"leaf node {nd.id} has no finite value")
                continue
            if nd.left is None or nd.right is None:
                raise ModelFormatError(f"internal node {nd.id} needs both children")
            if nd.threshold is None or not np.isfinite(nd.threshold):
                raise ModelFormatError(f"internal node {nd.id} has no finite threshold")
            if nd.feature < 0:
                raise ModelFormatError(f"node {nd.id} splits on negative feature {nd.feature}")
            for child in (nd.left, nd.right):
                if child not in by_id:
                    raise ModelFormatError(f"node {nd.id} references missing child {child}")
                if child in parent:
                    raise ModelFormatError(f"node {child} has more than one parent")
                parent[child] = nd.id

        roots = [nd.id for nd in nodes if nd.id not in parent]
        if len(roots) != 1:
            raise ModelFormatError(f"expected exactly one root, found {len(roots)}")

        # preorder relabelling; a cycle would leave nodes unreached
        order: list[int] = []
        stack = [roots[0]]
        while stack:
            nid = stack.pop()
            order.append(nid)
            nd = by_id[nid]
            if not nd.is_leaf:
                stack.append(nd.right)
                stack.append(nd.left)
        if len(order) != len(nodes):
            raise ModelFormatError("nodes do not form a single rooted tree")
        pos = {nid: i for i, nid in enumerate(order)}

        n = len(order)
        feature = np.full(n, -1, dtype=np.int64)
        threshold = np.full(n, np.nan)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        value = np.zeros(n)
        for i, nid in enumerate(order):
            nd = by_id[nid]
            if nd.is_leaf:
                value[i] = nd.value
            else:
                feature[i] = nd.feature
                threshold[i] = nd.threshold
                left[i] = pos[nd.left]
                right[i] = pos[nd.right]
        return cls(feature, threshold, left, right, value, np.asarray(order, dtype=np.int64))

    @classmethod
    def leaf(cls, value: float) -> "Tree":
        return cls.from_nodes([Node(0, value=float(value))])

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, j: int) -> bool:
        return self.feature[j] < 0

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        # preorder layout: parents precede children
        for j in range(self.n_nodes):
            if self.feature[j] >= 0:
                depth[self.left[j]] = depth[self.right[j]] = depth[j] + 1
        return int(depth.max())

    @cached_property
    def split_features(self) -> FeatureSubset:
        return FeatureSubset.of(np.unique(self.feature[self.feature >= 0]).tolist())

    @cached_property
    def paths(self) -> "LeafPaths":
        return LeafPaths.build(self)

    def nodes(self) -> list[Node]:
        out = []
        for j in range(self.n_nodes):
            if self.feature[j] < 0:
                out.append(Node(j, value=float(self.value[j])))
            else:
                out.append(Node(j, int(self.feature[j]), float(self.threshold[j]),
                                int(self.left[j]), int(self.right[j])))
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Leaf values for each row of a 2-d array (no input validation)."""
        leaf = kernels.route(self.feature, self.threshold, self.left, self.right, X)
        return self.value[leaf]

    def scaled(self, c: float) -> "Tree":
        return Tree(self.feature, self.threshold, self.left, self.right,
                    self.value * c, self.node_ids)


@dataclass(frozen=True, eq=False)
class LeafPaths:
    """Root-to-leaf split conditions of every leaf, packed for the kernels.

    Leaves are in preorder. Row ``j`` of the ``(L, depth)`` arrays lists the
    splits on the path to ``leaves[j]``; ``bit`` is the position of the split
    feature within ``features[j]``, the sorted path features of that leaf.
    """

    leaves: np.ndarray
    features: tuple[tuple[int, ...], ...]
    feature: np.ndarray
    threshold: np.ndarray
    went_left: np.ndarray
    bit: np.ndarray
    length: np.ndarray
    widths: np.ndarray
    offsets: np.ndarray
    members: np.ndarray
    members_tpos: np.ndarray

    @classmethod
    def build(cls, tree: "Tree") -> "LeafPaths":
        steps: dict[int, list] = {}
        stack: list[tuple[int, list]] = [(0, [])]
        while stack:
            j, path = stack.pop()
            if tree.feature[j] < 0:
                steps[j] = path
                continue
            f, t = int(tree.feature[j]), float(tree.threshold[j])
            stack.append((int(tree.right[j]), path + [(f, t, False)]))
            stack.append((int(tree.left[j]), path + [(f, t, True)]))
        leaves = np.array(sorted(steps), dtype=np.int64)
        L = len(leaves)
        width = max(1, max(len(p) for p in steps.values()))
        feature = np.zeros((L, width), dtype=np.int64)
        threshold = np.zeros((L, width))
        went_left = np.zeros((L, width), dtype=np.bool_)
        bit = np.zeros((L, width), dtype=np.int64)
        length = np.zeros(L, dtype=np.int64)
        feats = []
        for j, node in enumerate(leaves):
            path = steps[int(node)]
            fs = tuple(sorted({f for f, _, _ in path}))
            feats.append(fs)
            pos = {g: p for p, g in enumerate(fs)}
            length[j] = len(path)
            for s, (f, t, lft) in enumerate(path):
                feature[j, s], threshold[j, s], went_left[j, s] = f, t, lft
                bit[j, s] = pos[f]
        widths = np.array([len(fs) for fs in feats], dtype=np.int64)
        sizes = [1 << int(w) if w < 63 else 0 for w in widths]
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        # padded (L, max width) tables of each leaf's path features: global id and
        # position among the tree's split features; -1 pads
        tpos = {g: q for q, g in enumerate(tree.split_features.indices)}
        mw = max(1, int(widths.max(initial=0)))
        members = np.full((L, mw), -1, dtype=np.int64)
        members_tpos = np.full((L, mw), -1, dtype=np.int64)
        for j, fs in enumerate(feats):
            members[j, :len(fs)] = fs
            members_tpos[j, :len(fs)] = [tpos[g] for g in fs]
        out = cls(leaves, tuple(feats), feature, threshold, went_left, bit, length,
                  widths, offsets, members, members_tpos)
        for arr in (leaves, feature, threshold, went_left, bit, length, widths, offsets,
                    members, members_tpos):
            arr.setflags(write=False)
        return out

    @property
    def n_lists(self) -> int:
        """``sum_j 2^|T_j|``: lists created by augmentation."""
        return sum(1 << int(w) for w in self.widths)

    def fail_masks(self, X: np.ndarray) -> np.ndarray:
        """Per (row, leaf): leaf-local mask of path features whose split the row fails."""
        return kernels.leaf_fail_masks(self.feature, self.threshold, self.went_left,
                                       self.bit, self.length, X)


@dataclass(frozen=True, eq=False)
class TreeEnsemble:
    """``predict(x) = intercept + sum of tree predictions``."""

    trees: tuple[Tree, ...]
    intercept: float = 0.0
    num_features: int = 0
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        for t, tree in enumerate(self.trees):
            top = tree.split_features.max_index()
            if top >= self.num_features:
                raise ModelFormatError(
                    f"tree {t} splits on feature {top} but num_features={self.num_features}")
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != self.num_features:
                raise ModelFormatError("feature_names length does not match num_features")
            object.__setattr__(self, "feature_names", names)

    @property
    def names(self) -> tuple[str, ...]:
        if self.feature_names is not None:
            return self.feature_names
        return tuple(f"x{k}" for k in range(self.num_features))

    @property
    def max_depth(self) -> int:
        return max((t.depth for t in self.trees), default=0)

    def predict(self, x) -> float | np.ndarray:
        """Predict a single point (returns float) or every row of a matrix."""
        arr = np.asarray(x, dtype=np.float64)
        single = arr.ndim == 1
        X = check_points(arr, self.num_features)
        out = np.full(X.shape[0], float(self.intercept))
        for tree in self.trees:
            out += tree.predict(X)
        return float(out[0]) if single else out

    def scaled(self, c: float) -> "TreeEnsemble":
        """Every leaf value and the intercept multiplied by ``c``."""
        return TreeEnsemble(tuple(t.scaled(c) for t in self.trees), self.intercept * c,
                            self.num_features, self.feature_names)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.float64(self.intercept).tobytes())
        h.update(np.int64(self.num_features).tobytes())
        for t in self.trees:
            for arr in (t.feature, t.threshold, t.left, t.right, t.value):
                h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def predict(ensemble: TreeEnsemble, x) -> float | np.ndarray:
    return ensemble.predict(x)


def check_points(x, d: int) -> np.ndarray:
    """Validate evaluation points and return them as a C-contiguous 2-d array."""
    X = np.asarray(x, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise DimensionError(f"expected a vector or matrix, got {X.ndim} dimensions")
    if X.shape[1] != d:
        raise DimensionError(f"points have {X.shape[1]} coordinates, model expects {d}")
    if not np.isfinite(X).all():
        row, col = np.argwhere(~np.isfinite(X))[0]
        raise DataError(f"non-finite coordinate at row {row}, column {col}")
    return np.ascontiguousarray(X)


# --------------------------------------------------------------------------
# parsing

def parse_model(source, format: str = "native-json", *, base_score: float | None = None,
                num_features: int | None = None,
                feature_names: Sequence[str] | None = None) -> TreeEnsemble:
    """Parse a model document (JSON text or already-decoded object).

    ``base_score`` overrides the intercept for xgboost dumps, which do not
    carry it. ``num_features`` defaults to the metadata value, else to one
    past the largest split feature.
    """
    if isinstance(source, (bytes, bytearray)):
        source = source.decode("utf-8")
    if isinstance(source, str):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as e:
            raise ModelFormatError(f"invalid JSON: {e}") from None
    else:
        doc = source
    if format == "native-json":
        return _parse_native(doc, num_features, feature_names)
    if format == "xgboost-json":
        return _parse_xgboost(doc, base_score, num_features, feature_names)
    raise ModelFormatError(f"unknown model format {format!r}; expected one of {FORMATS}")


def load_model(path, format: str = "native-json", **kwargs) -> TreeEnsemble:
    return parse_model(Path(path).read_text(encoding="utf-8"), format, **kwargs)


_NATIVE_NODE_KEYS = {"id", "feature", "threshold", "left", "right", "value"}


def _parse_native(doc, num_features, feature_names) -> TreeEnsemble:
    if not isinstance(doc, dict) or "trees" not in doc:
        raise ModelFormatError("native-json document must be an object with a 'trees' array")
    trees = []
    for t, tdoc in enumerate(doc["trees"]):
        if not isinstance(tdoc, dict) or not isinstance(tdoc.get("nodes"), list):
            raise ModelFormatError(f"tree {t} must be an object with a 'nodes' array")
        nodes = []
        for nd in tdoc["nodes"]:
            if not isinstance(nd, dict) or "id" not in nd:
                raise ModelFormatError(f"tree {t}: every node needs an 'id'")
            extra = set(nd) - _NATIVE_NODE_KEYS
            if extra:
                raise UnsupportedModelError(
                    f"tree {t}, node {nd['id']}: unsupported fields {sorted(extra)}")
            try:
                nodes.append(Node(
                    id=int(nd["id"]),
                    feature=None if nd.get("feature") is None else int(nd["feature"]),
                    threshold=None if nd.get("threshold") is None else float(nd["threshold"]),
                    left=None if nd.get("left") is None else int(nd["left"]),
                    right=None if nd.get("right") is None else int(nd["right"]),
                    value=None if nd.get("value") is None else float(nd["value"]),
                ))
            except (TypeError, ValueError) as e:
                raise ModelFormatError(f"tree {t}, node {nd['id']}: {e}") from None
        try:
            trees.append(Tree.from_nodes(nodes))
        except ModelFormatError as e:
            raise type(e)(f"tree {t}: {e}") from None
    d = num_features if num_features is not None else doc.get("num_features")
    if d is None:
        d = _infer_d(trees)
    names = feature_names if feature_names is not None else doc.get("feature_names")
    return TreeEnsemble(tuple(trees), float(doc.get("intercept", 0.0)), int(d), names)


_FEATURE_RE = re.compile(r"^f(\d+)$")


def _parse_xgboost(doc, base_score, num_features, feature_names) -> TreeEnsemble:
    if isinstance(doc, dict) and "trees" in doc:
        # wrapper object {"base_score": ..., "trees": [...]}
        if base_score is None:
            base_score = doc.get("base_score")
        doc = doc["trees"]
    if not isinstance(doc, list):
        raise ModelFormatError("xgboost-json dump must be an array of tree objects")
    name_to_idx = {n: i for i, n in enumerate(feature_names)} if feature_names else {}

    def feature_index(split, t, nid) -> int:
        if isinstance(split, int):
            return split
        if split in name_to_idx:
            return name_to_idx[split]
        m = _FEATURE_RE.match(str(split))
        if m:
            return int(m.group(1))
        raise ModelFormatError(f"tree {t}, node {nid}: unknown feature {split!r}")

    trees = []
    for t, root in enumerate(doc):
        if isinstance(root, str):
            root = json.loads(root)
        nodes = []
        stack = [root]
        while stack:
            nd = stack.pop()
            if not isinstance(nd, dict) or "nodeid" not in nd:
                raise ModelFormatError(f"tree {t}: node record without 'nodeid'")
            nid = int(nd["nodeid"])
            if "leaf" in nd:
                nodes.append(Node(nid, value=float(nd["leaf"])))
                continue
            if "categories" in nd or "categories_nodes" in nd or \
                    isinstance(nd.get("split_condition"), list) or \
                    str(nd.get("split_type", "numerical")).lower().startswith("categor"):
                raise UnsupportedModelError(f"tree {t}, node {nid}: categorical split")
            try:
                node = Node(nid, feature_index(nd["split"], t, nid),
                            float(nd["split_condition"]), int(nd["yes"]), int(nd["no"]))
            except KeyError as e:
                raise ModelFormatError(f"tree {t}, node {nid}: missing field {e}") from None
            nodes.append(node)
            children = nd.get("children", [])
            if {int(c["nodeid"]) for c in children} != {node.left, node.right}:
                raise ModelFormatError(f"tree {t}, node {nid}: children do not match yes/no")
            stack.extend(children)
        try:
            trees.append(Tree.from_nodes(nodes))
        except ModelFormatError as e:
            raise type(e)(f"tree {t}: {e}") from None
    d = num_features
    if d is None:
        d = len(feature_names) if feature_names else _infer_d(trees)
    return TreeEnsemble(tuple(trees), float(base_score or 0.0), int(d), feature_names)


def _infer_d(trees: Iterable[Tree]) -> int:
    return max((t.split_features.max_index() + 1 for t in trees), default=0)


def to_native(ensemble: TreeEnsemble) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "num_features": ensemble.num_features,
        "intercept": float(ensemble.intercept),
        "trees": [{"nodes": [
            {"id": n.id, "feature": n.feature, "threshold": n.threshold,
             "left": n.left, "right": n.right, "value": n.value}
            for n in tree.nodes()]} for tree in ensemble.trees],
    }
    if ensemble.feature_names is not None:
        doc["feature_names"] = list(ensemble.feature_names)
    return doc


def serialize(ensemble: TreeEnsemble) -> str:
    """native-json text; float repr is shortest round-trip, so it is lossless."""
    return json.dumps(to_native(ensemble))


def save_model(ensemble: TreeEnsemble, path) -> None:
    Path(path).write_text(serialize(ensemble), encoding="utf-8")


def from_sklearn(estimator, num_features: int | None = None) -> TreeEnsemble:
    """Convert a fitted scikit-learn tree regressor.

    Supports ``DecisionTreeRegressor``, ``RandomForestRegressor``,
    ``ExtraTreesRegressor`` and ``GradientBoostingRegressor`` (squared error,
    constant init). Only single-output regressors are accepted.
    """
    from sklearn.ensemble import (ExtraTreesRegressor, GradientBoostingRegressor,
                                  RandomForestRegressor)
    from sklearn.tree import DecisionTreeRegressor

    if isinstance(estimator, DecisionTreeRegressor):
        parts, scale, intercept = [estimator.tree_], 1.0, 0.0
    elif isinstance(estimator, (RandomForestRegressor, ExtraTreesRegressor)):
        parts = [e.tree_ for e in estimator.estimators_]
        scale, intercept = 1.0 / len(parts), 0.0
    elif isinstance(estimator, GradientBoostingRegressor):
        parts = [e.tree_ for e in estimator.estimators_[:, 0]]
        scale = estimator.learning_rate
        init = estimator.init_
        if not hasattr(init, "constant_"):
            raise UnsupportedModelError("only constant-init gradient boosting is supported")
        intercept = float(np.ravel(init.constant_)[0])
    else:
        raise UnsupportedModelError(f"unsupported estimator {type(estimator).__name__}")

    trees = []
    for st in parts:
        if st.value.shape[1] != 1:
            raise UnsupportedModelError("multi-output trees are not supported")
        nodes = []
        for j in range(st.node_count):
            if st.children_left[j] < 0:
                nodes.append(Node(j, value=float(st.value[j, 0, 0]) * scale))
            else:
                # x <= t  <=>  x < nextafter(t, +inf)
                nodes.append(Node(j, int(st.feature[j]),
                                  float(np.nextafter(st.threshold[j], np.inf)),
                                  int(st.children_left[j]), int(st.children_right[j])))
        trees.append(Tree.from_nodes(nodes))
    d = num_features if num_features is not None else int(estimator.n_features_in_)
    return TreeEnsemble(tuple(trees), intercept, d)
