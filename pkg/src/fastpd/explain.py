"""Functional decomposition, SHAP values, PD plots and component importance.

Everything here works on PD values ``v_U``, whichever estimator produced
them. Components are the Möbius inverse ``m_S = sum_{U ⊆ S} (-1)^{|S \\ U|} v_U``,
computed per tree over the tree's own split features and then summed across
trees under global subset keys.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DataError, DimensionError
from .subsets import EMPTY, FeatureSubset, as_subset, subset_sort_key

INTERCEPT_COLUMN = "__intercept"
BASELINE_COLUMN = "__baseline"
SHAP_DIRECT_MAX_D = 16


def mobius(values: np.ndarray) -> np.ndarray:
    """Möbius transform over the subset lattice along axis 0.

    ``values[m]`` holds ``v`` for the subset with bitmask ``m``; the length
    must be a power of two.
    """
    out = np.array(values, dtype=np.float64, copy=True)
    n = out.shape[0]
    F = n.bit_length() - 1
    if n != 1 << F:
        raise DataError(f"lattice length {n} is not a power of two")
    idx = np.arange(n)
    for i in range(F):
        hi = idx[(idx >> i) & 1 == 1]
        out[hi] -= out[hi ^ (1 << i)]
    return out


def zeta(values: np.ndarray) -> np.ndarray:
    """Inverse of :func:`mobius`: ``out[m] = sum of values[u] over u ⊆ m``."""
    out = np.array(values, dtype=np.float64, copy=True)
    n = out.shape[0]
    F = n.bit_length() - 1
    if n != 1 << F:
        raise DataError(f"lattice length {n} is not a power of two")
    idx = np.arange(n)
    for i in range(F):
        hi = idx[(idx >> i) & 1 == 1]
        out[hi] += out[hi ^ (1 << i)]
    return out


@dataclass(eq=False)
class Decomposition:
    """``m(x) = intercept + sum_S components[S](x_S)`` over evaluation rows."""

    intercept: float
    components: dict[FeatureSubset, np.ndarray]
    eval_points: np.ndarray | None = None
    num_features: int | None = None
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        comps = {as_subset(s): np.atleast_1d(np.asarray(v, dtype=np.float64))
                 for s, v in self.components.items()}
        if EMPTY in comps:
            raise DataError("the empty subset belongs in the intercept")
        self.components = dict(sorted(comps.items(), key=lambda kv: subset_sort_key(kv[0])))
        if self.num_features is None:
            self.num_features = max((s.max_index() + 1 for s in self.components), default=0)
        if self.feature_names is not None:
            self.feature_names = tuple(self.feature_names)

    @property
    def n_rows(self) -> int:
        if self.components:
            return len(next(iter(self.components.values())))
        return 0 if self.eval_points is None else len(self.eval_points)

    @property
    def names(self) -> tuple[str, ...]:
        if self.feature_names is not None:
            return self.feature_names
        return tuple(f"x{k}" for k in range(self.num_features))

    def component(self, s) -> np.ndarray:
        """``m_S`` per row; subsets the model never splits on jointly are zero."""
        s = as_subset(s)
        if not s:
            return np.full(max(self.n_rows, 1), self.intercept)
        got = self.components.get(s)
        return np.zeros(max(self.n_rows, 1)) if got is None else got

    def total(self) -> np.ndarray:
        out = np.full(max(self.n_rows, 1), float(self.intercept))
        for v in self.components.values():
            out = out + v
        return out

    def value_function(self, s) -> np.ndarray:
        """``v_S`` rebuilt from components: intercept plus every ``m_U`` with ``U ⊆ S``."""
        s = as_subset(s)
        out = np.full(max(self.n_rows, 1), float(self.intercept))
        for u, v in self.components.items():
            if u.issubset(s):
                out = out + v
        return out

    def truncated(self, max_order: int | None) -> "Decomposition":
        if max_order is None:
            return self
        return Decomposition(self.intercept,
                             {s: v for s, v in self.components.items() if len(s) <= max_order},
                             self.eval_points, self.num_features, self.feature_names)

    def pruned(self) -> "Decomposition":
        """Drop components that are exactly zero on every row."""
        return Decomposition(self.intercept,
                             {s: v for s, v in self.components.items() if np.any(v != 0.0)},
                             self.eval_points, self.num_features, self.feature_names)

    def column_name(self, s: FeatureSubset) -> str:
        return s.name(self.names)

    def to_csv(self, fmt: str = ".17g") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        subsets = list(self.components)
        w.writerow([INTERCEPT_COLUMN] + [self.column_name(s) for s in subsets])
        icpt = format(float(self.intercept), fmt)
        for i in range(self.n_rows):
            w.writerow([icpt] + [format(float(self.components[s][i]), fmt) for s in subsets])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "intercept": float(self.intercept),
            "feature_names": list(self.names),
            "components": {self.column_name(s): v.tolist() for s, v in self.components.items()},
        })


@dataclass(eq=False)
class ShapMatrix:
    values: np.ndarray
    baseline: float
    feature_names: tuple[str, ...] | None = field(default=None)

    @property
    def names(self) -> tuple[str, ...]:
        if self.feature_names is not None:
            return tuple(self.feature_names)
        return tuple(f"x{k}" for k in range(self.values.shape[1]))

    def predictions(self) -> np.ndarray:
        return self.baseline + self.values.sum(axis=1)

    def to_csv(self, fmt: str = ".17g") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([BASELINE_COLUMN, *self.names])
        base = format(float(self.baseline), fmt)
        for row in self.values:
            w.writerow([base] + [format(float(v), fmt) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"baseline": float(self.baseline), "feature_names": list(self.names),
                           "values": self.values.tolist()})


def decompose(lattices: Sequence[Mapping], intercept: float = 0.0, *,
              eval_points=None, num_features: int | None = None,
              feature_names: Sequence[str] | None = None) -> Decomposition:
    """Möbius-invert per-tree PD maps and sum the components across trees.

    Each map sends every subset of one tree's split features to PD values
    (a scalar or one value per evaluation row). ``intercept`` is the model's
    base score; every tree's ``v_∅`` is folded into it.
    """
    total_icpt = float(intercept)
    comps: dict[FeatureSubset, np.ndarray] = {}
    for t, lat in enumerate(lattices):
        lat = {as_subset(s): np.atleast_1d(np.asarray(v, dtype=np.float64))
               for s, v in lat.items()}
        if not lat:
            raise DataError(f"tree {t}: empty PD map")
        F = FeatureSubset(0)
        for s in lat:
            F = F | s
        feats = F.indices
        V = []
        for m in range(1 << len(feats)):
            s = FeatureSubset.of(g for q, g in enumerate(feats) if m >> q & 1)
            if s not in lat:
                raise DataError(f"tree {t}: incomplete lattice, missing subset {s!r}")
            V.append(lat[s])
        try:
            V = np.vstack(np.broadcast_arrays(*V))
        except ValueError:
            raise DimensionError(f"tree {t}: PD vectors differ in length") from None
        M = mobius(V)
        base = M[0]
        if np.ptp(base) != 0.0:
            raise DataError(f"tree {t}: v_∅ differs across rows")
        total_icpt += float(base[0])
        for m in range(1, M.shape[0]):
            s = FeatureSubset.of(g for q, g in enumerate(feats) if m >> q & 1)
            comps[s] = comps[s] + M[m] if s in comps else M[m].copy()
    n_rows = {len(v) for v in comps.values()}
    if len(n_rows) > 1:
        # scalar components (constant trees) broadcast against per-row ones
        n = max(n_rows)
        comps = {s: np.broadcast_to(v, (n,)).copy() for s, v in comps.items()}
    pts = None if eval_points is None else np.asarray(
        eval_points.values if hasattr(eval_points, "values") else eval_points, dtype=np.float64)
    return Decomposition(total_icpt, comps, pts, num_features,
                         tuple(feature_names) if feature_names is not None else None)


def shap_from_decomposition(decomp: Decomposition) -> ShapMatrix:
    """``phi_k = sum over S containing k of m_S / |S|``; baseline is the intercept."""
    d = decomp.num_features
    phi = np.zeros((max(decomp.n_rows, 1), d))
    for s, v in decomp.components.items():
        share = v / len(s)
        for k in s:
            phi[:, k] += share
    return ShapMatrix(phi, float(decomp.intercept), decomp.feature_names)


def shapley_weight(size: int, d: int) -> float:
    """``|S|! (d - |S| - 1)! / d!`` via log-gamma."""
    return math.exp(math.lgamma(size + 1) + math.lgamma(d - size) - math.lgamma(d + 1))


def shap_direct(pd: Callable[[np.ndarray, FeatureSubset], float], x, k: int, d: int | None = None,
                *, max_d: int = SHAP_DIRECT_MAX_D) -> float:
    """Brute-force Shapley value of feature ``k`` at ``x`` over all ``2^(d-1)`` coalitions.

    ``pd(x, S)`` must return the value function ``v_S(x_S)``.
    """
    x = np.asarray(x, dtype=np.float64)
    d = len(x) if d is None else d
    if d > max_d:
        raise DimensionError(f"d={d} exceeds the enumeration limit of {max_d}")
    if not 0 <= k < d:
        raise DimensionError(f"feature {k} out of range for d={d}")
    others = [j for j in range(d) if j != k]
    total = 0.0
    for m in range(1 << (d - 1)):
        s = FeatureSubset.of(others[q] for q in range(d - 1) if m >> q & 1)
        delta = pd(x, s.add(k)) - pd(x, s)
        total += shapley_weight(len(s), d) * delta
    return total


def pd_plot(decomp: Decomposition, k: int) -> np.ndarray:
    """Rows ``(x_k, m_0 + m_k(x_k))`` sorted by ``x_k``."""
    if decomp.eval_points is None:
        raise DataError("decomposition carries no evaluation points")
    if not 0 <= k < decomp.num_features:
        raise DimensionError(f"feature {k} out of range for {decomp.num_features} features")
    xk = decomp.eval_points[:, k]
    vk = decomp.intercept + decomp.component(FeatureSubset.of([k]))
    order = np.argsort(xk, kind="stable")
    return np.column_stack([xk[order], np.broadcast_to(vk, xk.shape)[order]])


def importance(decomp: Decomposition) -> dict[FeatureSubset, float]:
    """Mean absolute component value per subset, largest first."""
    imp = {s: float(np.mean(np.abs(v))) for s, v in decomp.components.items()}
    return dict(sorted(imp.items(), key=lambda kv: (-kv[1], subset_sort_key(kv[0]))))


def interaction_closed_form(x, exy: float) -> dict[str, float]:
    """Closed-form decomposition of ``m(x) = x1 + 2 x1 x2`` for centred ``X``.

    ``exy`` is ``E[X1 X2]``. Keys: ``m0, m1, m2, m12, phi1``.
    """
    x1, x2 = float(x[0]), float(x[1])
    return {
        "m0": 2.0 * exy,
        "m1": x1 - 2.0 * exy,
        "m2": -2.0 * exy,
        "m12": 2.0 * x1 * x2 + 2.0 * exy,
        "phi1": x1 + x1 * x2 - exy,
    }
