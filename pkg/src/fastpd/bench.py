"""Wall-clock timing of the PD estimators with ``n_b = n_e = n``."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .augment import augment_ensemble
from .baseline import PathDependent, VanillaPD
from .data import as_matrix, rng
from .errors import DataError
from .model import TreeEnsemble
from .subsets import FeatureSubset

METHODS = ("fastpd", "vanilla", "path")
WORKLOADS = ("first", "singletons", "decompose")


@dataclass(frozen=True)
class Timing:
    method: str
    n: int
    seconds: float | None

    @property
    def failed(self) -> bool:
        return self.seconds is None


def workload_subsets(workload: str, d: int) -> list[FeatureSubset]:
    if workload == "first":
        return [FeatureSubset.of([0])]
    if workload == "singletons":
        return [FeatureSubset.of([k]) for k in range(d)]
    raise DataError(f"unknown workload {workload!r}; expected one of {WORKLOADS}")


def run_method(method: str, ensemble: TreeEnsemble, X: np.ndarray, workload: str = "first"):
    """One full estimate: build the estimator on ``X`` and evaluate it at ``X``."""
    if method == "fastpd":
        est = augment_ensemble(ensemble, X)
    elif method == "vanilla":
        est = VanillaPD(ensemble, X)
    elif method == "path":
        est = PathDependent(ensemble, X)
    else:
        raise DataError(f"unknown method {method!r}; expected one of {METHODS}")
    if workload == "decompose":
        return est.decompose(X)
    subsets = workload_subsets(workload, ensemble.num_features)
    if method == "fastpd":
        return est.pd(X, subsets, use_cache=False)
    return est.pd(X, subsets)


def median_seconds(fn: Callable[[], object], repeats: int) -> float:
    times = []
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def run_bench(ensemble: TreeEnsemble, data, sizes: Sequence[int],
              methods: Sequence[str] = METHODS, *, repeats: int = 3, seed: int = 0,
              workload: str = "first", max_seconds: float | None = None) -> list[Timing]:
    """Median timings per (method, n).

    Rows are a seeded subsample of ``data`` without replacement. A cell that
    raises, or follows a cell of the same method slower than
    ``max_seconds``, is recorded with ``seconds=None``.
    """
    X = as_matrix(data)
    sizes = [int(n) for n in sizes]
    if sizes != sorted(sizes):
        raise DataError("sizes must be ascending")
    order = rng(seed).permutation(X.shape[0])
    # warm up at the smallest size so compilation and first-touch costs stay untimed
    n_warm = max(1, min(sizes[0], len(order))) if sizes else 1
    warm = np.ascontiguousarray(X[order[:n_warm]])
    out = []
    for method in methods:
        try:
            run_method(method, ensemble, warm, workload)
        except Exception:
            pass
        skip = False
        for n in sizes:
            secs = None
            if not skip and 0 < n <= X.shape[0]:
                sample = np.ascontiguousarray(X[order[:n]])
                try:
                    secs = median_seconds(lambda: run_method(method, ensemble, sample, workload),
                                          repeats)
                except Exception:
                    secs = None
            if secs is not None and max_seconds is not None and secs > max_seconds:
                skip = True
            out.append(Timing(method, n, secs))
    return out


def to_csv(rows: Sequence[Timing]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "n", "seconds"])
    for r in rows:
        w.writerow([r.method, r.n, "NA" if r.seconds is None else format(r.seconds, ".6g")])
    return buf.getvalue()


def loglog_slope(ns: Sequence[float], seconds: Sequence[float]) -> float:
    """Least-squares slope of ``log(seconds)`` against ``log(n)``."""
    pts = [(n, s) for n, s in zip(ns, seconds) if s is not None and s > 0]
    if len(pts) < 2:
        return math.nan
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])


def slopes(rows: Sequence[Timing]) -> dict[str, float]:
    out = {}
    for method in dict.fromkeys(r.method for r in rows):
        cells = [r for r in rows if r.method == method]
        out[method] = loglog_slope([r.n for r in cells], [r.seconds for r in cells])
    return out
