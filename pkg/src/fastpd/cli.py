"""``fastpd`` command line: decompose, shap, pdplot and bench.

Exit codes: 0 on success, 2 for invalid input, 3 when the augmentation
budget guard refuses a model. Messages go to standard error.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .augment import (DEFAULT_BUDGET, augment_ensemble, load_snapshot, save_snapshot)
from .baseline import PathDependent, VanillaPD
from .bench import METHODS, WORKLOADS, run_bench, slopes, to_csv
from .data import Dataset, column_index, generate_dgp, load_csv, rng
from .errors import BudgetExceededError, DataError, EmptyDataError, FastPDError, ModelFormatError
from .explain import importance
from .model import FORMATS, TreeEnsemble, load_model
from .subsets import FeatureSubset

EXIT_OK, EXIT_INPUT, EXIT_BUDGET = 0, 2, 3


def _threads(args) -> int | None:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("FASTPD_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise DataError(f"FASTPD_THREADS must be an integer, got {env!r}") from None
    return None


def _read_table(path: str, what: str) -> Dataset:
    try:
        return load_csv(Path(path))
    except EmptyDataError:
        raise EmptyDataError(f"no {what} rows in {path}") from None
    except OSError as e:
        raise DataError(f"cannot read {what} file: {e}") from None


def _load_inputs(args) -> tuple[TreeEnsemble, Dataset]:
    try:
        ens = load_model(args.model, args.format, base_score=args.base_score)
    except OSError as e:
        raise ModelFormatError(f"cannot read model: {e}") from None
    bg = _read_table(args.background, "background")
    if bg.d != ens.num_features:
        raise DataError(f"background has {bg.d} columns, model expects {ens.num_features}")
    if ens.feature_names is None and bg.column_names is not None:
        ens = TreeEnsemble(ens.trees, ens.intercept, ens.num_features, bg.column_names)
    if args.n_background is not None and args.n_background < bg.n:
        pick = np.sort(rng(args.seed).choice(bg.n, size=args.n_background, replace=False))
        bg = Dataset(bg.values[pick], bg.column_names)
    return ens, bg


def _load_eval(args, ens: TreeEnsemble) -> np.ndarray:
    try:
        ev = _read_table(args.eval, "evaluation")
    except EmptyDataError:
        raise EmptyDataError("no evaluation rows") from None
    if ev.d != ens.num_features:
        raise DataError(f"evaluation file has {ev.d} columns, model expects {ens.num_features}")
    return ev.values


def _estimator(args, ens: TreeEnsemble, bg: Dataset):
    if args.method == "vanilla":
        return VanillaPD(ens, bg)
    if args.method == "path":
        return PathDependent(ens, bg)
    snap = getattr(args, "snapshot", None)
    if snap and Path(snap).exists():
        aug = load_snapshot(ens, snap)
        if aug.n_b != bg.n:
            raise DataError(f"snapshot was built from {aug.n_b} background rows, not {bg.n}")
        return aug
    aug = augment_ensemble(ens, bg, budget_lists=args.budget_lists, threads=_threads(args))
    if snap:
        save_snapshot(aug, snap)
    return aug


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _importance_table(decomp, top_k: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["component", "mean_abs"])
    for s, v in list(importance(decomp).items())[:top_k]:
        w.writerow([decomp.column_name(s), format(v, ".6g")])
    return buf.getvalue()


def cmd_decompose(args) -> int:
    ens, bg = _load_inputs(args)
    X = _load_eval(args, ens)
    est = _estimator(args, ens, bg)
    decomp = est.decompose(X).truncated(args.max_order)
    if args.prune:
        decomp = decomp.pruned()
    as_json = args.json or (args.out is not None and args.out.endswith(".json"))
    _emit(decomp.to_json() if as_json else decomp.to_csv(), args.out)
    summary = (f"intercept {decomp.intercept:.10g}\n"
               f"top {args.top_k} components by mean |m_S|\n"
               + _importance_table(decomp, args.top_k))
    if args.out is None:
        sys.stderr.write(summary)
    else:
        sys.stdout.write(summary)
    return EXIT_OK


def cmd_shap(args) -> int:
    ens, bg = _load_inputs(args)
    X = _load_eval(args, ens)
    phi = _estimator(args, ens, bg).shap(X)
    as_json = args.json or (args.out is not None and args.out.endswith(".json"))
    _emit(phi.to_json() if as_json else phi.to_csv(), args.out)
    return EXIT_OK


def cmd_pdplot(args) -> int:
    ens, bg = _load_inputs(args)
    k = column_index(args.feature, ens.names, ens.num_features)
    if args.eval is not None:
        X = _load_eval(args, ens)
        xs = X[:, k]
    else:
        if args.grid < 1:
            raise DataError("--grid must be at least 1")
        col = bg.values[:, k]
        xs = np.linspace(col.min(), col.max(), args.grid)
        # only coordinate k matters for v_k; the others just need to be finite
        X = np.tile(np.median(bg.values, axis=0), (len(xs), 1))
        X[:, k] = xs
    est = _estimator(args, ens, bg)
    vals = est.pd(X, [FeatureSubset.of([k])])[:, 0]
    order = np.argsort(xs, kind="stable")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([ens.names[k], "pd"])
    for i in order:
        w.writerow([format(float(xs[i]), ".17g"), format(float(vals[i]), ".17g")])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _method_list(text: str) -> list[str]:
    out = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in out if m not in METHODS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown methods {bad}; expected {METHODS}")
    return out


def cmd_bench(args) -> int:
    try:
        ens = load_model(args.model, args.format, base_score=args.base_score)
    except OSError as e:
        raise ModelFormatError(f"cannot read model: {e}") from None
    if args.data is not None:
        data = _read_table(args.data, "benchmark data").values
    else:
        data = generate_dgp(args.dgp, max(args.sizes), args.seed, dim=ens.num_features)[0].values
    if data.shape[1] != ens.num_features:
        raise DataError(f"data has {data.shape[1]} columns, model expects {ens.num_features}")
    rows = run_bench(ens, data, args.sizes, args.methods, repeats=args.repeats, seed=args.seed,
                     workload=args.workload, max_seconds=args.max_seconds)
    _emit(to_csv(rows), args.out)
    for method, slope in slopes(rows).items():
        sys.stderr.write(f"{method}: log-log slope {slope:.3f}\n")
    return EXIT_OK


def _common(p: argparse.ArgumentParser, *, background: bool = True) -> None:
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--format", choices=FORMATS, default="native-json")
    p.add_argument("--base-score", type=float, default=None,
                   help="intercept for xgboost dumps that do not carry one")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: FASTPD_THREADS, else all cores)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output file (default: standard output)")
    if background:
        p.add_argument("--background", required=True, help="background sample CSV")
        p.add_argument("--n-background", type=int, default=None,
                       help="use a seeded subsample of this many background rows")
        p.add_argument("--method", choices=METHODS, default="fastpd")
        p.add_argument("--budget-lists", type=int, default=DEFAULT_BUDGET,
                       help="maximum partition lists per tree")
        p.add_argument("--snapshot", default=None,
                       help="reuse (or create) an augmentation snapshot at this path")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fastpd",
                                 description="Partial dependence, functional decomposition "
                                             "and SHAP values for tree ensembles.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="functional decomposition at evaluation points")
    _common(p)
    p.add_argument("--eval", required=True, help="evaluation points CSV")
    p.add_argument("--max-order", type=int, default=None,
                   help="only output components of at most this many features")
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--prune", action="store_true", help="drop components that are zero on every row")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("shap", help="SHAP values at evaluation points")
    _common(p)
    p.add_argument("--eval", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_shap)

    p = sub.add_parser("pdplot", help="one-feature PD curve")
    _common(p)
    p.add_argument("--feature", required=True, help="feature name or 0-based index")
    p.add_argument("--grid", type=int, default=50, help="uniform grid size over the background range")
    p.add_argument("--eval", default=None, help="use this column of the evaluation rows instead")
    p.set_defaults(func=cmd_pdplot)

    p = sub.add_parser("bench", help="runtime against n_b = n_e = n")
    _common(p, background=False)
    p.add_argument("--data", default=None, help="CSV to subsample rows from")
    p.add_argument("--dgp", choices=("dgp1", "dgp2"), default="dgp2",
                   help="synthetic data when --data is not given")
    p.add_argument("--sizes", type=_int_list, default=[1000, 2000, 4000, 8000])
    p.add_argument("--methods", type=_method_list, default=list(METHODS))
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--workload", choices=WORKLOADS, default="first")
    p.add_argument("--max-seconds", type=float, default=None,
                   help="skip larger sizes of a method once a cell exceeds this")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        kernels.set_threads(_threads(args))
        if getattr(args, "max_order", None) is not None and args.max_order < 0:
            raise DataError("--max-order must be non-negative")
        return args.func(args)
    except BudgetExceededError as e:
        print(f"fastpd: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except FastPDError as e:
        print(f"fastpd: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
