"""Compare the numba and numpy kernel backends on the same workload.

Each backend runs in its own interpreter because the backend is fixed at
import time by ``FASTPD_BACKEND``. Usage::

    python3 benchmarks/bench_backends.py --sizes 500,1000,2000 --methods fastpd,vanilla
"""

import argparse
import csv
import io
import os
import subprocess
import sys
import tempfile
from pathlib import Path

from fastpd.data import generate_dgp
from fastpd.model import from_sklearn, save_model


def build_model(path: Path, seed: int) -> None:
    from sklearn.ensemble import GradientBoostingRegressor

    data, y = generate_dgp("dgp2", 4000, seed=seed)
    model = GradientBoostingRegressor(n_estimators=20, max_depth=5, learning_rate=0.15,
                                      random_state=seed).fit(data.values, y)
    save_model(from_sklearn(model), path)


def run(backend: str, model: Path, args) -> list[dict]:
    env = dict(os.environ, FASTPD_BACKEND=backend)
    cmd = [sys.executable, "-m", "fastpd.cli", "bench", "--model", str(model),
           "--sizes", args.sizes, "--methods", args.methods, "--repeats", str(args.repeats),
           "--seed", str(args.seed), "--max-seconds", str(args.max_seconds)]
    proc = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return list(csv.DictReader(io.StringIO(proc.stdout)))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="500,1000,2000,4000")
    ap.add_argument("--methods", default="fastpd,vanilla,path")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-seconds", type=float, default=30.0)
    args = ap.parse_args(argv)
    with tempfile.TemporaryDirectory() as tmp:
        model = Path(tmp) / "model.json"
        build_model(model, args.seed)
        results = {b: run(b, model, args) for b in ("numba", "numpy")}
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["method", "n", "numba_seconds", "numpy_seconds", "speedup"])
    for a, b in zip(results["numba"], results["numpy"]):
        ta, tb = a["seconds"], b["seconds"]
        ratio = "NA" if "NA" in (ta, tb) else format(float(tb) / float(ta), ".1f")
        w.writerow([a["method"], a["n"], ta, tb, ratio])
    return 0


if __name__ == "__main__":
    sys.exit(main())
