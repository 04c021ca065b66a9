"""Background and evaluation data, CSV I/O and the synthetic DGPs.

Random draws use numpy's PCG64 bit generator with ziggurat normals
(``Generator.standard_normal``); correlated Gaussians are formed by
multiplying with the lower Cholesky factor of the covariance.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, EmptyDataError

FLOAT_FORMAT = ".17g"


@dataclass(frozen=True, eq=False)
class Dataset:
    values: np.ndarray
    column_names: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.array(self.values, dtype=np.float64, order="C", ndmin=2, copy=True)
        if X.ndim != 2:
            raise DataError(f"dataset must be 2-dimensional, got {X.ndim}")
        if X.shape[0] == 0:
            raise DataError("dataset has no rows")
        if not np.isfinite(X).all():
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise DataError(f"non-finite value at row {r}, column {c}")
        X.setflags(write=False)
        object.__setattr__(self, "values", X)
        if self.column_names is not None:
            names = tuple(str(c) for c in self.column_names)
            if len(names) != X.shape[1]:
                raise DataError(f"{len(names)} column names for {X.shape[1]} columns")
            object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def head(self, n: int) -> "Dataset":
        return Dataset(self.values[:n], self.column_names)

    def __len__(self):
        return self.n


def as_matrix(data) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.values
    return Dataset(data).values


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(source, has_header: bool | None = None) -> Dataset:
    """Read a rectangular numeric CSV from a path, text or file object.

    ``has_header=None`` treats the first row as a header when any of its
    cells is not a number.
    """
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                      and Path(source).is_file()):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    header = None
    if has_header is None:
        has_header = bool(rows) and not all(_is_number(c) for c in rows[0])
    if has_header:
        if not rows:
            raise EmptyDataError("empty table")
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    if not rows:
        raise EmptyDataError("empty table")
    width = len(header) if header is not None else len(rows[0])
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        lineno = i + 1 + (header is not None)
        if len(row) != width:
            raise DataError(f"row {lineno} has {len(row)} fields, expected {width}")
        for j, cell in enumerate(row):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise DataError(f"non-numeric cell {cell!r} at row {lineno}, column {j + 1}") from None
    return Dataset(out, header)


def save_csv(ds: Dataset, target=None) -> str:
    """Write with 17 significant digits; returns the text, writing it to ``target`` if given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if ds.column_names is not None:
        w.writerow(ds.column_names)
    for row in ds.values:
        w.writerow([format(v, FLOAT_FORMAT) for v in row])
    text = buf.getvalue()
    if target is not None:
        if hasattr(target, "write"):
            target.write(text)
        else:
            Path(target).write_text(text, encoding="utf-8")
    return text


def rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def dgp1_covariance(rho: float = 0.3) -> np.ndarray:
    return np.array([[1.0, rho], [rho, 1.0]])


def dgp1_target(X: np.ndarray) -> np.ndarray:
    return X[:, 0] + X[:, 1] + 2.0 * X[:, 0] * X[:, 1]


def dgp2_covariance(dim: int = 7) -> np.ndarray:
    # 3 I + 0.6 J with J the anti-diagonal identity; for odd dim the centre gets 3.6
    return 3.0 * np.eye(dim) + 0.6 * np.fliplr(np.eye(dim))


def dgp2_target(X: np.ndarray) -> np.ndarray:
    return (3.0 * np.sin(X[:, 0]) + 2.5 * np.cos(0.3 * X[:, 1]) + 1.12 * X[:, 2]
            + np.sin(X[:, 3] * X[:, 4]) + 0.7 * X[:, 5] * X[:, 6])


def generate_dgp(kind: str, n: int, seed: int, *, rho: float = 0.3, dim: int = 7,
                 noise_var: float | None = None) -> tuple[Dataset, np.ndarray]:
    """Draw ``n`` samples ``(X, Y)`` from ``dgp1`` or ``dgp2``.

    dgp1: X ~ N(0, [[1, rho], [rho, 1]]), Y ~ N(x1 + x2 + 2 x1 x2, 1).
    dgp2: X ~ N(0, 3 I + 0.6 J) in ``dim >= 7`` dimensions, Y ~ N(m(X), 0.1)
    with m using the first seven coordinates. ``noise_var`` overrides the
    noise variance.
    """
    if n < 1:
        raise DataError("n must be at least 1")
    if kind == "dgp1":
        cov, target, var = dgp1_covariance(rho), dgp1_target, 1.0
    elif kind == "dgp2":
        if dim < 7:
            raise DataError("dgp2 needs dim >= 7")
        cov, target, var = dgp2_covariance(dim), dgp2_target, 0.1
    else:
        raise DataError(f"unknown dgp {kind!r}")
    if noise_var is not None:
        var = noise_var
    g = rng(seed)
    chol = np.linalg.cholesky(cov)
    X = g.standard_normal((n, cov.shape[0])) @ chol.T
    y = target(X) + np.sqrt(var) * g.standard_normal(n)
    names = tuple(f"x{k + 1}" for k in range(cov.shape[0]))
    return Dataset(X, names), y


def four_atom_dataset() -> Dataset:
    """Four atoms with counts chosen so path-dependent PD is biased.

    Rows (0, 0) x500, (0, 0.4) x250, (0.7, 0) x250, (0.7, 0.4) x1500.
    """
    return Dataset(np.repeat(FOUR_ATOMS, FOUR_ATOM_COUNTS, axis=0), ("x1", "x2"))


FOUR_ATOMS = np.array([[0.0, 0.0], [0.0, 0.4], [0.7, 0.0], [0.7, 0.4]])
FOUR_ATOM_COUNTS = np.array([500, 250, 250, 1500])


def sample_four_atoms(n: int, seed: int) -> Dataset:
    """iid draws from the four-atom distribution with probabilities .2/.1/.1/.6."""
    g = rng(seed)
    k = g.choice(4, size=n, p=FOUR_ATOM_COUNTS / FOUR_ATOM_COUNTS.sum())
    return Dataset(FOUR_ATOMS[k], ("x1", "x2"))


def column_index(name_or_index: str | int, names: Sequence[str] | None, d: int) -> int:
    """Resolve a feature given by name or 0-based index."""
    if isinstance(name_or_index, int) or str(name_or_index).lstrip("-").isdigit():
        k = int(name_or_index)
        if not 0 <= k < d:
            raise DataError(f"feature index {k} out of range for {d} features")
        return k
    if names is not None and name_or_index in names:
        return list(names).index(name_or_index)
    raise DataError(f"unknown feature {name_or_index!r}")
