"""Hot loops, compiled with numba or run as plain numpy.

The backend is chosen once at import from ``FASTPD_BACKEND`` (``numba`` or
``numpy``). Without the variable, numba is used when it imports cleanly.
Both backends expose the same functions; :func:`get_backend` returns either
module explicitly, which the tests and the backend benchmark rely on.
"""

import importlib
import os

_CHOICES = ("numba", "numpy")


def get_backend(name: str):
    if name not in _CHOICES:
        raise ValueError(f"unknown backend {name!r}; expected one of {_CHOICES}")
    return importlib.import_module(f"{__name__}._{name}")


def _select():
    wanted = os.environ.get("FASTPD_BACKEND", "").strip().lower()
    if wanted:
        return get_backend(wanted)
    try:
        return get_backend("numba")
    except ImportError:
        return get_backend("numpy")


_impl = _select()
BACKEND = _impl.NAME

route = _impl.route
split_rows = _impl.split_rows
leaf_fail_masks = _impl.leaf_fail_masks
accumulate = _impl.accumulate
leaf_counts = _impl.leaf_counts
path_pd = _impl.path_pd
vanilla_pd = _impl.vanilla_pd


def set_threads(n: int | None) -> int:
    """Set the numba thread count (no-op for numpy). Returns the count in use."""
    if BACKEND != "numba":
        return 1
    import numba

    if n is None:
        env = os.environ.get("FASTPD_THREADS")
        n = int(env) if env else numba.config.NUMBA_NUM_THREADS
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n
