"""Backend selection and deterministic block scheduling.

The hot loops live in ``holderlab.kernels`` in two flavours: numba-compiled
(default) and pure numpy. ``HOLDERLAB_BACKEND=numpy`` forces the fallback;
it is also used automatically when numba cannot be imported.

Work over paths is cut into fixed-size blocks whose boundaries depend only
on the number of paths, never on the worker count. Blocks are executed by a
thread pool (numba kernels release the GIL) and their partial results are
combined in block order, so outputs are bitwise identical for any
``HOLDERLAB_WORKERS`` setting.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

#: Number of paths per scheduling block. Part of the reproducibility contract.
BLOCK_SIZE = 4096


def backend_name():
    """Return the active kernel backend, ``"numba"`` or ``"numpy"``."""
    want = os.environ.get("HOLDERLAB_BACKEND", "numba").strip().lower()
    if want not in ("numba", "numpy"):
        raise ValueError(f"HOLDERLAB_BACKEND must be 'numba' or 'numpy', got {want!r}")
    if want == "numba" and not HAVE_NUMBA:
        return "numpy"
    return want


def n_workers():
    """Worker count from ``HOLDERLAB_WORKERS`` (default 1)."""
    raw = os.environ.get("HOLDERLAB_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"HOLDERLAB_WORKERS must be an integer, got {raw!r}") from exc
    return max(1, n)


def block_ranges(n_items, block_size=BLOCK_SIZE):
    """Split ``range(n_items)`` into ``(start, stop)`` blocks."""
    return [(s, min(s + block_size, n_items)) for s in range(0, n_items, block_size)]


def run_blocks(fn, n_items, block_size=BLOCK_SIZE, workers=None):
    """Apply ``fn(start, stop)`` to every block and return results in block order.

    Parameters
    ----------
    fn : callable
        Called as ``fn(start, stop)``; must only touch its own slice of any
        shared output buffer.
    n_items : int
        Total number of items (paths).
    block_size : int, optional
        Items per block. Fixed so that reductions are schedule independent.
    workers : int, optional
        Thread count; defaults to :func:`n_workers`.

    Returns
    -------
    list
        ``fn`` results ordered by block start.
    """
    blocks = block_ranges(n_items, block_size)
    workers = n_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(blocks) <= 1:
        return [fn(s, e) for s, e in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, s, e) for s, e in blocks]
        return [f.result() for f in futures]
