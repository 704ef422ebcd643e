"""Counter-based Gaussian noise.

Every normal is a pure function of ``(seed, stream, path, step)``: the
Philox4x64-10 block at counter ``(step // 4, stream, path, 0)`` under key
``(seed, 0)`` yields four uniforms, turned into four normals by two
Box-Muller pairs. No generator state is carried between paths, so any
partition of paths across workers reproduces the same draws.

Stream ids in use: 0 main Q-path noise, 1 window (P-measure) noise,
2 coarse pre-window noise.
"""

import numpy as np

from .kernels import _np_core, impl

STREAM_MAIN = 0
STREAM_WINDOW = 1
STREAM_PRE = 2

_MASK64 = (1 << 64) - 1


def seed_key(seed):
    """Philox key words for a 64-bit seed."""
    seed = int(seed)
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    return np.uint64(seed), np.uint64(0)


def philox_block(counter, key):
    """Raw Philox4x64-10 output for one 4-word counter and 2-word key."""
    c = [np.array([v], dtype=np.uint64) for v in counter]
    out = _np_core.philox4x64(*c, np.uint64(key[0]), np.uint64(key[1]))
    return tuple(int(w[0]) for w in out)


def normals(seed, n_paths, n_steps, stream=STREAM_MAIN, path_offset=0, step_offset=0,
            backend=None):
    """Standard normals for a rectangle of (path, step) indices.

    Parameters
    ----------
    seed : int
        64-bit seed.
    n_paths, n_steps : int
        Shape of the result.
    stream : int, optional
        Stream id.
    path_offset, step_offset : int, optional
        Index of the first path and first step.
    backend : {"numba", "numpy"}, optional
        Override the active backend.

    Returns
    -------
    ndarray of shape (n_paths, n_steps)
    """
    k0, k1 = seed_key(seed)
    out = np.empty((int(n_paths), int(n_steps)))
    impl(backend).normals_block(k0, k1, int(stream), int(path_offset), int(step_offset), out)
    return out


def brownian_increments(seed, n_paths, n_steps, dt, stream=STREAM_MAIN, path_offset=0,
                        step_offset=0):
    """Brownian increments ``sqrt(dt) * Z`` on the same counter layout."""
    return np.sqrt(dt) * normals(seed, n_paths, n_steps, stream, path_offset, step_offset)
