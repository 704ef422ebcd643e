"""Kernel dispatch.

``impl()`` returns the module implementing the active backend (see
:func:`holderlab._accel.backend_name`). Both modules expose the same
functions: ``euler_block``, ``event_block``, ``window_block``,
``malliavin_block``, ``charfn_block`` and ``normals_block``.
"""

from .._accel import backend_name


def impl(name=None):
    """Kernel module for ``name`` (default: the active backend)."""
    name = backend_name() if name is None else name
    if name == "numba":
        from . import _nb

        return _nb
    if name == "numpy":
        from . import _np

        return _np
    raise ValueError(f"unknown backend {name!r}")
