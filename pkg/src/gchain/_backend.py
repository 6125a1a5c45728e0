"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``GCHAIN_PURE_PYTHON=1`` to force the fallback.
"""

import os
from types import SimpleNamespace

import numpy as np

from . import _fallback

_compiled = None
if os.environ.get("GCHAIN_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKENDS = {"python": _fallback}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

BACKEND = "cython" if _compiled is not None else "python"
_active = BACKENDS[BACKEND]


def get_backend(name):
    """Return a namespace with ``max_affine`` and ``quad_form`` for ``name``."""
    try:
        impl = BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {sorted(BACKENDS)}") from None
    return SimpleNamespace(name=name, max_affine=impl.max_affine, quad_form=impl.quad_form)


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def max_affine(gamma, points, offsets=None):
    """Per-row ``max_p <gamma, points[p]> - offsets[p]`` as a new array."""
    gamma = _c(gamma)
    points = _c(points)
    offsets = np.zeros(points.shape[0]) if offsets is None else _c(offsets)
    out = np.empty(gamma.shape[0])
    _active.max_affine(gamma, points, offsets, out)
    return out


def quad_form(gamma, matrix):
    """Per-row ``gamma^T matrix gamma`` as a new array."""
    gamma = _c(gamma)
    out = np.empty(gamma.shape[0])
    _active.quad_form(gamma, _c(matrix), out)
    return out
