"""GRU kernel selection: compiled extension when importable, numpy otherwise.

Set ``SINV_PURE_PYTHON=1`` to force the numpy path.
"""

import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("SINV_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python kernels requested")
    from . import _gru_ext
except ImportError:
    _gru_ext = None

BACKEND = "cython" if _gru_ext is not None else "python"


def _impl(backend):
    if backend is None:
        backend = BACKEND
    if backend == "cython":
        if _gru_ext is None:
            raise RuntimeError("compiled GRU kernels are not available")
        return _gru_ext
    if backend == "python":
        return _pykernels
    raise ValueError(f"unknown kernel backend {backend!r}")


def gru_forward(gx, U, backend=None):
    gx = np.ascontiguousarray(gx)
    U = np.ascontiguousarray(U, dtype=gx.dtype)
    return _impl(backend).gru_forward(gx, U)


def gru_backward(dhs, hs, z, r, n, ghn, U, backend=None):
    dt = hs.dtype
    args = [np.ascontiguousarray(a, dtype=dt) for a in (dhs, hs, z, r, n, ghn, U)]
    return _impl(backend).gru_backward(*args)
