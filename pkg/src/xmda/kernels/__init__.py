"""Numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import from the ``XMDA_NUMBA`` env var
(default: use numba when importable; set ``XMDA_NUMBA=0`` to force the
numpy path). ``set_backend`` allows switching in-process, which the
kernel benchmark uses to time both paths.
"""

import os

import numpy as np

from . import _numpy

_IMPL = _numpy
_BACKEND = "numpy"


def set_backend(name):
    global _IMPL, _BACKEND
    if name == "numba":
        from . import _numba
        _IMPL = _numba
        _BACKEND = "numba"
    elif name == "numpy":
        _IMPL = _numpy
        _BACKEND = "numpy"
    else:
        raise ValueError(f"unknown kernel backend {name!r}")


def backend_name():
    return _BACKEND


if os.environ.get("XMDA_NUMBA", "1") != "0":
    try:
        set_backend("numba")
    except ImportError:
        pass


# ---------------------------------------------------------------- dense 2D

def conv3x3_fwd(x, w, b):
    return _IMPL.conv3x3_fwd(x, w, b)


def conv3x3_bwd_input(gy, w):
    # correlation with the spatially flipped, channel-transposed kernel
    w_rot = np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2))
    zero = np.zeros(w.shape[2], dtype=gy.dtype)
    return _IMPL.conv3x3_fwd(gy, w_rot, zero)


def conv3x3_bwd_params(x, gy):
    return _IMPL.conv3x3_bwd_params(x, gy)


def maxpool2_fwd(x):
    return _IMPL.maxpool2_fwd(x)


def maxpool2_bwd(gy, idx, shape):
    if _BACKEND == "numba":
        b, h, w, c = shape
        return _IMPL.maxpool2_bwd(gy, idx, b, h, w, c)
    return _IMPL.maxpool2_bwd(gy, idx, shape)


def upsample2_fwd(x):
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def upsample2_bwd(gy):
    b, h, w, c = gy.shape
    return gy.reshape(b, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))


def gather_pixels(feat, bi, vi, ui):
    return feat[bi, vi, ui]


def scatter_pixels_add(shape, bi, vi, ui, g):
    if _BACKEND == "numba":
        b, h, w, c = shape
        return _IMPL.scatter_pixels_add(b, h, w, c, bi, vi, ui, g)
    return _IMPL.scatter_pixels_add(shape, bi, vi, ui, g)


# --------------------------------------------------------------- sparse 3D

def gather_rows(feat, idx):
    return feat[idx]


def scatter_rows_add(g, idx, nrows):
    return _IMPL.scatter_rows_add(g, np.ascontiguousarray(idx), nrows)


def segment_mean_fwd(x, seg, nseg):
    return _IMPL.segment_mean_fwd(x, np.ascontiguousarray(seg), nseg)


def segment_mean_bwd(gy, seg, counts):
    return gy[seg] / counts[seg][:, None]


def sparse_conv_fwd(feat, nbr, w, b):
    return _IMPL.sparse_conv_fwd(feat, nbr, w, b)


def sparse_conv_bwd_input(gy, nbr, w):
    # out[v] = sum_k feat[nbr[v,k]] @ w[k]; offsets are ordered so that
    # -offset[k] == offset[26-k], giving the adjoint as one more gather conv
    w_rev = np.ascontiguousarray(w[::-1].transpose(0, 2, 1))
    zero = np.zeros(w.shape[1], dtype=gy.dtype)
    return _IMPL.sparse_conv_fwd(gy, nbr, w_rev, zero)


def sparse_conv_bwd_params(feat, nbr, gy):
    return _IMPL.sparse_conv_bwd_params(feat, nbr, gy)


# ---------------------------------------------------------------- raycast

def raycast_grid(dirs, origin, cls, hgt, kind, half_x, half_y, ocx, ocy,
                 x0, y0, cell, max_range):
    return _IMPL.raycast_grid(
        np.ascontiguousarray(dirs, dtype=np.float64),
        np.ascontiguousarray(origin, dtype=np.float64),
        cls, hgt, kind, half_x, half_y, ocx, ocy,
        float(x0), float(y0), float(cell), float(max_range))
