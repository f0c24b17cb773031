"""Pure-numpy GRU time recurrences (reference and fallback for ``_gru_ext``).

All arrays are time-major and C-contiguous. Gate blocks along the last axis
of ``gx``/``U`` are ordered [update z, reset r, candidate n]:

    z = sigmoid(gx_z + h U_z)
    r = sigmoid(gx_r + h U_r)
    n = tanh(gx_n + r * (h U_n))
    h' = (1 - z) * h + z * n
"""

import numpy as np


def _sigmoid(a):
    return 1.0 / (1.0 + np.exp(-a))


def gru_forward(gx, U):
    """gx: (T, B, 3H) input projections incl. bias; U: (H, 3H). Returns hs, z, r, n, ghn."""
    T, B, G = gx.shape
    H = G // 3
    dt = gx.dtype
    hs = np.empty((T, B, H), dt)
    z = np.empty((T, B, H), dt)
    r = np.empty((T, B, H), dt)
    n = np.empty((T, B, H), dt)
    ghn = np.empty((T, B, H), dt)
    h = np.zeros((B, H), dt)
    for t in range(T):
        gh = h @ U
        g = gx[t]
        z[t] = _sigmoid(g[:, :H] + gh[:, :H])
        r[t] = _sigmoid(g[:, H:2 * H] + gh[:, H:2 * H])
        ghn[t] = gh[:, 2 * H:]
        n[t] = np.tanh(g[:, 2 * H:] + r[t] * ghn[t])
        h = (1 - z[t]) * h + z[t] * n[t]
        hs[t] = h
    return hs, z, r, n, ghn


def gru_backward(dhs, hs, z, r, n, ghn, U):
    """Backprop through time. Returns dgx (T, B, 3H) and dgh (T, B, 3H).

    ``dgh[t]`` is the gradient w.r.t. ``h_{t-1} @ U``; callers form
    dU = sum_t h_{t-1}^T dgh[t].
    """
    T, B, H = hs.shape
    dt = hs.dtype
    dgx = np.empty((T, B, 3 * H), dt)
    dgh = np.empty((T, B, 3 * H), dt)
    dh_next = np.zeros((B, H), dt)
    zero = np.zeros((B, H), dt)
    for t in range(T - 1, -1, -1):
        dh = dhs[t] + dh_next
        hp = hs[t - 1] if t > 0 else zero
        zt, rt, nt = z[t], r[t], n[t]
        dan = dh * zt * (1 - nt * nt)
        dar = dan * ghn[t] * rt * (1 - rt)
        daz = dh * (nt - hp) * zt * (1 - zt)
        dgx[t, :, :H] = daz
        dgx[t, :, H:2 * H] = dar
        dgx[t, :, 2 * H:] = dan
        dgh[t, :, :H] = daz
        dgh[t, :, H:2 * H] = dar
        dgh[t, :, 2 * H:] = dan * rt
        dh_next = dh * (1 - zt) + dgh[t] @ U.T
    return dgx, dgh
