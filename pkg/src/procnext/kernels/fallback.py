"""Pure-numpy implementations of the recurrent-gate kernels.

Reference semantics for the compiled extension; selected automatically when
the extension is unavailable (see package __init__). All functions take
C-contiguous 2D arrays of float32 or float64.
"""

from __future__ import annotations

import numpy as np


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def gru_cell_fwd(az, ar, cx, ch, h_prev):
    """Gate math of one GRU-style step from pre-activation sums.

    az, ar: update/reset pre-activations; cx: candidate input part (+bias);
    ch: candidate hidden part (gated by r). Returns (z, r, hbar, h_new) with
    h_new = z * h_prev + (1 - z) * hbar.
    """
    z = _sigmoid(az)
    r = _sigmoid(ar)
    hbar = np.tanh(cx + r * ch)
    h_new = z * h_prev + (1.0 - z) * hbar
    return z, r, hbar, h_new


def gru_cell_bwd(dh, z, r, hbar, ch, h_prev):
    """Backward of gru_cell_fwd; returns (daz, dar, dcx, dch, dh_prev_direct).

    dh_prev_direct covers only the elementwise z * h_prev path; contributions
    through the hidden convolutions are the caller's GEMM backward.
    """
    dz = dh * (h_prev - hbar)
    dhbar = dh * (1.0 - z)
    du = dhbar * (1.0 - hbar * hbar)
    dcx = du
    dr = du * ch
    dch = du * r
    daz = dz * z * (1.0 - z)
    dar = dr * r * (1.0 - r)
    dh_prev = dh * z
    return daz, dar, dcx, dch, dh_prev


def lstm_cell_fwd(gates, c_prev):
    """One LSTM step from packed pre-activations [i | f | g | o].

    Returns (acts, c_new, tc, h_new) where acts holds the post-activation
    gates in the same packing and tc = tanh(c_new).
    """
    h = c_prev.shape[1]
    i = _sigmoid(gates[:, :h])
    f = _sigmoid(gates[:, h:2 * h])
    g = np.tanh(gates[:, 2 * h:3 * h])
    o = _sigmoid(gates[:, 3 * h:])
    c_new = f * c_prev + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    acts = np.concatenate([i, f, g, o], axis=1)
    return acts, c_new, tc, h_new


def lstm_cell_bwd(dh, dc_in, acts, tc, c_prev):
    """Backward of lstm_cell_fwd; returns (dgates, dc_prev)."""
    h = c_prev.shape[1]
    i, f = acts[:, :h], acts[:, h:2 * h]
    g, o = acts[:, 2 * h:3 * h], acts[:, 3 * h:]
    do = dh * tc
    dc = dc_in + dh * o * (1.0 - tc * tc)
    di = dc * g
    df = dc * c_prev
    dg = dc * i
    dc_prev = dc * f
    dgates = np.concatenate(
        [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g), do * o * (1.0 - o)],
        axis=1,
    )
    return dgates, dc_prev


def scatter_add_rows(table, idx, rows):
    """table[idx[m]] += rows[m], accumulating over duplicate indices, in place."""
    np.add.at(table, idx, rows)
