"""Differentiable building blocks: graph convolution, GRU-with-GCN cell,
LSTM, max readout, embeddings, softmax classifier.

Every forward function returns the values a hand-written backward needs; the
backward functions produce exact analytic gradients (verified against central
finite differences in the test suite). Arrays are batch-first; node-dimension
shapes are (batch, n_nodes, features). The elementwise gate math is delegated
to :mod:`procnext.kernels`, everything matrix-shaped stays in BLAS.
"""

from __future__ import annotations

from typing import Mapping, MutableMapping, Sequence

import numpy as np

from .. import kernels

GATE_NAMES = ("Wxz", "Whz", "Wxr", "Whr", "Wxh", "Whh")
BIAS_NAMES = ("bz", "br", "bh")


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def gcn_forward(a_hat: np.ndarray, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Directed graph convolution: exact product a_hat @ x @ theta.

    ``a_hat`` is the row-normalized adjacency (n, n); ``x`` is (..., n, F_in);
    ``theta`` is (F_in, F_out).
    """
    if a_hat.shape[0] != a_hat.shape[1] or x.shape[-2] != a_hat.shape[0]:
        raise ValueError(f"shape mismatch: a_hat {a_hat.shape}, x {x.shape}")
    if x.shape[-1] != theta.shape[0]:
        raise ValueError(f"shape mismatch: x {x.shape}, theta {theta.shape}")
    return (a_hat @ x) @ theta


# ---------------------------------------------------------------------------
# GRU cell with graph convolutions (one step)

def grnn_step(cell: Mapping[str, np.ndarray], a_hat: np.ndarray,
              x_t: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
    """One recurrent step; returns the next hidden state (same shape as h_prev).

    Gate placement: z and r are logistic in the summed convolutions plus bias;
    the candidate tanh gates the hidden convolution by r; the new state is
    z * h_prev + (1 - z) * candidate.
    """
    h_t, _ = _grnn_step_cached(cell, a_hat, x_t[None] if x_t.ndim == 2 else x_t,
                               h_prev[None] if h_prev.ndim == 2 else h_prev)
    if not np.isfinite(h_t).all():
        raise FloatingPointError("non-finite hidden state in recurrent step")
    return h_t[0] if x_t.ndim == 2 else h_t


def _grnn_step_cached(cell, a_hat, x_t, h_prev):
    b, n, _ = x_t.shape
    h = h_prev.shape[-1]
    xc = a_hat @ x_t
    hc = a_hat @ h_prev
    az = xc @ cell["Wxz"] + hc @ cell["Whz"] + cell["bz"]
    ar = xc @ cell["Wxr"] + hc @ cell["Whr"] + cell["br"]
    cx = xc @ cell["Wxh"] + cell["bh"]
    ch = hc @ cell["Whh"]
    z, r, hbar, h_new = kernels.gru_cell_fwd(
        az.reshape(-1, h), ar.reshape(-1, h), cx.reshape(-1, h),
        ch.reshape(-1, h), np.ascontiguousarray(h_prev).reshape(-1, h))
    cache = (xc, hc, z, r, hbar, ch.reshape(-1, h), h_prev)
    return h_new.reshape(b, n, h), cache


def grnn_cell_forward(cell, a_hat, x_seq, mask):
    """Run one cell over a padded sequence (B, L, n, F); masked steps carry state.

    Returns (h_seq, caches) with h_seq of shape (B, L, n, H).
    """
    b, length, n, _ = x_seq.shape
    h = cell["Whh"].shape[0]
    dtype = cell["Whh"].dtype
    h_prev = np.zeros((b, n, h), dtype=dtype)
    h_seq = np.zeros((b, length, n, h), dtype=dtype)
    caches = []
    for t in range(length):
        h_new, cache = _grnn_step_cached(cell, a_hat, np.ascontiguousarray(x_seq[:, t]), h_prev)
        m = mask[:, t].astype(dtype)[:, None, None]
        h_t = m * h_new + (1.0 - m) * h_prev
        caches.append((cache, m))
        h_seq[:, t] = h_t
        h_prev = h_t
    return h_seq, caches


def grnn_cell_backward(cell, a_hat_t, dh_seq, caches, grads: MutableMapping[str, np.ndarray],
                       prefix: str):
    """Backward through one cell; accumulates into grads[prefix + name].

    ``dh_seq`` holds gradients w.r.t. each post-mask state; returns the
    gradient w.r.t. the input sequence.
    """
    b, length, n, h = dh_seq.shape
    f_in = cell["Wxz"].shape[0]
    dx_seq = np.zeros((b, length, n, f_in), dtype=dh_seq.dtype)
    dh_next = np.zeros((b, n, h), dtype=dh_seq.dtype)
    for t in range(length - 1, -1, -1):
        (xc, hc, z, r, hbar, ch_flat, h_prev), m = caches[t]
        dh_t = dh_seq[:, t] + dh_next
        dh_new = (dh_t * m).reshape(-1, h)
        daz, dar, dcx, dch, dhp = kernels.gru_cell_bwd(
            np.ascontiguousarray(dh_new), z, r, hbar, ch_flat,
            np.ascontiguousarray(h_prev).reshape(-1, h))
        xc_flat = xc.reshape(-1, f_in)
        hc_flat = hc.reshape(-1, h)
        grads[prefix + "Wxz"] += xc_flat.T @ daz
        grads[prefix + "Whz"] += hc_flat.T @ daz
        grads[prefix + "Wxr"] += xc_flat.T @ dar
        grads[prefix + "Whr"] += hc_flat.T @ dar
        grads[prefix + "Wxh"] += xc_flat.T @ dcx
        grads[prefix + "Whh"] += hc_flat.T @ dch
        grads[prefix + "bz"] += daz.sum(axis=0)
        grads[prefix + "br"] += dar.sum(axis=0)
        grads[prefix + "bh"] += dcx.sum(axis=0)
        dxc = daz @ cell["Wxz"].T + dar @ cell["Wxr"].T + dcx @ cell["Wxh"].T
        dhc = daz @ cell["Whz"].T + dar @ cell["Whr"].T + dch @ cell["Whh"].T
        dx_seq[:, t] = a_hat_t @ dxc.reshape(b, n, f_in)
        dh_next = (a_hat_t @ dhc.reshape(b, n, h)) + dhp.reshape(b, n, h)
        dh_next += dh_t * (1.0 - m)
    return dx_seq


def grnn_forward(cells: Sequence[Mapping[str, np.ndarray]], a_hat: np.ndarray,
                 x_seq: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Stacked cells over a sequence; returns the top cell's state sequence."""
    if x_seq.ndim == 3:  # single item, no batch axis
        out = grnn_forward(cells, a_hat, x_seq[None], mask[None])
        return out[0]
    h_seq = x_seq
    for cell in cells:
        h_seq, _ = grnn_cell_forward(cell, a_hat, h_seq, mask)
    return h_seq


# ---------------------------------------------------------------------------
# max readout over the node dimension

def readout(h_seq: np.ndarray) -> np.ndarray:
    """Coordinate-wise max over nodes: (..., n, H) -> (..., H)."""
    if h_seq.shape[-2] == 0:
        raise ValueError("readout over zero nodes")
    return h_seq.max(axis=-2)


def readout_forward(h_seq: np.ndarray):
    am = h_seq.argmax(axis=-2)
    g = np.take_along_axis(h_seq, am[..., None, :], axis=-2).squeeze(-2)
    return g, am


def readout_backward(dg: np.ndarray, am: np.ndarray, n: int) -> np.ndarray:
    shape = dg.shape[:-1] + (n, dg.shape[-1])
    dh = np.zeros(shape, dtype=dg.dtype)
    np.put_along_axis(dh, am[..., None, :], dg[..., None, :], axis=-2)
    return dh


# ---------------------------------------------------------------------------
# LSTM (attribute encoder)

def lstm_layer_forward(wx, wh, b, x_seq, mask):
    """One LSTM layer over (B, L, U); masked steps carry h and c unchanged."""
    bsz, length, _ = x_seq.shape
    h = wh.shape[0]
    dtype = wh.dtype
    h_prev = np.zeros((bsz, h), dtype=dtype)
    c_prev = np.zeros((bsz, h), dtype=dtype)
    h_seq = np.zeros((bsz, length, h), dtype=dtype)
    caches = []
    for t in range(length):
        gates = x_seq[:, t] @ wx + h_prev @ wh + b
        acts, c_new, tc, h_new = kernels.lstm_cell_fwd(
            np.ascontiguousarray(gates), np.ascontiguousarray(c_prev))
        m = mask[:, t].astype(dtype)[:, None]
        h_t = m * h_new + (1.0 - m) * h_prev
        c_t = m * c_new + (1.0 - m) * c_prev
        caches.append((np.ascontiguousarray(x_seq[:, t]), h_prev, c_prev, acts, tc, m))
        h_seq[:, t] = h_t
        h_prev, c_prev = h_t, c_t
    return h_seq, caches


def lstm_layer_backward(wx, wh, dh_seq, caches, grads, prefix):
    bsz, length, h = dh_seq.shape
    u = wx.shape[0]
    dx_seq = np.zeros((bsz, length, u), dtype=dh_seq.dtype)
    dh_next = np.zeros((bsz, h), dtype=dh_seq.dtype)
    dc_next = np.zeros((bsz, h), dtype=dh_seq.dtype)
    for t in range(length - 1, -1, -1):
        x_t, h_prev, c_prev, acts, tc, m = caches[t]
        dh_t = dh_seq[:, t] + dh_next
        dgates, dc_prev = kernels.lstm_cell_bwd(
            np.ascontiguousarray(dh_t * m), np.ascontiguousarray(dc_next * m),
            acts, tc, np.ascontiguousarray(c_prev))
        grads[prefix + "Wx"] += x_t.T @ dgates
        grads[prefix + "Wh"] += h_prev.T @ dgates
        grads[prefix + "b"] += dgates.sum(axis=0)
        dx_seq[:, t] = dgates @ wx.T
        dh_next = dgates @ wh.T + dh_t * (1.0 - m)
        dc_next = dc_prev + dc_next * (1.0 - m)
    return dx_seq


def attribute_forward(layers_params: Sequence[tuple], x_seq: np.ndarray,
                      mask: np.ndarray) -> np.ndarray:
    """Stacked LSTM over per-step [attribute embeddings ⊕ readout]; returns the
    top layer's hidden state at each sequence's last real step."""
    h_seq = x_seq
    for wx, wh, b in layers_params:
        h_seq, _ = lstm_layer_forward(wx, wh, b, h_seq, mask)
    return h_seq[:, -1]


# ---------------------------------------------------------------------------
# classifier

def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax over the last axis (max-subtracted)."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def classify(hidden: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Probability vector(s) over the activity classes plus end-of-case."""
    return softmax(hidden @ w + b)


def nll_loss(probabilities: np.ndarray, target: int) -> float:
    """Negative log probability of the target class."""
    return float(-np.log(probabilities[..., target]))


def cross_entropy_from_logits(logits: np.ndarray, targets: np.ndarray):
    """Mean cross-entropy over a batch; returns (loss, dlogits).

    dlogits is (softmax - onehot) / batch, the exact gradient of the mean loss.
    """
    bsz = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(logsumexp - shifted[np.arange(bsz), targets]))
    p = softmax(logits)
    p[np.arange(bsz), targets] -= 1.0
    return loss, p / bsz


# ---------------------------------------------------------------------------
# embeddings

def embed(table: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return table[idx]


def embed_backward(dtable: np.ndarray, idx: np.ndarray, dout: np.ndarray) -> None:
    d = dtable.shape[1]
    kernels.scatter_add_rows(
        dtable, np.ascontiguousarray(idx.reshape(-1), dtype=np.int64),
        np.ascontiguousarray(dout.reshape(-1, d)))


def init_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int,
                 dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)
