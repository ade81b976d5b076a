# Fused elementwise kernels for the recurrent cells and the embedding
# scatter-add. Semantics mirror kernels/fallback.py exactly; only the gate
# math lives here, GEMMs stay in BLAS on the Python side.

import numpy as np

from libc.math cimport exp, expf, tanh, tanhf

ctypedef fused real:
    float
    double


cdef inline real _sig(real x) noexcept nogil:
    if real is float:
        return <float>1.0 / (<float>1.0 + expf(-x))
    else:
        return 1.0 / (1.0 + exp(-x))


cdef inline real _tanh(real x) noexcept nogil:
    if real is float:
        return tanhf(x)
    else:
        return tanh(x)


def gru_cell_fwd(real[:, ::1] az, real[:, ::1] ar, real[:, ::1] cx,
                 real[:, ::1] ch, real[:, ::1] h_prev):
    cdef Py_ssize_t m = az.shape[0], h = az.shape[1], i, j
    z_arr = np.empty((m, h), dtype=np.asarray(az).dtype)
    r_arr = np.empty_like(z_arr)
    hbar_arr = np.empty_like(z_arr)
    out_arr = np.empty_like(z_arr)
    cdef real[:, ::1] z = z_arr, r = r_arr, hbar = hbar_arr, out = out_arr
    cdef real zz, rr, hb
    with nogil:
        for i in range(m):
            for j in range(h):
                zz = _sig(az[i, j])
                rr = _sig(ar[i, j])
                hb = _tanh(cx[i, j] + rr * ch[i, j])
                z[i, j] = zz
                r[i, j] = rr
                hbar[i, j] = hb
                out[i, j] = zz * h_prev[i, j] + (<real>1.0 - zz) * hb
    return z_arr, r_arr, hbar_arr, out_arr


def gru_cell_bwd(real[:, ::1] dh, real[:, ::1] z, real[:, ::1] r,
                 real[:, ::1] hbar, real[:, ::1] ch, real[:, ::1] h_prev):
    cdef Py_ssize_t m = dh.shape[0], h = dh.shape[1], i, j
    daz_arr = np.empty((m, h), dtype=np.asarray(dh).dtype)
    dar_arr = np.empty_like(daz_arr)
    dcx_arr = np.empty_like(daz_arr)
    dch_arr = np.empty_like(daz_arr)
    dhp_arr = np.empty_like(daz_arr)
    cdef real[:, ::1] daz = daz_arr, dar = dar_arr, dcx = dcx_arr, dch = dch_arr, dhp = dhp_arr
    cdef real g, zz, rr, hb, dz, du, dr
    with nogil:
        for i in range(m):
            for j in range(h):
                g = dh[i, j]
                zz = z[i, j]
                rr = r[i, j]
                hb = hbar[i, j]
                dz = g * (h_prev[i, j] - hb)
                du = g * (<real>1.0 - zz) * (<real>1.0 - hb * hb)
                dr = du * ch[i, j]
                dcx[i, j] = du
                dch[i, j] = du * rr
                daz[i, j] = dz * zz * (<real>1.0 - zz)
                dar[i, j] = dr * rr * (<real>1.0 - rr)
                dhp[i, j] = g * zz
    return daz_arr, dar_arr, dcx_arr, dch_arr, dhp_arr


def lstm_cell_fwd(real[:, ::1] gates, real[:, ::1] c_prev):
    cdef Py_ssize_t m = c_prev.shape[0], h = c_prev.shape[1], i, j
    acts_arr = np.empty((m, 4 * h), dtype=np.asarray(gates).dtype)
    c_arr = np.empty((m, h), dtype=acts_arr.dtype)
    tc_arr = np.empty_like(c_arr)
    h_arr = np.empty_like(c_arr)
    cdef real[:, ::1] acts = acts_arr, c_new = c_arr, tc = tc_arr, h_new = h_arr
    cdef real gi, gf, gg, go, cc, t
    with nogil:
        for i in range(m):
            for j in range(h):
                gi = _sig(gates[i, j])
                gf = _sig(gates[i, h + j])
                gg = _tanh(gates[i, 2 * h + j])
                go = _sig(gates[i, 3 * h + j])
                cc = gf * c_prev[i, j] + gi * gg
                t = _tanh(cc)
                acts[i, j] = gi
                acts[i, h + j] = gf
                acts[i, 2 * h + j] = gg
                acts[i, 3 * h + j] = go
                c_new[i, j] = cc
                tc[i, j] = t
                h_new[i, j] = go * t
    return acts_arr, c_arr, tc_arr, h_arr


def lstm_cell_bwd(real[:, ::1] dh, real[:, ::1] dc_in, real[:, ::1] acts,
                  real[:, ::1] tc, real[:, ::1] c_prev):
    cdef Py_ssize_t m = dh.shape[0], h = dh.shape[1], i, j
    dgates_arr = np.empty((m, 4 * h), dtype=np.asarray(dh).dtype)
    dcp_arr = np.empty((m, h), dtype=dgates_arr.dtype)
    cdef real[:, ::1] dgates = dgates_arr, dcp = dcp_arr
    cdef real gi, gf, gg, go, t, g, dc, di, df, dgg, do
    with nogil:
        for i in range(m):
            for j in range(h):
                gi = acts[i, j]
                gf = acts[i, h + j]
                gg = acts[i, 2 * h + j]
                go = acts[i, 3 * h + j]
                t = tc[i, j]
                g = dh[i, j]
                do = g * t
                dc = dc_in[i, j] + g * go * (<real>1.0 - t * t)
                di = dc * gg
                df = dc * c_prev[i, j]
                dgg = dc * gi
                dcp[i, j] = dc * gf
                dgates[i, j] = di * gi * (<real>1.0 - gi)
                dgates[i, h + j] = df * gf * (<real>1.0 - gf)
                dgates[i, 2 * h + j] = dgg * (<real>1.0 - gg * gg)
                dgates[i, 3 * h + j] = do * go * (<real>1.0 - go)
    return dgates_arr, dcp_arr


def scatter_add_rows(real[:, ::1] table, long long[::1] idx, real[:, ::1] rows):
    cdef Py_ssize_t m = idx.shape[0], d = table.shape[1], i, j
    cdef Py_ssize_t row
    with nogil:
        for i in range(m):
            row = <Py_ssize_t>idx[i]
            for j in range(d):
                table[row, j] += rows[i, j]
