# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled GRU sequence kernels; same contract as ``_gru_py``.

Per-step matrix products and tanh go through numpy (BLAS and its SIMD
loops) into preallocated buffers; gate arithmetic, masking and the state
update run in typed loops, so nothing is allocated per step and the weight
gradient is a single product over all steps.
"""
import numpy as np


def gru_forward(double[:, :, ::1] xw, double[:, ::1] wh, double[:, ::1] mask):
    cdef Py_ssize_t B = xw.shape[0], m = xw.shape[1], h = xw.shape[2] // 3
    H_arr = np.zeros((B, m, h))
    R_arr = np.zeros((B, m, h))
    Z_arr = np.zeros((B, m, h))
    C_arr = np.zeros((B, m, h))
    cdef double[:, :, ::1] H = H_arr, R = R_arr, Z = Z_arr, Cc = C_arr
    wh_np = np.asarray(wh)
    wh_rz = np.ascontiguousarray(wh_np[:, :2 * h])
    wh_c = np.ascontiguousarray(wh_np[:, 2 * h:])
    hp_arr = np.zeros((B, h))
    rh_arr = np.zeros((B, h))
    u_arr = np.zeros((B, 2 * h))
    uc_arr = np.zeros((B, h))
    cdef double[:, ::1] hp = hp_arr, rh = rh_arr, u = u_arr, uc = uc_arr
    cdef Py_ssize_t b, t, j
    cdef double r, z, c, mk
    for t in range(m):
        np.dot(hp_arr, wh_rz, out=u_arr)
        # sigmoid(x) = (1 + tanh(x / 2)) / 2, evaluated by numpy's vectorized tanh
        with nogil:
            for b in range(B):
                for j in range(2 * h):
                    u[b, j] = 0.5 * (xw[b, t, j] + u[b, j])
        np.tanh(u_arr, out=u_arr)
        with nogil:
            for b in range(B):
                for j in range(h):
                    r = 0.5 * (1.0 + u[b, j])
                    R[b, t, j] = r
                    rh[b, j] = r * hp[b, j]
        np.dot(rh_arr, wh_c, out=uc_arr)
        with nogil:
            for b in range(B):
                for j in range(h):
                    uc[b, j] = uc[b, j] + xw[b, t, 2 * h + j]
        np.tanh(uc_arr, out=uc_arr)
        with nogil:
            for b in range(B):
                mk = mask[b, t]
                for j in range(h):
                    z = 0.5 * (1.0 + u[b, h + j])
                    c = uc[b, j]
                    Z[b, t, j] = z
                    Cc[b, t, j] = c
                    if mk != 0.0:
                        hp[b, j] = mk * (z * hp[b, j] + (1.0 - z) * c) + (1.0 - mk) * hp[b, j]
                    H[b, t, j] = hp[b, j]
    return H_arr, (R_arr, Z_arr, C_arr)


def gru_backward(double[:, :, ::1] dH, double[:, :, ::1] H, cache,
                 double[:, ::1] wh, double[:, ::1] mask):
    R_arr, Z_arr, C_arr = cache
    cdef double[:, :, ::1] R = R_arr, Z = Z_arr, Cc = C_arr
    cdef Py_ssize_t B = H.shape[0], m = H.shape[1], h = H.shape[2]
    wh_np = np.asarray(wh)
    wh_rz_t = np.ascontiguousarray(wh_np[:, :2 * h].T)
    wh_c_t = np.ascontiguousarray(wh_np[:, 2 * h:].T)
    dxw_arr = np.zeros((B, m, 3 * h))
    cdef double[:, :, ::1] dxw = dxw_arr
    carry_arr = np.zeros((B, h))
    dac_arr = np.zeros((B, h))
    drh_arr = np.zeros((B, h))
    darz_arr = np.zeros((B, 2 * h))
    back_arr = np.zeros((B, h))
    cdef double[:, ::1] carry = carry_arr, dac = dac_arr, drh = drh_arr, darz = darz_arr, back = back_arr
    cdef Py_ssize_t b, t, j
    cdef double mk, dh, dhn, z, c, r, hp
    for t in range(m - 1, -1, -1):
        # carry <- gradient reaching h_prev through the carried/update paths
        with nogil:
            for b in range(B):
                mk = mask[b, t]
                for j in range(h):
                    hp = H[b, t - 1, j] if t > 0 else 0.0
                    dh = dH[b, t, j] + carry[b, j]
                    z = Z[b, t, j]
                    c = Cc[b, t, j]
                    dhn = mk * dh
                    carry[b, j] = (1.0 - mk) * dh + dhn * z
                    darz[b, h + j] = dhn * (hp - c) * z * (1.0 - z)
                    dac[b, j] = dhn * (1.0 - z) * (1.0 - c * c)
                    dxw[b, t, h + j] = darz[b, h + j]
                    dxw[b, t, 2 * h + j] = dac[b, j]
        np.dot(dac_arr, wh_c_t, out=drh_arr)
        with nogil:
            for b in range(B):
                for j in range(h):
                    hp = H[b, t - 1, j] if t > 0 else 0.0
                    r = R[b, t, j]
                    carry[b, j] = carry[b, j] + drh[b, j] * r
                    darz[b, j] = drh[b, j] * hp * r * (1.0 - r)
                    dxw[b, t, j] = darz[b, j]
        np.dot(darz_arr, wh_rz_t, out=back_arr)
        with nogil:
            for b in range(B):
                for j in range(h):
                    carry[b, j] = carry[b, j] + back[b, j]

    # weight gradients in one product each over all (b, t)
    h_prev = np.zeros((B, m, h))
    h_prev[:, 1:] = np.asarray(H)[:, :-1]
    hp2 = h_prev.reshape(B * m, h)
    d2 = dxw_arr.reshape(B * m, 3 * h)
    dwh_arr = np.empty((h, 3 * h))
    dwh_arr[:, :2 * h] = hp2.T @ d2[:, :2 * h]
    dwh_arr[:, 2 * h:] = (R_arr.reshape(B * m, h) * hp2).T @ d2[:, 2 * h:]
    return dxw_arr, dwh_arr
