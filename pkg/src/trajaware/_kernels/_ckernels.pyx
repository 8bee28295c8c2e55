# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; see ``_reference.py`` for the numpy twin (bitwise-equal)."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def kf_predict(means, covs, controls, double dt, q):
    cdef double[:, ::1] m = np.ascontiguousarray(means, dtype=np.float64)
    cdef double[:, :, ::1] P = np.ascontiguousarray(covs, dtype=np.float64)
    cdef double[:, ::1] u = np.ascontiguousarray(controls, dtype=np.float64)
    cdef double[:, ::1] Q = np.ascontiguousarray(q, dtype=np.float64)
    cdef Py_ssize_t n = m.shape[0], k, i, j
    out_m_arr = np.empty((n, 4))
    out_c_arr = np.empty((n, 4, 4))
    cdef double[:, ::1] om = out_m_arr
    cdef double[:, :, ::1] oc = out_c_arr
    for k in range(n):
        om[k, 0] = m[k, 0] + u[k, 0] * dt
        om[k, 1] = m[k, 1] + u[k, 1] * dt
        om[k, 2] = u[k, 0]
        om[k, 3] = u[k, 1]
        for i in range(4):
            for j in range(4):
                if i < 2 and j < 2:
                    oc[k, i, j] = P[k, i, j] + Q[i, j]
                else:
                    oc[k, i, j] = Q[i, j]
    return out_m_arr, out_c_arr


def kf_update(means, covs, z, r):
    cdef double[:, ::1] m = np.ascontiguousarray(means, dtype=np.float64)
    cdef double[:, :, ::1] P = np.ascontiguousarray(covs, dtype=np.float64)
    cdef double z0 = float(z[0]), z1 = float(z[1])
    cdef double r00 = float(r[0][0]), r01 = float(r[0][1]), r11 = float(r[1][1])
    cdef Py_ssize_t n = m.shape[0], k, i, j
    out_m_arr = np.empty((n, 4))
    out_c_arr = np.empty((n, 4, 4))
    innov_arr = np.empty((n, 2))
    s_arr = np.empty((n, 3))
    det_arr = np.empty(n)
    maha_arr = np.empty(n)
    cdef double[:, ::1] om = out_m_arr
    cdef double[:, :, ::1] oc = out_c_arr
    cdef double[:, ::1] oi = innov_arr
    cdef double[:, ::1] os = s_arr
    cdef double[::1] od = det_arr
    cdef double[::1] omh = maha_arr
    cdef double e0, e1, s00, s01, s11, det, i00, i01, i11
    cdef double k0[4]
    cdef double k1[4]
    cdef double c[4][4]
    for k in range(n):
        e0 = z0 - m[k, 0]
        e1 = z1 - m[k, 1]
        s00 = P[k, 0, 0] + r00
        s01 = P[k, 0, 1] + r01
        s11 = P[k, 1, 1] + r11
        det = s00 * s11 - s01 * s01
        i00 = s11 / det
        i01 = -s01 / det
        i11 = s00 / det
        for i in range(4):
            k0[i] = P[k, i, 0] * i00 + P[k, i, 1] * i01
            k1[i] = P[k, i, 0] * i01 + P[k, i, 1] * i11
            om[k, i] = m[k, i] + (k0[i] * e0 + k1[i] * e1)
        for i in range(4):
            for j in range(4):
                c[i][j] = P[k, i, j] - (k0[i] * P[k, 0, j] + k1[i] * P[k, 1, j])
        for i in range(4):
            for j in range(4):
                oc[k, i, j] = 0.5 * (c[i][j] + c[j][i])
        omh[k] = e0 * (i00 * e0 + i01 * e1) + e1 * (i01 * e0 + i11 * e1)
        oi[k, 0] = e0
        oi[k, 1] = e1
        os[k, 0] = s00
        os[k, 1] = s01
        os[k, 2] = s11
        od[k] = det
    return out_m_arr, out_c_arr, innov_arr, s_arr, det_arr, maha_arr


def nearest(points, centroids, double wpos, double wvel):
    cdef double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] c = np.ascontiguousarray(centroids, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], L = c.shape[0], k, j, best
    idx_arr = np.empty(n, dtype=np.int64)
    d2_arr = np.empty(n)
    cdef long long[::1] oidx = idx_arr
    cdef double[::1] od2 = d2_arr
    cdef double d0, d1, d2, d3, dist, bestd
    for k in range(n):
        best = 0
        bestd = 0.0
        for j in range(L):
            d0 = c[j, 0] - p[k, 0]
            d1 = c[j, 1] - p[k, 1]
            d2 = c[j, 2] - p[k, 2]
            d3 = c[j, 3] - p[k, 3]
            dist = wpos * d0 * d0 + wpos * d1 * d1 + wvel * d2 * d2 + wvel * d3 * d3
            if j == 0 or dist < bestd:
                best = j
                bestd = dist
        oidx[k] = best
        od2[k] = bestd
    return idx_arr, d2_arr


def som_epoch(neurons, samples, order, coef, double wpos, double wvel):
    cdef double[:, ::1] w = neurons
    cdef double[:, ::1] s = np.ascontiguousarray(samples, dtype=np.float64)
    cdef long long[::1] o = np.ascontiguousarray(order, dtype=np.int64)
    cdef double[:, ::1] cf = np.ascontiguousarray(coef, dtype=np.float64)
    cdef Py_ssize_t n = o.shape[0], M = w.shape[0], t, j, b, kk
    cdef double x0, x1, x2, x3, d0, d1, d2, d3, dist, bestd, h
    for t in range(n):
        kk = o[t]
        x0 = s[kk, 0]
        x1 = s[kk, 1]
        x2 = s[kk, 2]
        x3 = s[kk, 3]
        b = 0
        bestd = 0.0
        for j in range(M):
            d0 = w[j, 0] - x0
            d1 = w[j, 1] - x1
            d2 = w[j, 2] - x2
            d3 = w[j, 3] - x3
            dist = wpos * d0 * d0 + wpos * d1 * d1 + wvel * d2 * d2 + wvel * d3 * d3
            if j == 0 or dist < bestd:
                b = j
                bestd = dist
        for j in range(M):
            h = cf[b, j]
            w[j, 0] = w[j, 0] + h * (x0 - w[j, 0])
            w[j, 1] = w[j, 1] + h * (x1 - w[j, 1])
            w[j, 2] = w[j, 2] + h * (x2 - w[j, 2])
            w[j, 3] = w[j, 3] + h * (x3 - w[j, 3])


def systematic_resample(weights, double u0):
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = w.shape[0], i, j
    idx_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] out = idx_arr
    cum_arr = np.empty(n)
    cdef double[::1] cum = cum_arr
    cdef double acc = 0.0, pos
    for i in range(n):
        acc = acc + w[i]
        cum[i] = acc
    j = 0
    for i in range(n):
        pos = (i + u0) / n
        while j < n - 1 and cum[j] <= pos:
            j += 1
        out[i] = j
    return idx_arr
