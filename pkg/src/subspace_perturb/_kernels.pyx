# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same signatures and semantics as ``_kernels_py``."""
import numpy as np

from libc.math cimport fabs

ctypedef long long idx_t

UNBOUNDED = -1


def pdmm_aggregate(const double[:, ::1] x, const double[:, ::1] lam,
                   const idx_t[::1] ei, const idx_t[::1] ej, double c):
    cdef Py_ssize_t m = ei.shape[0], u = x.shape[1], e, k
    cdef idx_t i, j
    out = np.zeros((x.shape[0], u))
    cdef double[:, ::1] o = out
    with nogil:
        for e in range(m):
            i = ei[e]
            j = ej[e]
            for k in range(u):
                o[i, k] += c * x[j, k] - lam[m + e, k]
                o[j, k] += c * x[i, k] + lam[e, k]
    return out


def pdmm_dual_update(const double[:, ::1] x_new, const double[:, ::1] x_old,
                     const double[:, ::1] lam, const idx_t[::1] ei,
                     const idx_t[::1] ej, double c, double theta):
    cdef Py_ssize_t m = ei.shape[0], u = x_new.shape[1], e, k
    cdef idx_t i, j
    cdef double top, bot, nt, nb
    out = np.empty((2 * m, u))
    cdef double[:, ::1] o = out
    with nogil:
        for e in range(m):
            i = ei[e]
            j = ej[e]
            for k in range(u):
                top = lam[e, k]
                bot = lam[m + e, k]
                nt = bot + c * (x_new[i, k] - x_old[j, k])
                nb = top + c * (x_old[i, k] - x_new[j, k])
                if theta != 0.0:
                    nt = theta * (top - c * (x_new[i, k] - x_old[i, k])) + (1.0 - theta) * nt
                    nb = theta * (bot + c * (x_new[j, k] - x_old[j, k])) + (1.0 - theta) * nb
                o[e, k] = nt
                o[m + e, k] = nb
    return out


def admm_aggregate(const double[:, ::1] z, const double[:, ::1] v,
                   const idx_t[::1] ei, const idx_t[::1] ej, double c, Py_ssize_t n):
    cdef Py_ssize_t m = ei.shape[0], u = z.shape[1], e, k
    cdef idx_t i, j
    out = np.zeros((n, u))
    cdef double[:, ::1] o = out
    with nogil:
        for e in range(m):
            i = ei[e]
            j = ej[e]
            for k in range(u):
                o[i, k] += c * z[e, k] - v[e, k]
                o[j, k] += c * z[e, k] - v[m + e, k]
    return out


def admm_edge_update(const double[:, ::1] x, const double[:, ::1] v,
                     const idx_t[::1] ei, const idx_t[::1] ej, double c):
    cdef Py_ssize_t m = ei.shape[0], u = x.shape[1], e, k
    cdef idx_t i, j
    cdef double ze
    z = np.empty((m, u))
    v_new = np.empty((2 * m, u))
    cdef double[:, ::1] zo = z
    cdef double[:, ::1] vo = v_new
    with nogil:
        for e in range(m):
            i = ei[e]
            j = ej[e]
            for k in range(u):
                ze = 0.5 * (x[i, k] + x[j, k]) + (v[e, k] + v[m + e, k]) / (2.0 * c)
                zo[e, k] = ze
                vo[e, k] = v[e, k] + c * (x[i, k] - ze)
                vo[m + e, k] = v[m + e, k] + c * (x[j, k] - ze)
    return z, v_new


def incidence(const double[:, ::1] x, const idx_t[::1] ei, const idx_t[::1] ej):
    cdef Py_ssize_t m = ei.shape[0], u = x.shape[1], e, k
    out = np.empty((m, u))
    cdef double[:, ::1] o = out
    with nogil:
        for e in range(m):
            for k in range(u):
                o[e, k] = x[ei[e], k] - x[ej[e], k]
    return out


def incidence_T(const double[:, ::1] w, const idx_t[::1] ei, const idx_t[::1] ej,
                Py_ssize_t n):
    cdef Py_ssize_t m = ei.shape[0], u = w.shape[1], e, k
    out = np.zeros((n, u))
    cdef double[:, ::1] o = out
    with nogil:
        for e in range(m):
            for k in range(u):
                o[ei[e], k] += w[e, k]
                o[ej[e], k] -= w[e, k]
    return out


def lasso_cd(const double[:, ::1] G, const double[::1] h, double alpha,
             x0, double tol, Py_ssize_t max_iter):
    cdef Py_ssize_t u = h.shape[0], k, l, sweep
    cdef double gkk, rho, new, step, delta, xmax
    x_arr = np.array(x0, dtype=np.float64)
    r_arr = np.asarray(h) - np.asarray(G) @ x_arr
    cdef double[::1] x = x_arr
    cdef double[::1] r = r_arr
    cdef int status = 0
    with nogil:
        for sweep in range(1, max_iter + 1):
            delta = 0.0
            for k in range(u):
                gkk = G[k, k]
                rho = r[k] + gkk * x[k]
                if gkk > 0.0:
                    if rho > alpha:
                        new = (rho - alpha) / gkk
                    elif rho < -alpha:
                        new = (rho + alpha) / gkk
                    else:
                        new = 0.0
                elif fabs(rho) <= alpha:
                    new = 0.0
                else:
                    status = -1
                    break
                step = new - x[k]
                if step != 0.0:
                    for l in range(u):
                        r[l] -= G[l, k] * step
                    x[k] = new
                    if fabs(step) > delta:
                        delta = fabs(step)
            if status != 0:
                break
            xmax = 1.0
            for l in range(u):
                if fabs(x[l]) > xmax:
                    xmax = fabs(x[l])
            if delta <= tol * xmax:
                status = 1
                break
    if status == -1:
        return x_arr, UNBOUNDED
    if status == 1:
        return x_arr, sweep
    return x_arr, max_iter
