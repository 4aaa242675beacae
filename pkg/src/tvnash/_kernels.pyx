# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for affine games.

Mirrors ``tvnash._fallback``: same signatures, same return conventions.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, isfinite

cnp.import_array()

ALG1, ALG2, UNCONSTRAINED = 0, 1, 2
MAX_ITERS, CONVERGED, DIVERGED = 0, 1, 2

cdef enum:
    C_MAX_ITERS = 0
    C_CONVERGED = 1
    C_DIVERGED = 2


cdef inline double _clip(double v, double lo, double hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef void _mix(const double[:, ::1] W, const double[:, ::1] X, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t N = X.shape[0], n = X.shape[1], i, k, j
    cdef double w
    for i in range(N):
        for j in range(n):
            out[i, j] = 0.0
        for k in range(N):
            w = W[i, k]
            if w != 0.0:
                for j in range(n):
                    out[i, j] += w * X[k, j]


cdef inline double _grad(const double[:, ::1] G, const double[::1] c, const double[:, ::1] X,
                         Py_ssize_t row, Py_ssize_t j) noexcept nogil:
    cdef Py_ssize_t k, n = X.shape[1]
    cdef double acc = c[j]
    for k in range(n):
        acc += G[j, k] * X[row, k]
    return acc


cdef void _alg1_safe(const double[:, ::1] W, const double[:, ::1] X, const double[:, ::1] G,
                     const double[::1] c, const cnp.intp_t[::1] owner, const double[::1] lo,
                     const double[::1] hi, double alpha, double[:, ::1] out,
                     double[::1] gbuf) noexcept nogil:
    cdef Py_ssize_t n = X.shape[1], j, i
    _mix(W, X, out)
    for j in range(n):
        gbuf[j] = _grad(G, c, out, owner[j], j)
    for j in range(n):
        i = owner[j]
        out[i, j] = _clip(out[i, j] - alpha * gbuf[j], lo[j], hi[j])


cdef void _alg2(const double[:, ::1] W, const double[:, ::1] X, const double[:, ::1] G,
                const double[::1] c, const cnp.intp_t[::1] owner, const double[::1] lo,
                const double[::1] hi, double gamma, double tau, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t N = X.shape[0], n = X.shape[1], i, k, j
    cdef double w, deg
    for i in range(N):
        deg = 0.0
        for k in range(N):
            deg += W[i, k]
        for j in range(n):
            out[i, j] = deg * X[i, j]
        for k in range(N):
            w = W[i, k]
            if w != 0.0:
                for j in range(n):
                    out[i, j] -= w * X[k, j]
    # out holds the Laplacian action; gradients read the unmodified X
    for j in range(n):
        i = owner[j]
        out[i, j] = _clip(X[i, j] - tau * (gamma * _grad(G, c, X, i, j) + out[i, j]),
                          lo[j], hi[j]) - X[i, j]
    for i in range(N):
        for j in range(n):
            if owner[j] == i:
                out[i, j] = X[i, j] + out[i, j]
            else:
                out[i, j] = X[i, j] - tau * out[i, j]


cdef void _unc(const double[:, ::1] W, const double[:, ::1] X, const double[:, ::1] G,
               const double[::1] c, const cnp.intp_t[::1] owner, double alpha,
               double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = X.shape[1], j
    _mix(W, X, out)
    for j in range(n):
        out[owner[j], j] -= alpha * _grad(G, c, X, owner[j], j)


cdef void _metrics(const double[:, ::1] X, const double[::1] xstar,
                   const cnp.intp_t[::1] owner, double[::1] mean, double* dist,
                   double* action, double* cons) noexcept nogil:
    cdef Py_ssize_t N = X.shape[0], n = X.shape[1], i, j
    cdef double d = 0.0, a = 0.0, s = 0.0, e
    for j in range(n):
        mean[j] = 0.0
    for i in range(N):
        for j in range(n):
            e = X[i, j] - xstar[j]
            d += e * e
            mean[j] += X[i, j]
    for j in range(n):
        mean[j] /= N
        e = X[owner[j], j] - xstar[j]
        a += e * e
    for i in range(N):
        for j in range(n):
            e = X[i, j] - mean[j]
            s += e * e
    dist[0] = sqrt(d)
    action[0] = sqrt(a)
    cons[0] = sqrt(s)


def _c(a, dtype=np.float64):
    return np.ascontiguousarray(a, dtype=dtype)


def alg1_step(W, X, G, c, owner, lo, hi, double alpha):
    X = _c(X)
    out = np.empty_like(X)
    gbuf = np.empty(X.shape[1])
    _alg1_safe(_c(W), X, _c(G), _c(c), _c(owner, np.intp), _c(lo), _c(hi), alpha, out, gbuf)
    return out


def alg2_step(W, X, G, c, owner, lo, hi, double gamma, double tau):
    X = _c(X)
    out = np.empty_like(X)
    _alg2(_c(W), X, _c(G), _c(c), _c(owner, np.intp), _c(lo), _c(hi), gamma, tau, out)
    return out


def unconstrained_step(W, X, G, c, owner, double alpha):
    X = _c(X)
    out = np.empty_like(X)
    _unc(_c(W), X, _c(G), _c(c), _c(owner, np.intp), alpha, out)
    return out


def stack_metrics(X, xstar, owner):
    cdef double d, a, s
    X = _c(X)
    mean = np.empty(X.shape[1])
    _metrics(X, _c(xstar), _c(owner, np.intp), mean, &d, &a, &s)
    return d, a, s


def run_affine(int kind, Ws, schedule, X0, G, c, owner, lo, hi, double p1, double p2,
               xstar, bint has_oracle, double stop_tol, double div_limit):
    cdef const double[:, :, ::1] Wv = _c(Ws)
    cdef const cnp.intp_t[::1] sched = _c(schedule, np.intp)
    cdef const double[:, ::1] Gv = _c(G)
    cdef const double[::1] cv = _c(c)
    cdef const cnp.intp_t[::1] ov = _c(owner, np.intp)
    cdef const double[::1] lov = _c(lo)
    cdef const double[::1] hiv = _c(hi)
    cdef Py_ssize_t iters = sched.shape[0]
    X_a = np.array(X0, dtype=np.float64, order="C", copy=True)
    Y_a = np.empty_like(X_a)
    cdef double[:, ::1] X = X_a
    cdef double[:, ::1] Y = Y_a
    cdef double[:, ::1] T
    cdef Py_ssize_t N = X.shape[0], n = X.shape[1], k, i, j
    ref_a = _c(xstar) if has_oracle else np.zeros(n)
    cdef const double[::1] ref = ref_a
    mean_a = np.empty(n)
    gbuf_a = np.empty(n)
    cdef double[::1] mean = mean_a
    cdef double[::1] gbuf = gbuf_a
    dist_a = np.full(iters + 1, np.nan)
    action_a = np.full(iters + 1, np.nan)
    cons_a = np.full(iters + 1, np.nan)
    cdef double[::1] dist = dist_a
    cdef double[::1] action = action_a
    cdef double[::1] cons = cons_a
    cdef double d, a, s, e
    cdef int status = C_MAX_ITERS
    cdef Py_ssize_t steps = iters
    cdef bint finite

    _metrics(X, ref, ov, mean, &d, &a, &s)
    cons[0] = s
    if has_oracle:
        dist[0] = d
        action[0] = a
        if d <= stop_tol:
            return X_a, dist_a, action_a, cons_a, 0, CONVERGED

    with nogil:
        for k in range(iters):
            if kind == 0:
                _alg1_safe(Wv[sched[k]], X, Gv, cv, ov, lov, hiv, p1, Y, gbuf)
            elif kind == 1:
                _alg2(Wv[sched[k]], X, Gv, cv, ov, lov, hiv, p1, p2, Y)
            else:
                _unc(Wv[sched[k]], X, Gv, cv, ov, p1, Y)
            _metrics(Y, ref, ov, mean, &d, &a, &s)
            if not has_oracle:
                d = 0.0
                for i in range(N):
                    for j in range(n):
                        e = Y[i, j] - X[i, j]
                        d += e * e
                d = sqrt(d)
            T = X
            X = Y
            Y = T
            dist[k + 1] = d
            cons[k + 1] = s
            if has_oracle:
                action[k + 1] = a
            finite = isfinite(d) and isfinite(s)
            if not finite or d > div_limit:
                status = C_DIVERGED
                steps = k + 1
                break
            if d <= stop_tol:
                status = C_CONVERGED
                steps = k + 1
                break
    out = np.asarray(X).copy()
    return out, dist_a, action_a, cons_a, steps, status
