# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; same algorithms and signatures as ``_core_py``."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free
from libc.math cimport exp, expm1, cos, sin, sqrt, asin, ceil, M_PI

cnp.import_array()

cdef double TAIL_CUT = 60.0
cdef double TAU_SPLIT = 15.0
cdef long M_MIN = 64


cdef inline long _point_count(long mmax, double tau) noexcept nogil:
    cdef long m
    if tau < 0:
        tau = 0
    m = mmax + <long>ceil(16.0 * sqrt(tau)) + 32
    if m < M_MIN:
        m = M_MIN
    return m + (m & 1)


def point_count(long mmax, double tau):
    """Even trapezoid size whose aliasing error is below double precision."""
    return _point_count(mmax, tau)


cdef inline double _cycle_green(long m, long M) nogil:
    cdef double dM = <double>M
    return (dM * dM - 1.0) / (12.0 * dM) - (<double>m) * (dM - m) / (2.0 * dM)


cdef int _green_block(double tau, long* ms, int nm, long M,
                      double* y, double* yd, double* ydd) noexcept nogil:
    """Write y, ydot, yddot for offsets ms[0..nm) at one tau; -1 on allocation failure."""
    cdef long half = M // 2
    cdef long j, jmax, r
    cdef int i
    cdef double sh, s, e, w, wgt, c, step = 2.0 * M_PI / M, invM = 1.0 / M
    cdef double* ctab = NULL
    cdef bint use_tab
    for i in range(nm):
        y[i] = 0.0
        yd[i] = 0.0
        ydd[i] = 0.0
    if tau <= TAU_SPLIT:
        # cos(2 pi r / M) for every residue, so the inner loops are lookups
        ctab = <double*> malloc(M * sizeof(double))
        if ctab == NULL:
            return -1
        for r in range(M):
            ctab[r] = cos(step * r)
        for j in range(half + 1):
            wgt = 1.0 if (j == 0 or j == half) else 2.0
            sh = sin(M_PI * j / M)
            s = 2.0 * sh * sh
            e = exp(-2.0 * tau * s)
            if j == 0:
                w = tau
            else:
                w = -expm1(-2.0 * tau * s) / (2.0 * s)
            for i in range(nm):
                c = wgt * ctab[(j * ms[i]) % M]
                y[i] += c * w
                yd[i] += c * e
                ydd[i] += c * (-2.0 * s * e)
        for i in range(nm):
            y[i] *= invM
            yd[i] *= invM
            ydd[i] *= invM
        free(ctab)
        return 0
    s = sqrt(TAIL_CUT / (4.0 * tau))
    if s > 1.0:
        s = 1.0
    jmax = <long>(M / M_PI * asin(s)) + 1
    if jmax > half - 1:
        jmax = half - 1
    # a residue table only pays off when it is reused
    use_tab = <long>nm * jmax > M
    if use_tab:
        ctab = <double*> malloc(M * sizeof(double))
        if ctab == NULL:
            return -1
        for r in range(M):
            ctab[r] = cos(step * r)
    for j in range(1, jmax + 1):
        sh = sin(M_PI * j / M)
        s = 2.0 * sh * sh
        if 2.0 * tau * s > TAIL_CUT:
            continue
        e = exp(-2.0 * tau * s)
        for i in range(nm):
            if use_tab:
                c = 2.0 * ctab[(j * ms[i]) % M]
            else:
                c = 2.0 * cos(step * ((j * ms[i]) % M))
            y[i] += c * (e / (2.0 * s))
            yd[i] += c * e
            ydd[i] += c * (-2.0 * s * e)
    for i in range(nm):
        y[i] = tau * invM + _cycle_green(ms[i], M) - y[i] * invM
        yd[i] = (1.0 + yd[i]) * invM
        ydd[i] = ydd[i] * invM
    if ctab != NULL:
        free(ctab)
    return 0


def green_values(ms, double tau, long M=0):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] m_arr = np.abs(
        np.atleast_1d(np.asarray(ms, dtype=np.int64)))
    cdef int nm = m_arr.shape[0]
    cdef cnp.ndarray[double, ndim=1] y = np.zeros(nm)
    cdef cnp.ndarray[double, ndim=1] yd = np.zeros(nm)
    cdef cnp.ndarray[double, ndim=1] ydd = np.zeros(nm)
    if tau < 0 or nm == 0:
        return y, yd, ydd
    if M <= 0:
        M = _point_count(int(m_arr.max()), tau)
    if m_arr.max() > M:
        raise ValueError("offset exceeds trapezoid size")
    if _green_block(tau, <long*> &m_arr[0], nm, M, &y[0], &yd[0], &ydd[0]) != 0:
        raise MemoryError()
    return y, yd, ydd


def green_sums(ns, double t, ks, tks):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] n_arr = np.ascontiguousarray(ns, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] k_arr = np.ascontiguousarray(ks, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] tk_arr = np.ascontiguousarray(tks, dtype=float)
    cdef int L = n_arr.shape[0], nk = k_arr.shape[0]
    cdef cnp.ndarray[double, ndim=1] out_y = np.zeros(L)
    cdef cnp.ndarray[double, ndim=1] out_yd = np.zeros(L)
    cdef cnp.ndarray[double, ndim=1] out_ydd = np.zeros(L)
    if L == 0:
        return out_y, out_yd, out_ydd
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ms = np.zeros(2 * L, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] by = np.zeros(2 * L)
    cdef cnp.ndarray[double, ndim=1] byd = np.zeros(2 * L)
    cdef cnp.ndarray[double, ndim=1] bydd = np.zeros(2 * L)
    cdef long* pm = <long*> &ms[0]
    cdef int ik, i, nm
    cdef long k, mmax, M, n
    cdef double tau
    cdef int status = 0
    with nogil:
        for ik in range(nk):
            k = k_arr[ik]
            tau = t - tk_arr[ik]
            if tau < 0:
                continue
            mmax = 0
            for i in range(L):
                n = n_arr[i]
                pm[i] = n - k if n >= k else k - n
                if k != 0:
                    pm[L + i] = n + k if n + k >= 0 else -(n + k)
                    if pm[L + i] > mmax:
                        mmax = pm[L + i]
                if pm[i] > mmax:
                    mmax = pm[i]
            nm = 2 * L if k != 0 else L
            M = _point_count(mmax, tau)
            status = _green_block(tau, pm, nm, M, &by[0], &byd[0], &bydd[0])
            if status != 0:
                break
            for i in range(L):
                out_y[i] += by[i]
                out_yd[i] += byd[i]
                out_ydd[i] += bydd[i]
                if k != 0:
                    out_y[i] += by[L + i]
                    out_yd[i] += byd[L + i]
                    out_ydd[i] += bydd[L + i]
    if status != 0:
        raise MemoryError()
    return out_y, out_yd, out_ydd


def ive_range(long nmax, double x):
    if x < 0:
        raise ValueError("x must be nonnegative")
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(nmax + 1)
    if x == 0.0:
        out[0] = 1.0
        return out
    cdef long start = nmax + 50 + <long>ceil(20.0 * sqrt(x))
    cdef long k, i
    cdef double nxt = 0.0, cur = 1e-300, prev, total = 0.0
    for k in range(start, 0, -1):
        prev = (2.0 * k / x) * cur + nxt
        nxt = cur
        cur = prev
        if k <= nmax:
            out[k] = nxt
        total += 2.0 * nxt
        if cur > 1e250:
            cur *= 1e-250
            nxt *= 1e-250
            total *= 1e-250
            for i in range(k, nmax + 1):
                out[i] *= 1e-250
    out[0] = cur
    total += cur
    return out / total
