# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled versions of the kernels in ``sigfit._fallback``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, log, isfinite, NAN

cnp.import_array()

cdef int IDENTITY = 0
cdef int POWER = 1
cdef int LOG10 = 2
cdef double LN10 = 2.302585092994046
cdef double BRACKET_HALF_WIDTH = 20.0
cdef double REL_TOL = 1e-9


cdef inline void _logistic_pair(double u, double* s, double* r) noexcept nogil:
    cdef double e = exp(-fabs(u))
    if u >= 0:
        s[0] = 1.0 / (1.0 + e)
        r[0] = e / (1.0 + e)
    else:
        s[0] = e / (1.0 + e)
        r[0] = 1.0 / (1.0 + e)


def fplm_value(phi, t):
    cdef double phi1 = phi[0], phi2 = phi[1], phi3 = phi[2], phi4 = phi[3]
    cdef double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef Py_ssize_t n = tv.shape[0], i
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef double s, r, d = phi2 - phi1
    with nogil:
        for i in range(n):
            _logistic_pair((tv[i] - phi3) / phi4, &s, &r)
            ov[i] = phi1 + d * s
    return out


def fplm_value_jac(phi, t):
    cdef double phi1 = phi[0], phi2 = phi[1], phi3 = phi[2], phi4 = phi[3]
    cdef double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef Py_ssize_t n = tv.shape[0], i
    f = np.empty(n)
    jac = np.empty((n, 4))
    cdef double[::1] fv = f
    cdef double[:, ::1] jv = jac
    cdef double s, r, u, sr, d = phi2 - phi1
    with nogil:
        for i in range(n):
            u = (tv[i] - phi3) / phi4
            _logistic_pair(u, &s, &r)
            sr = s * r
            fv[i] = phi1 + d * s
            jv[i, 0] = r
            jv[i, 1] = s
            jv[i, 2] = -d * sr / phi4
            jv[i, 3] = -d * sr * u / phi4
    return f, jac


cdef inline double _q(int code, double p, double phi1, double d,
                      double phi3, double phi4, double t) noexcept nogil:
    cdef double s, r
    _logistic_pair((t - phi3) / phi4, &s, &r)
    if code == POWER:
        return (p - 1.0) * d * s * r + (phi1 + d * s) * (r - s)
    return LN10 * d * s * r + r - s


cdef double _inflection_one(int code, double p, double phi1, double phi2,
                            double phi3, double phi4) noexcept nogil:
    cdef double d = phi2 - phi1
    cdef double lo, hi, lo0, mid, tol, s0, t0, q_lo
    cdef bint kink = False
    if not (isfinite(phi1) and isfinite(phi2) and isfinite(phi3) and isfinite(phi4)):
        return NAN
    if phi4 <= 0 or d <= 0:
        return NAN
    if code == IDENTITY:
        return phi3
    lo = phi3 - BRACKET_HALF_WIDTH * phi4
    hi = phi3 + BRACKET_HALF_WIDTH * phi4
    if code == POWER:
        if phi2 <= 0:
            return NAN
        s0 = -phi1 / d
        if s0 < 1e-300:
            s0 = 1e-300
        if s0 > 1.0 - 1e-16:
            s0 = 1.0 - 1e-16
        t0 = phi3 + phi4 * log(s0 / (1.0 - s0))
        if phi1 < 0 and t0 > lo:
            kink = True
            lo = t0
    q_lo = _q(code, p, phi1, d, phi3, phi4, lo)
    if not (q_lo > 0 or (kink and q_lo >= -1e-12 * (fabs(phi1) + fabs(phi2)))):
        return NAN
    if not (_q(code, p, phi1, d, phi3, phi4, hi) < 0):
        return NAN
    lo0 = lo
    tol = REL_TOL * phi4
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if _q(code, p, phi1, d, phi3, phi4, mid) > 0:
            lo = mid
        else:
            hi = mid
    mid = 0.5 * (lo + hi)
    if kink and mid - lo0 < tol:
        return NAN
    return mid


def inflection_batch(params, int code, double theta):
    cdef double[:, ::1] pv = np.ascontiguousarray(np.atleast_2d(params), dtype=np.float64)
    cdef Py_ssize_t m = pv.shape[0], i
    out = np.empty(m)
    cdef double[::1] ov = out
    cdef double p = 1.0 / theta if code == POWER else 0.0
    with nogil:
        for i in range(m):
            ov[i] = _inflection_one(code, p, pv[i, 0], pv[i, 1], pv[i, 2], pv[i, 3])
    return out
