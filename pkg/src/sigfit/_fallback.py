"""Numpy implementations of the hot kernels.

Used when the compiled ``sigfit._kernels`` extension is unavailable, and as
the reference the compiled kernels are tested against.
"""

from __future__ import annotations

import math

import numpy as np

IDENTITY, POWER, LOG10 = 0, 1, 2
LN10 = math.log(10.0)
BRACKET_HALF_WIDTH = 20.0
REL_TOL = 1e-9


def _logistic_pair(u):
    """Return s = 1/(1+exp(-u)) and 1 - s without cancellation."""
    e = np.exp(-np.abs(u))
    big = 1.0 / (1.0 + e)
    small = e / (1.0 + e)
    pos = u >= 0
    return np.where(pos, big, small), np.where(pos, small, big)


def fplm_value(phi, t):
    phi1, phi2, phi3, phi4 = (float(v) for v in phi)
    t = np.asarray(t, dtype=float)
    s, _ = _logistic_pair((t - phi3) / phi4)
    return phi1 + (phi2 - phi1) * s


def fplm_value_jac(phi, t):
    """Curve values and the n x 4 Jacobian with respect to (phi1..phi4)."""
    phi1, phi2, phi3, phi4 = (float(v) for v in phi)
    t = np.asarray(t, dtype=float)
    d = phi2 - phi1
    u = (t - phi3) / phi4
    s, r = _logistic_pair(u)
    sr = s * r
    jac = np.empty((t.shape[0], 4))
    jac[:, 0] = r
    jac[:, 1] = s
    jac[:, 2] = -d * sr / phi4
    jac[:, 3] = -d * sr * u / phi4
    return phi1 + d * s, jac


def _curvature_sign(code, p, phi1, d, s, r):
    # second derivative of the back-transformed curve, divided by the
    # positive factor d*s*(1-s)/phi4**2 (times h'(f) > 0)
    if code == POWER:
        return (p - 1.0) * d * s * r + (phi1 + d * s) * (r - s)
    c = LN10 * d
    return c * s * r + r - s


def inflection_batch(params, code, theta):
    """Inflection time of the back-transformed curve for each row of ``params``.

    Rows with invalid parameters or no sign change in the bracket give NaN.
    """
    params = np.atleast_2d(np.asarray(params, dtype=float))
    phi1, phi2, phi3, phi4 = params.T
    d = phi2 - phi1
    with np.errstate(all="ignore"):
        valid = np.isfinite(params).all(axis=1) & (phi4 > 0) & (d > 0)
        if code == IDENTITY:
            return np.where(valid, phi3, np.nan)

        p = 1.0 / theta if code == POWER else 0.0
        lo = phi3 - BRACKET_HALF_WIDTH * phi4
        hi = phi3 + BRACKET_HALF_WIDTH * phi4
        kink = np.zeros_like(phi1, dtype=bool)
        if code == POWER:
            valid &= phi2 > 0
            s0 = np.clip(-phi1 / np.where(d > 0, d, 1.0), 1e-300, 1.0 - 1e-16)
            t0 = phi3 + phi4 * np.log(s0 / (1.0 - s0))
            kink = (phi1 < 0) & (t0 > lo)
            lo = np.where(kink, t0, lo)

        def q(t):
            s, r = _logistic_pair((t - phi3) / phi4)
            return _curvature_sign(code, p, phi1, d, s, r)

        q_lo = q(lo)
        scale = np.abs(phi1) + np.abs(phi2)
        valid &= (q_lo > 0) | (kink & (q_lo >= -1e-12 * scale))
        valid &= q(hi) < 0
        lo0 = lo.copy()
        tol = REL_TOL * phi4
        lo = np.where(valid, lo, 0.0)
        hi = np.where(valid, hi, 0.0)
        active = valid.copy()
        while active.any():
            mid = 0.5 * (lo + hi)
            up = q(mid) > 0
            lo = np.where(active & up, mid, lo)
            hi = np.where(active & ~up, mid, hi)
            active &= (hi - lo) >= tol
        out = 0.5 * (lo + hi)
        # converged onto the clamp point: the curve is concave wherever positive
        valid &= ~(kink & (out - lo0 < tol))
        return np.where(valid, out, np.nan)
