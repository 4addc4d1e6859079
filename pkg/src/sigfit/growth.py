"""Four-parameter logistic curves, response transforms and derived quantities.

All case-scale quantities are obtained by back-transforming the fitted
transformed-scale curve.  Transformed values below zero under a power
transform map to zero cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sigfit import _core
from sigfit.errors import NoInflection, TransformDomainError

__all__ = [
    "TransformKind",
    "FplmParams",
    "DerivedQuantities",
    "fplm_eval",
    "fplm_gradient",
    "transform_apply",
    "transform_invert",
    "curve_cases",
    "derived_quantities",
    "inflection_time",
]


@dataclass(frozen=True)
class TransformKind:
    """Response transform: identity, power ``y**theta`` (0 < theta <= 1) or log10."""

    kind: str
    theta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("identity", "power", "log10"):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.kind == "power" and not (0.0 < self.theta <= 1.0):
            raise ValueError(f"power exponent must satisfy 0 < theta <= 1, got {self.theta}")

    @classmethod
    def identity(cls) -> TransformKind:
        return cls("identity", 1.0)

    @classmethod
    def power(cls, theta: float) -> TransformKind:
        return cls("power", float(theta))

    @classmethod
    def log10(cls) -> TransformKind:
        return cls("log10", 0.0)

    @classmethod
    def from_model(cls, model: int) -> TransformKind:
        """Model 1 = no transform, 2 = square root, 3 = log10."""
        try:
            return {1: cls.identity, 2: lambda: cls.power(0.5), 3: cls.log10}[int(model)]()
        except KeyError:
            raise ValueError(f"model must be 1, 2 or 3, got {model}") from None

    @classmethod
    def from_theta(cls, theta: float) -> TransformKind:
        """Box-Cox style family: theta = 1 identity, theta = 0 log10, else power."""
        theta = float(theta)
        if theta == 0.0:
            return cls.log10()
        if theta == 1.0:
            return cls.identity()
        return cls.power(theta)

    @property
    def code(self) -> int:
        return {"identity": _core.IDENTITY, "power": _core.POWER, "log10": _core.LOG10}[self.kind]

    @property
    def label(self) -> str:
        """Short label used in file names and result tables."""
        if self.kind == "identity":
            return "1"
        if self.kind == "log10":
            return "3"
        if self.theta == 0.5:
            return "2"
        return f"theta={self.theta:g}"


@dataclass(frozen=True)
class FplmParams:
    phi1: float
    phi2: float
    phi3: float
    phi4: float

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"non-finite FPLM parameters {tuple(vals)}")
        if self.phi4 <= 0:
            raise ValueError(f"phi4 must be positive, got {self.phi4}")
        if self.phi2 <= self.phi1:
            raise ValueError(f"phi2 must exceed phi1, got {self.phi1} >= {self.phi2}")

    @classmethod
    def from_array(cls, values) -> FplmParams:
        v = np.asarray(values, dtype=float).ravel()
        return cls(float(v[0]), float(v[1]), float(v[2]), float(v[3]))

    def as_array(self) -> np.ndarray:
        return np.array([self.phi1, self.phi2, self.phi3, self.phi4])


@dataclass(frozen=True)
class DerivedQuantities:
    n0: float
    n_max: float
    n_infl_midway: float
    n_infl_curve: float
    t_star: float


def _check_t(t):
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("time index must be finite")
    return arr


def fplm_eval(p: FplmParams, t):
    """phi1 + (phi2 - phi1) / (1 + exp((phi3 - t) / phi4)); scalar in, scalar out."""
    arr = _check_t(t)
    out = _core.fplm_value(p.as_array(), np.atleast_1d(arr).ravel())
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def fplm_gradient(p: FplmParams, t):
    """Analytic derivatives with respect to (phi1, phi2, phi3, phi4).

    Returns a length-4 vector for scalar ``t`` and an ``n x 4`` matrix otherwise.
    """
    arr = _check_t(t)
    _, jac = _core.fplm_value_jac(p.as_array(), np.atleast_1d(arr).ravel())
    if arr.ndim == 0:
        return jac[0]
    return jac


def transform_apply(k: TransformKind, y, where: str | None = None):
    """Map case counts onto the fitting scale."""
    arr = np.asarray(y, dtype=float)
    if k.kind == "identity":
        out = arr.copy()
    elif k.kind == "power":
        if np.any(arr < 0):
            raise TransformDomainError(_domain_msg("power transform of negative count", arr < 0, where))
        out = arr ** k.theta
    else:
        if np.any(arr <= 0):
            raise TransformDomainError(_domain_msg("log10 of non-positive count", arr <= 0, where))
        out = np.log10(arr)
    return float(out) if out.ndim == 0 else out


def _domain_msg(what, bad, where):
    idx = np.flatnonzero(np.atleast_1d(bad))
    msg = f"{what} at position {int(idx[0])}" if idx.size else what
    return f"{msg} ({where})" if where else msg


def transform_invert(k: TransformKind, z):
    """Back-transform to cases; negative power-scale inputs clamp to zero."""
    arr = np.asarray(z, dtype=float)
    if k.kind == "identity":
        out = arr.copy()
    elif k.kind == "power":
        out = np.maximum(arr, 0.0) ** (1.0 / k.theta)
    else:
        out = 10.0 ** arr
    return float(out) if out.ndim == 0 else out


def curve_cases(k: TransformKind, p: FplmParams, t):
    """Fitted cumulative cases on the original scale (never negative)."""
    return np.maximum(transform_invert(k, fplm_eval(p, t)), 0.0)


def inflection_time(k: TransformKind, p: FplmParams) -> float:
    """Day index where the back-transformed cumulative curve changes from convex to concave.

    Bisection on the sign of the curve's second derivative inside
    ``phi3 +/- 20 phi4``; exact ``phi3`` for the identity transform.
    """
    t = _core.inflection_batch(p.as_array()[None, :], k.code, k.theta)[0]
    if not math.isfinite(t):
        raise NoInflection(f"no inflection of the back-transformed curve for {p}")
    return float(t)


def derived_quantities(k: TransformKind, p: FplmParams) -> DerivedQuantities:
    n0 = max(transform_invert(k, p.phi1), 0.0)
    n_max = transform_invert(k, p.phi2)
    if k.kind == "identity":
        midway = 0.5 * (p.phi1 + p.phi2)
    else:
        midway = math.sqrt(n0 * n_max)
    t_star = inflection_time(k, p)
    n_curve = max(transform_invert(k, fplm_eval(p, t_star)), 0.0)
    return DerivedQuantities(n0=n0, n_max=n_max, n_infl_midway=midway,
                             n_infl_curve=n_curve, t_star=t_star)
