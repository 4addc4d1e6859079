"""Confidence intervals for group parameters, outbreak size and inflection date."""

from __future__ import annotations

import datetime as dt
import math
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from sigfit import _core
from sigfit.errors import NotConverged
from sigfit.estimation import NlmeModel
from sigfit.growth import TransformKind, inflection_time, transform_invert

DEFAULT_SEED = 20200615
N_RESAMPLES = 1000
UNSTABLE_FRACTION = 0.2


@dataclass(frozen=True)
class IntervalEstimate:
    point: float
    lower: float
    upper: float
    level: float = 0.95
    method: str = "wald_endpoint_transform"


@dataclass(frozen=True)
class InflectionDateInterval:
    point: dt.date
    lower: dt.date
    upper: dt.date
    t_point: float
    t_lower: float
    t_upper: float
    level: float
    degenerate_fraction: float
    unstable: bool
    method: str = "bootstrap"


def _require_converged(m: NlmeModel):
    if not m.converged:
        raise NotConverged("model did not converge; intervals are not available")


def _z(level):
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    return float(norm.ppf(0.5 + 0.5 * level))


def phi_intervals(m: NlmeModel, group_id: str, level: float = 0.95) -> list[IntervalEstimate]:
    """Wald intervals for the group's (phi1..phi4).

    The variance combines the fixed-effect covariance with the conditional
    covariance of the group's random effect, both from the linearized model.
    """
    _require_converged(m)
    phi = m.params(group_id).as_array()
    sd = np.sqrt(np.clip(np.diag(m.phi_cov[group_id]), 0.0, None))
    z = _z(level)
    return [
        IntervalEstimate(float(p), float(p - z * s), float(p + z * s), level, "wald")
        for p, s in zip(phi, sd)
    ]


def nmax_interval(m: NlmeModel, group_id: str, k: TransformKind, level: float = 0.95) -> IntervalEstimate:
    """Outbreak size with the phi2 Wald endpoints pushed through the back-transform."""
    upper_asym = phi_intervals(m, group_id, level)[1]
    return IntervalEstimate(
        point=float(transform_invert(k, upper_asym.point)),
        lower=float(transform_invert(k, upper_asym.lower)),
        upper=float(transform_invert(k, upper_asym.upper)),
        level=level,
        method="wald_endpoint_transform",
    )


def _group_rng(seed: int, group_id: str) -> np.random.Generator:
    key = zlib.crc32(group_id.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


def resample_inflection_times(m: NlmeModel, group_id: str, k: TransformKind,
                              n: int = N_RESAMPLES, seed: int = DEFAULT_SEED):
    """Inflection day index for ``n`` parameter draws from the group's Gaussian.

    Draws that are invalid or have no inflection come back as NaN.
    """
    phi = m.params(group_id).as_array()
    cov = m.phi_cov[group_id]
    draws = _group_rng(seed, group_id).multivariate_normal(phi, cov, size=n, method="eigh")
    return draws, _core.inflection_batch(draws, k.code, k.theta)


def _round_day(t: float) -> int:
    return int(math.floor(t + 0.5))


def inflection_date_interval(m: NlmeModel, group_id: str, k: TransformKind, origin: dt.date,
                             level: float = 0.95, seed: int = DEFAULT_SEED,
                             n: int = N_RESAMPLES) -> InflectionDateInterval:
    """Calendar inflection date with a seeded parametric-resampling interval."""
    _require_converged(m)
    _z(level)
    t_point = inflection_time(k, m.params(group_id))
    _, t_draws = resample_inflection_times(m, group_id, k, n=n, seed=seed)
    ok = np.isfinite(t_draws)
    bad = 1.0 - ok.mean()
    if ok.any():
        t_lo, t_hi = np.quantile(t_draws[ok], [0.5 - 0.5 * level, 0.5 + 0.5 * level])
        t_lo, t_hi = float(t_lo), float(t_hi)
    else:
        t_lo = t_hi = t_point

    def to_date(t):
        return origin + dt.timedelta(days=_round_day(t))

    return InflectionDateInterval(
        point=to_date(t_point),
        lower=to_date(t_lo),
        upper=to_date(t_hi),
        t_point=t_point,
        t_lower=t_lo,
        t_upper=t_hi,
        level=level,
        degenerate_fraction=float(bad),
        unstable=bool(bad > UNSTABLE_FRACTION),
    )
