from __future__ import annotations

import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal

from sigfit.errors import NotConverged
from sigfit.estimation import GroupObservations, NlmeModel, fit_nlme
from sigfit.growth import FplmParams, TransformKind, inflection_time, transform_invert
from sigfit.inference import (
    inflection_date_interval,
    nmax_interval,
    phi_intervals,
    resample_inflection_times,
)
from synthetic import logistic4, make_groups

ORIGIN = dt.date(2020, 3, 1)
SQRT = TransformKind.power(0.5)


def manual_model(phi, cov, converged=True):
    """One-group model with a prescribed parameter vector and covariance."""
    return NlmeModel(
        beta=np.asarray(phi, dtype=float),
        b={"g": np.zeros(4)},
        sigma=np.zeros((4, 4)),
        sigma2=1.0,
        random_mask=(True, True, True, True),
        loglik_linearized=0.0,
        converged=converged,
        iterations=1,
        groups=["g"],
        phi_cov={"g": np.asarray(cov, dtype=float)},
    )


@pytest.fixture(scope="module")
def synth_model():
    groups, truth = make_groups(1)
    return fit_nlme(groups), truth


# ---------------------------------------------------------------------------
# Wald intervals
# ---------------------------------------------------------------------------

def test_phi_intervals_are_symmetric(synth_model):
    m, _ = synth_model
    for g in m.groups:
        for iv in phi_intervals(m, g):
            assert iv.lower <= iv.point <= iv.upper
            assert iv.point == pytest.approx(0.5 * (iv.lower + iv.upper), rel=1e-12, abs=1e-12)
            assert iv.level == 0.95


def test_phi_interval_width_follows_level(synth_model):
    m, _ = synth_model
    narrow = phi_intervals(m, "g00", level=0.5)[1]
    wide = phi_intervals(m, "g00", level=0.99)[1]
    # 0.6745 and 2.5758 are the two-sided normal quantiles
    ratio = (wide.upper - wide.lower) / (narrow.upper - narrow.lower)
    assert ratio == pytest.approx(2.5758293 / 0.6744898, rel=1e-6)


def test_invalid_level(synth_model):
    m, _ = synth_model
    with pytest.raises(ValueError):
        phi_intervals(m, "g00", level=1.0)


def test_phi2_coverage_on_simulated_replicates():
    # 100 independent datasets; the first group's nominal 95% interval on its
    # own upper asymptote should contain the generating value most of the time
    hits = 0
    for rep in range(100):
        groups, truth = make_groups(5000 + rep)
        iv = phi_intervals(fit_nlme(groups), "g00")[1]
        hits += iv.lower <= truth[0, 1] <= iv.upper
    assert hits >= 85, hits


def test_noiseless_identical_groups_give_vanishing_width():
    t = np.arange(60.0)
    z = logistic4((0.0, 100.0, 25.0, 5.0), t)
    m = fit_nlme([GroupObservations(f"g{i}", t, z) for i in range(5)])
    assert m.converged
    for iv in phi_intervals(m, "g0")[1:]:
        assert iv.upper - iv.lower < 1e-4 * abs(iv.point)


def test_not_converged_is_refused():
    m = manual_model((0, 100, 10, 2), np.eye(4), converged=False)
    with pytest.raises(NotConverged):
        phi_intervals(m, "g")
    with pytest.raises(NotConverged):
        nmax_interval(m, "g", SQRT)
    with pytest.raises(NotConverged):
        inflection_date_interval(m, "g", SQRT, ORIGIN)


# ---------------------------------------------------------------------------
# outbreak size
# ---------------------------------------------------------------------------

def test_nmax_point_from_table_parameters():
    m = manual_model((-11.62, 295.34, 12.65, 6.05), np.diag([1.0, 4.0, 1.0, 0.1]))
    assert round(nmax_interval(m, "g", SQRT).point) == 87226


def test_nmax_identity_passes_interval_through(synth_model):
    m, _ = synth_model
    iv = nmax_interval(m, "g03", TransformKind.identity())
    phi2 = phi_intervals(m, "g03")[1]
    assert (iv.point, iv.lower, iv.upper) == (phi2.point, phi2.lower, phi2.upper)


def test_nmax_log10_endpoints():
    # a phi2 Wald interval of (6.34, 6.78) on the log10 scale
    half = 0.22
    sd = half / 1.959963984540054
    m = manual_model((-1.0, 6.56, 100.0, 40.0), np.diag([0.1, sd**2, 1.0, 1.0]))
    iv = nmax_interval(m, "g", TransformKind.log10())
    assert iv.lower == pytest.approx(2.19e6, rel=5e-3)
    assert iv.upper == pytest.approx(6.03e6, rel=5e-3)
    assert iv.lower < 3.9e6 < iv.upper


@settings(max_examples=60, deadline=None)
@given(
    st.floats(5.0, 2000.0),
    st.floats(0.01, 50.0),
    st.sampled_from([TransformKind.identity(), TransformKind.power(0.5), TransformKind.power(0.25)]),
)
def test_nmax_is_exact_image_of_phi2_interval(phi2, sd, k):
    m = manual_model((0.0, phi2, 10.0, 2.0), np.diag([1.0, sd**2, 1.0, 0.1]))
    w = phi_intervals(m, "g")[1]
    iv = nmax_interval(m, "g", k)
    assert iv.lower == transform_invert(k, w.lower)
    assert iv.upper == transform_invert(k, w.upper)
    if w.lower >= 0 or k.kind == "identity":
        assert iv.lower < iv.point < iv.upper


# ---------------------------------------------------------------------------
# inflection date
# ---------------------------------------------------------------------------

def test_identity_resampled_inflection_is_midpoint_draw(synth_model):
    m, _ = synth_model
    draws, t_star = resample_inflection_times(m, "g05", TransformKind.identity())
    assert draws.shape == (1000, 4)
    assert_array_equal(t_star, draws[:, 2])


def test_point_date_matches_generating_curve():
    misses = []
    for seed in range(10):
        groups, truth = make_groups(seed)
        m = fit_nlme(groups)
        for g, phi in zip(m.groups, truth):
            iv = inflection_date_interval(m, g, SQRT, ORIGIN)
            true_t = inflection_time(SQRT, FplmParams.from_array(phi))
            true_date = ORIGIN + dt.timedelta(days=int(np.floor(true_t + 0.5)))
            misses.append(abs((iv.point - true_date).days))
    assert max(misses) <= 1, np.bincount(misses)


def test_bootstrap_interval_brackets_point():
    inside = total = 0
    for seed in range(10):
        groups, _ = make_groups(100 + seed)
        m = fit_nlme(groups)
        for g in m.groups:
            iv = inflection_date_interval(m, g, SQRT, ORIGIN, seed=seed)
            assert iv.lower <= iv.upper
            inside += iv.t_lower <= iv.t_point <= iv.t_upper
            total += 1
    assert inside / total >= 0.99


def test_inflection_interval_is_deterministic(synth_model):
    m, _ = synth_model
    a = inflection_date_interval(m, "g02", SQRT, ORIGIN, seed=7)
    b = inflection_date_interval(m, "g02", SQRT, ORIGIN, seed=7)
    assert a == b
    c = inflection_date_interval(m, "g02", SQRT, ORIGIN, seed=8)
    assert (c.t_lower, c.t_upper) != (a.t_lower, a.t_upper)


def test_group_streams_do_not_depend_on_group_order(synth_model):
    m, _ = synth_model
    first = resample_inflection_times(m, "g07", SQRT, seed=3)[1]
    resample_inflection_times(m, "g01", SQRT, seed=3)
    assert_array_equal(resample_inflection_times(m, "g07", SQRT, seed=3)[1], first)
    other = resample_inflection_times(m, "g01", SQRT, seed=3)[1]
    assert not np.array_equal(first, other)


def test_wide_time_scale_uncertainty_flags_unstable():
    # a time-scale standard deviation larger than its value makes many draws
    # invalid (phi4 <= 0)
    m = manual_model((0.0, 300.0, 60.0, 2.0), np.diag([1.0, 4.0, 1.0, 9.0]))
    iv = inflection_date_interval(m, "g", SQRT, ORIGIN)
    assert iv.degenerate_fraction > 0.2 and iv.unstable
    m = manual_model((0.0, 300.0, 60.0, 12.0), np.diag([1.0, 4.0, 1.0, 0.25]))
    iv = inflection_date_interval(m, "g", SQRT, ORIGIN)
    assert iv.degenerate_fraction == 0.0 and not iv.unstable


def test_date_conversion_rounds_half_up():
    m = manual_model((0.0, 300.0, 9.5, 2.0), np.diag([1e-6] * 4))
    iv = inflection_date_interval(m, "g", TransformKind.identity(), ORIGIN)
    assert iv.t_point == 9.5
    assert iv.point == ORIGIN + dt.timedelta(days=10)
