from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from sigfit import _core, _fallback

kernels = pytest.importorskip("sigfit._kernels", reason="compiled extension not built")


def _draws(seed, m=1000):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-100, 20, m)
    return np.column_stack([lo, lo + rng.uniform(0.5, 900, m), rng.uniform(-30, 130, m), rng.uniform(0.5, 60, m)])


def test_value_and_jacobian_agree():
    rng = np.random.default_rng(0)
    for phi in _draws(1, 200):
        t = np.sort(rng.uniform(-200, 300, 64))
        f0, j0 = _fallback.fplm_value_jac(phi, t)
        f1, j1 = kernels.fplm_value_jac(phi, t)
        assert_allclose(f1, f0, rtol=1e-13, atol=1e-13 * abs(phi[1]))
        assert_allclose(j1, j0, rtol=1e-12, atol=1e-300)
        assert_allclose(kernels.fplm_value(phi, t), f0, rtol=1e-13, atol=1e-13 * abs(phi[1]))


@pytest.mark.parametrize("code,theta", [(_core.IDENTITY, 1.0), (_core.POWER, 0.5),
                                        (_core.POWER, 0.3), (_core.LOG10, 0.0)])
def test_inflection_batch_agrees(code, theta):
    params = _draws(2)
    if code == _core.LOG10:
        params[:, 1] = params[:, 0] / 50 + np.abs(params[:, 1] - params[:, 0]) / 150 + 0.1
        params[:, 0] = params[:, 0] / 50
    a = _fallback.inflection_batch(params, code, theta)
    b = kernels.inflection_batch(params, code, theta)
    assert_array_equal(np.isnan(a), np.isnan(b))
    ok = ~np.isnan(a)
    assert ok.mean() > 0.5
    assert_allclose(b[ok], a[ok], rtol=0, atol=1e-8 * params[ok, 3].max())


def test_invalid_rows_give_nan_in_both():
    bad = np.array([[0.0, 1.0, 0.0, -1.0], [2.0, 1.0, 0.0, 1.0], [np.nan, 1.0, 0.0, 1.0]])
    for mod in (_fallback, kernels):
        assert np.all(np.isnan(mod.inflection_batch(bad, _core.POWER, 0.5)))


def test_backend_selection_by_environment():
    code = "from sigfit import _core; print(_core.BACKEND)"
    env = dict(os.environ, SIGFIT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env.pop("SIGFIT_PURE_PYTHON")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "cython"
