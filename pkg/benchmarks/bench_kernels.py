"""Compiled vs. pure-Python kernels.

Usage:  python benchmarks/bench_kernels.py [--repeat N]

Times the two hot paths (curve value + Jacobian, batched inflection solve)
in both backends and checks that they agree, then times a whole square-root
model fit plus report on the bundled data in a subprocess per backend.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from sigfit import _core, _fallback

try:
    from sigfit import _kernels
except ImportError:  # extension not built
    _kernels = None


def _draws(rng, m):
    phi1 = rng.uniform(-50, 5, m)
    return np.column_stack([phi1, phi1 + rng.uniform(50, 800, m),
                            rng.uniform(-20, 100, m), rng.uniform(2, 40, m)])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    phi = np.array([-11.62, 295.34, 12.65, 6.05])
    t = np.arange(150.0)
    params = _draws(rng, 1000)
    backends = {"python": _fallback}
    if _kernels is not None:
        backends["cython"] = _kernels
    print(f"selected backend at import: {_core.BACKEND}")
    cases = {
        "fplm_value_jac (n=150)": (lambda mod: mod.fplm_value_jac(phi, t), 2000),
        "inflection_batch sqrt (m=1000)": (lambda mod: mod.inflection_batch(params, _core.POWER, 0.5), 5),
        "inflection_batch log10 (m=1000)": (lambda mod: mod.inflection_batch(params, _core.LOG10, 0.0), 5),
    }
    for name, (fn, number) in cases.items():
        timings = {}
        for label, mod in backends.items():
            best = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat))
            timings[label] = best / number
        line = "  ".join(f"{k} {v * 1e6:10.1f} us" for k, v in timings.items())
        speed = f"  speedup {timings['python'] / timings['cython']:.1f}x" if "cython" in timings else ""
        print(f"{name:34s} {line}{speed}")
    if _kernels is not None:
        for code, theta in ((_core.IDENTITY, 1.0), (_core.POWER, 0.5), (_core.LOG10, 0.0)):
            a = _fallback.inflection_batch(params, code, theta)
            b = _kernels.inflection_batch(params, code, theta)
            assert np.array_equal(np.isnan(a), np.isnan(b))
            np.testing.assert_allclose(a[~np.isnan(a)], b[~np.isnan(b)], rtol=0, atol=1e-8)
        f0, j0 = _fallback.fplm_value_jac(phi, t)
        f1, j1 = _kernels.fplm_value_jac(phi, t)
        np.testing.assert_allclose(f0, f1, rtol=1e-13)
        np.testing.assert_allclose(j0, j1, rtol=1e-12, atol=1e-14)
        print("backends agree")
    _pipeline(args.repeat)


PIPELINE = """
import time, tempfile
from sigfit import _core
from sigfit.cli import main
best = float("inf")
for _ in range({repeat}):
    with tempfile.TemporaryDirectory() as out:
        t0 = time.perf_counter()
        main(["fit", "--models", "2", "--cutoff", "2020-06-15", "--out", out])
        best = min(best, time.perf_counter() - t0)
print(_core.BACKEND, best)
"""


def _pipeline(repeat):
    envs = {"python": dict(os.environ, SIGFIT_PURE_PYTHON="1")}
    if _kernels is not None:
        envs["cython"] = {k: v for k, v in os.environ.items() if k != "SIGFIT_PURE_PYTHON"}
    timings = {}
    for label, env in envs.items():
        out = subprocess.run([sys.executable, "-c", PIPELINE.format(repeat=repeat)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        assert out[0] == label, out
        timings[label] = float(out[1])
    line = "  ".join(f"{k} {v * 1e3:10.1f} ms" for k, v in timings.items())
    speed = f"  speedup {timings['python'] / timings['cython']:.1f}x" if "cython" in timings else ""
    print(f"{'fit + report, 12 groups, model 2':34s} {line}{speed}")


if __name__ == "__main__":
    main()
