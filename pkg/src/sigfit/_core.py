"""Kernel backend selection.

The compiled extension is preferred; set ``SIGFIT_PURE_PYTHON=1`` to force the
numpy fallback (useful for benchmarking and for platforms without a compiler).
"""

from __future__ import annotations

import os

from sigfit import _fallback

IDENTITY, POWER, LOG10 = _fallback.IDENTITY, _fallback.POWER, _fallback.LOG10

_kernels = None
if not os.environ.get("SIGFIT_PURE_PYTHON"):
    try:
        from sigfit import _kernels
    except ImportError:
        _kernels = None

if _kernels is not None:
    BACKEND = "cython"
    fplm_value = _kernels.fplm_value
    fplm_value_jac = _kernels.fplm_value_jac
    inflection_batch = _kernels.inflection_batch
else:
    BACKEND = "python"
    fplm_value = _fallback.fplm_value
    fplm_value_jac = _fallback.fplm_value_jac
    inflection_batch = _fallback.inflection_batch
