"""Grouped four-parameter logistic growth curves for cumulative case counts.

Per-group least squares and a nonlinear mixed-effects fit under identity,
power and log10 response transforms, with outbreak-size and inflection-date
intervals.
"""

from sigfit._core import BACKEND
from sigfit.errors import SigfitError
from sigfit.estimation import (
    GroupObservations,
    NlmeModel,
    NlsFit,
    SolverControls,
    fit_nlme,
    fit_nls,
    predict_group,
    self_start,
)
from sigfit.growth import (
    DerivedQuantities,
    FplmParams,
    TransformKind,
    curve_cases,
    derived_quantities,
    fplm_eval,
    fplm_gradient,
    inflection_time,
    transform_apply,
    transform_invert,
)
from sigfit.inference import (
    IntervalEstimate,
    InflectionDateInterval,
    inflection_date_interval,
    nmax_interval,
    phi_intervals,
)
from sigfit.ingest import GroupSeries, build_group, parse_csv, resolve_group, to_observations
from sigfit.reporting import FitReport, build_report, export_curves, results_table, validation_series

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DerivedQuantities",
    "FitReport",
    "FplmParams",
    "GroupObservations",
    "GroupSeries",
    "InflectionDateInterval",
    "IntervalEstimate",
    "NlmeModel",
    "NlsFit",
    "SigfitError",
    "SolverControls",
    "TransformKind",
    "build_group",
    "build_report",
    "curve_cases",
    "derived_quantities",
    "export_curves",
    "fit_nlme",
    "fit_nls",
    "fplm_eval",
    "fplm_gradient",
    "inflection_date_interval",
    "inflection_time",
    "nmax_interval",
    "parse_csv",
    "phi_intervals",
    "predict_group",
    "resolve_group",
    "results_table",
    "self_start",
    "to_observations",
    "transform_apply",
    "transform_invert",
    "validation_series",
    "__version__",
]
