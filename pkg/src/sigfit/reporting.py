"""Result tables, incidence validation series and curve exports."""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sigfit.errors import NoInflection, NotConverged, ShapeError
from sigfit.estimation import NlmeModel
from sigfit.growth import TransformKind, curve_cases, derived_quantities, transform_invert
from sigfit.inference import (
    DEFAULT_SEED,
    InflectionDateInterval,
    IntervalEstimate,
    inflection_date_interval,
    nmax_interval,
)
from sigfit.ingest import GroupSeries

TABLE_COLUMNS = (
    "country", "model", "infl_date", "n_infl_midway", "n_infl_curve",
    "n_max", "n_max_lo", "n_max_hi", "phi1", "phi2", "phi3", "phi4",
)
EXTRA_COLUMNS = ("infl_lo", "infl_hi", "n0", "converged")


@dataclass(frozen=True)
class FitReport:
    """One table row: a group's curve under one transform."""

    group_id: str
    model: str
    origin: dt.date
    phi: tuple
    converged: bool
    n0: float
    n_max: float
    n_infl_midway: float
    n_infl_curve: float
    t_star: float | None
    inflection: InflectionDateInterval | None
    inflection_point: dt.date | None
    n_max_interval: IntervalEstimate | None

    def __post_init__(self):
        for name in ("n0", "n_max", "n_infl_midway", "n_infl_curve"):
            v = getattr(self, name)
            if not (v >= 0.0):
                raise ValueError(f"{name} must be a nonnegative case count, got {v}")
        iv = self.n_max_interval
        if iv is not None and not (iv.lower <= iv.point <= iv.upper):
            raise ValueError(f"n_max interval out of order: {iv}")


def _model_sort_key(label: str):
    try:
        return (0, float(label), "")
    except ValueError:
        return (1, 0.0, label)


def build_report(m: NlmeModel, group_id: str, k: TransformKind, origin: dt.date,
                 level: float = 0.95, seed: int = DEFAULT_SEED) -> FitReport:
    """Point estimates, and intervals when the fit converged."""
    p = m.params(group_id)
    n0 = max(float(transform_invert(k, p.phi1)), 0.0)
    n_max = float(transform_invert(k, p.phi2))
    midway = 0.5 * (p.phi1 + p.phi2) if k.kind == "identity" else math.sqrt(n0 * n_max)
    midway = max(midway, 0.0)
    try:
        dq = derived_quantities(k, p)
        t_star, n_curve = dq.t_star, dq.n_infl_curve
    except NoInflection:
        t_star, n_curve = None, float("nan")
    infl = iv = None
    if m.converged:
        iv = nmax_interval(m, group_id, k, level)
        if t_star is not None:
            infl = inflection_date_interval(m, group_id, k, origin, level=level, seed=seed)
    point = None if t_star is None else origin + dt.timedelta(days=math.floor(t_star + 0.5))
    return FitReport(
        group_id=group_id,
        model=k.label,
        origin=origin,
        phi=tuple(float(v) for v in p.as_array()),
        converged=bool(m.converged),
        n0=n0,
        n_max=n_max,
        n_infl_midway=midway,
        n_infl_curve=n_curve if math.isfinite(n_curve) else 0.0,
        t_star=t_star,
        inflection=infl,
        inflection_point=point,
        n_max_interval=iv,
    )


# ---------------------------------------------------------------------------
# Results table
# ---------------------------------------------------------------------------

def _count(x) -> str:
    if x is None or not math.isfinite(x):
        return ""
    return str(int(math.floor(x + 0.5)))


def _row(r: FitReport) -> list[str]:
    iv = r.n_max_interval
    infl = r.inflection
    return [
        r.group_id,
        r.model,
        r.inflection_point.isoformat() if r.inflection_point else "",
        _count(r.n_infl_midway),
        _count(r.n_infl_curve) if r.t_star is not None else "",
        _count(r.n_max),
        _count(iv.lower) if iv else "",
        _count(iv.upper) if iv else "",
        *(f"{v:.2f}" for v in r.phi),
        infl.lower.isoformat() if infl else "",
        infl.upper.isoformat() if infl else "",
        _count(r.n0),
        "true" if r.converged else "false",
    ]


def results_table(reports, format: str = "csv") -> bytes:
    """Render reports as CSV (RFC 4180 quoting, CRLF rows) or a Markdown table.

    Rows are ordered by group name, then model.
    """
    ordered = sorted(reports, key=lambda r: (r.group_id, _model_sort_key(r.model)))
    header = list(TABLE_COLUMNS + EXTRA_COLUMNS)
    rows = [_row(r) for r in ordered]
    if format == "csv":
        return _csv_bytes(header, rows)
    if format == "markdown":
        def line(cells):
            return "| " + " | ".join(c.replace("|", "\\|") for c in cells) + " |"
        out = [line(header), "|" + "---|" * len(header)]
        out += [line(r) for r in rows]
        return ("\n".join(out) + "\n").encode("utf-8")
    raise ValueError(f"format must be 'csv' or 'markdown', got {format!r}")


# ---------------------------------------------------------------------------
# Validation series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationSeries:
    dates: tuple
    observed: np.ndarray
    fitted: np.ndarray

    def rows(self):
        for d, o, f in zip(self.dates, self.observed, self.fitted):
            yield d, int(o), float(f)


def validation_series(g: GroupSeries, fitted) -> ValidationSeries:
    """Reported vs. fitted daily incidence on the group's dates.

    The first observed value is the first retained cumulative count (all cases
    up to and including the origin date); fitted incidence is floored at 0.
    """
    fitted = np.asarray(fitted, dtype=float)
    if fitted.shape != (len(g.dates),):
        raise ShapeError(f"{g.group_id}: {fitted.size} fitted values for {len(g.dates)} dates")
    observed = np.diff(g.cumulative, prepend=0)
    fitted_inc = np.maximum(np.diff(fitted, prepend=0.0), 0.0)
    return ValidationSeries(tuple(g.dates), observed, fitted_inc)


# ---------------------------------------------------------------------------
# File output
# ---------------------------------------------------------------------------

def safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", text)


def atomic_write(path, data: bytes) -> Path:
    """Write via a temporary file in the same directory, then rename into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _csv_bytes(header, rows) -> bytes:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue().encode("utf-8")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


class _Plot:
    """Minimal SVG line chart with a linear y axis starting at 0."""

    W, H, PAD = 720, 420, 56

    def __init__(self, title: str, n_x: int, y_max: float):
        self.n_x = max(n_x, 2)
        self.y_max = y_max if y_max > 0 else 1.0
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.W}" height="{self.H}" '
            f'viewBox="0 0 {self.W} {self.H}" font-family="sans-serif" font-size="11">',
            f'<rect width="{self.W}" height="{self.H}" fill="white"/>',
            f'<text x="{self.W / 2:.0f}" y="20" text-anchor="middle" font-size="14">{_xml(title)}</text>',
        ]
        x0, y0, x1, y1 = self.PAD, self.H - self.PAD, self.W - 16, 32
        self.parts.append(f'<polyline points="{x0},{y1} {x0},{y0} {x1},{y0}" fill="none" stroke="black"/>')
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            y = self.y(frac * self.y_max)
            self.parts.append(f'<text x="{x0 - 4}" y="{_fmt(y + 4)}" text-anchor="end">'
                              f'{frac * self.y_max:.0f}</text>')

    def x(self, i):
        return self.PAD + (self.W - 16 - self.PAD) * i / (self.n_x - 1)

    def y(self, v):
        return (self.H - self.PAD) - (self.H - self.PAD - 32) * v / self.y_max

    def x_labels(self, labels):
        step = max(1, len(labels) // 6)
        for i in range(0, len(labels), step):
            self.parts.append(f'<text x="{_fmt(self.x(i))}" y="{self.H - self.PAD + 16}" '
                              f'text-anchor="middle">{_xml(labels[i])}</text>')

    def line(self, values, color, dash=None, start=0):
        pts = " ".join(f"{_fmt(self.x(start + i))},{_fmt(self.y(v))}" for i, v in enumerate(values))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{extra}/>')

    def points(self, values, color):
        for i, v in enumerate(values):
            self.parts.append(f'<circle cx="{_fmt(self.x(i))}" cy="{_fmt(self.y(v))}" r="1.8" fill="{color}"/>')

    def bars(self, values, color):
        w = max((self.W - 16 - self.PAD) / self.n_x * 0.8, 0.5)
        for i, v in enumerate(values):
            top = self.y(v)
            self.parts.append(f'<rect x="{_fmt(self.x(i) - w / 2)}" y="{_fmt(top)}" width="{_fmt(w)}" '
                              f'height="{_fmt(self.y(0) - top)}" fill="{color}"/>')

    def legend(self, entries):
        for j, (label, color) in enumerate(entries):
            y = 40 + 14 * j
            self.parts.append(f'<rect x="{self.PAD + 10}" y="{y - 8}" width="10" height="3" fill="{color}"/>'
                              f'<text x="{self.PAD + 24}" y="{y - 4}">{_xml(label)}</text>')

    def render(self) -> bytes:
        return ("\n".join(self.parts + ["</svg>"]) + "\n").encode("utf-8")


def _xml(text: str) -> str:
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _prepare_dir(out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    return out


def export_curves(m: NlmeModel, k: TransformKind, groups, horizon_days: int, out_dir,
                  level: float = 0.95) -> list[Path]:
    """Per-group fitted-curve CSV and SVG extending ``horizon_days`` past the data.

    CSV columns: date, fitted_cumulative, fitted_incidence, n_max, n_max_hi.
    """
    if not m.converged:
        raise NotConverged("curve export needs a converged model")
    if horizon_days < 0:
        raise ValueError("horizon_days must be nonnegative")
    out = _prepare_dir(out_dir)
    written = []
    for g in groups:
        p = m.params(g.group_id)
        iv = nmax_interval(m, g.group_id, k, level)
        n = len(g.dates) + horizon_days
        t = np.arange(n, dtype=float)
        cum = np.asarray(curve_cases(k, p, t), dtype=float)
        inc = np.maximum(np.diff(cum, prepend=0.0), 0.0)
        dates = [g.origin + dt.timedelta(days=i) for i in range(n)]
        rows = [(d.isoformat(), f"{c:.3f}", f"{i:.3f}", f"{iv.point:.3f}", f"{iv.upper:.3f}")
                for d, c, i in zip(dates, cum, inc)]
        stem = f"{safe_name(g.group_id)}_{safe_name(k.label)}"
        written.append(atomic_write(out / f"{stem}.csv", _csv_bytes(
            ("date", "fitted_cumulative", "fitted_incidence", "n_max", "n_max_hi"), rows)))

        plot = _Plot(f"{g.group_id}, model {k.label}: cumulative cases", n,
                     1.05 * max(iv.upper, float(g.cumulative.max()), float(cum.max())))
        plot.points(g.cumulative.astype(float), "#444444")
        plot.line(cum, "#c0392b")
        tail = max(len(g.dates) - 1, 0)
        plot.line([iv.point] * (n - tail), "#1f4e9c", start=tail)
        plot.line([iv.upper] * (n - tail), "#1f4e9c", dash="6,4", start=tail)
        plot.x_labels([d.isoformat() for d in dates])
        plot.legend([("reported", "#444444"), ("fitted", "#c0392b"),
                     ("n_max and upper CI", "#1f4e9c")])
        written.append(atomic_write(out / f"{stem}.svg", plot.render()))
    return written


def export_validation(v: ValidationSeries, group_id: str, model: str, out_dir) -> list[Path]:
    """Paired incidence CSV and bar-plus-line SVG for one group."""
    out = _prepare_dir(out_dir)
    stem = f"{safe_name(group_id)}_{safe_name(model)}_validation"
    rows = [(d.isoformat(), o, f"{f:.3f}") for d, o, f in v.rows()]
    csv_path = atomic_write(out / f"{stem}.csv", _csv_bytes(
        ("date", "observed_incidence", "fitted_incidence"), rows))
    n = len(v.dates)
    # the first observed value lumps everything before the origin; keep it off the scale
    y_top = float(max(v.observed[1:].max(initial=0), v.fitted[1:].max(initial=0)))
    plot = _Plot(f"{group_id}, model {model}: daily incidence", n, 1.05 * y_top)
    plot.bars(np.minimum(v.observed, y_top).astype(float), "#9aa5b1")
    plot.line(np.minimum(v.fitted, y_top), "#c0392b")
    plot.x_labels([d.isoformat() for d in v.dates])
    plot.legend([("reported", "#9aa5b1"), ("fitted", "#c0392b")])
    svg_path = atomic_write(out / f"{stem}.svg", plot.render())
    return [csv_path, svg_path]
