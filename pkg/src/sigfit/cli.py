"""Command-line front end: ingest -> fit -> intervals -> tables and exports.

Exit codes: 0 success, 2 when some model did not converge (outputs are still
written and flagged), 1 on input, schema, configuration or validation errors.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sigfit.errors import SigfitError
from sigfit.estimation import ALL_RANDOM, NlmeModel, SolverControls, fit_nlme
from sigfit.growth import FplmParams, TransformKind, curve_cases
from sigfit.inference import DEFAULT_SEED
from sigfit.ingest import (
    DEFAULT_TRIM,
    FIXTURE_PATH,
    DEFAULT_GROUPS,
    build_group,
    parse_csv,
    resolve_group,
    to_observations,
)
from sigfit.reporting import (
    atomic_write,
    build_report,
    export_curves,
    export_validation,
    results_table,
    validation_series,
)

log = logging.getLogger("sigfit")

DUMP_NAME = "fit_dump.json"
DUMP_VERSION = 1


class UsageError(Exception):
    pass


class ValidationError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    input: str = str(FIXTURE_PATH)
    cutoff: dt.date | None = None
    groups: tuple = tuple(DEFAULT_GROUPS)
    models: tuple = (TransformKind.power(0.5),)
    trim: int = DEFAULT_TRIM
    random_mask: tuple = ALL_RANDOM
    seed: int = DEFAULT_SEED
    out: str = "sigfit-out"
    horizon: int = 60
    level: float = 0.95
    controls: SolverControls = field(default_factory=SolverControls)

    def __post_init__(self):
        if not self.models:
            raise UsageError("at least one model is required")
        if len(self.groups) < 3:
            raise UsageError(f"the mixed-effects fit needs at least 3 groups, got {len(self.groups)}")
        if self.trim < 1:
            raise UsageError("trim must be at least 1")
        if not 0.0 < self.level < 1.0:
            raise UsageError("level must be in (0, 1)")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

CONFIG_KEYS = ("input", "cutoff", "groups", "models", "theta", "trim", "seed", "out",
               "random_mask", "horizon", "level")


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment; dashes in keys act as underscores."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror or exc}") from None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        values[key] = value
    return values


def _parse_models(models: str | None, theta: str | None) -> tuple:
    out = []
    if models:
        for item in models.split(","):
            item = item.strip()
            if item not in ("1", "2", "3"):
                raise UsageError(f"models must be drawn from 1,2,3, got {item!r}")
            out.append(TransformKind.from_model(int(item)))
    if theta:
        for item in theta.split(","):
            try:
                out.append(TransformKind.from_theta(float(item)))
            except ValueError as exc:
                raise UsageError(f"bad theta {item!r}: {exc}") from None
    if not out:
        out.append(TransformKind.power(0.5))
    unique = []
    for k in out:
        if k not in unique:
            unique.append(k)
    return tuple(unique)


def _parse_mask(text: str) -> tuple:
    if len(text) != 4 or set(text) - {"0", "1"} or "1" not in text:
        raise UsageError(f"random mask must be four 0/1 flags with at least one 1, got {text!r}")
    return tuple(c == "1" for c in text)


def _parse_int(name, text):
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"{name} must be an integer, got {text!r}") from None


def resolve_config(args: argparse.Namespace, env=None) -> RunConfig:
    """Merge command-line flags over the config file over defaults.

    ``SIGFIT_SEED`` supplies the seed when neither flag nor file sets it.
    """
    env = os.environ if env is None else env
    merged = read_config_file(args.config) if args.config else {}
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = str(value)
    if "seed" not in merged and env.get("SIGFIT_SEED"):
        merged["seed"] = env["SIGFIT_SEED"]

    kw = {}
    if "input" in merged:
        kw["input"] = merged["input"]
    if "cutoff" in merged:
        try:
            kw["cutoff"] = dt.date.fromisoformat(merged["cutoff"])
        except ValueError:
            raise UsageError(f"cutoff must be YYYY-MM-DD, got {merged['cutoff']!r}") from None
    if "groups" in merged:
        g = merged["groups"].strip()
        kw["groups"] = tuple(DEFAULT_GROUPS) if g == "paper12" else tuple(x.strip() for x in g.split(",") if x.strip())
    if "models" in merged or "theta" in merged:
        kw["models"] = _parse_models(merged.get("models"), merged.get("theta"))
    if "trim" in merged:
        kw["trim"] = _parse_int("trim", merged["trim"])
    if "seed" in merged:
        kw["seed"] = _parse_int("seed", merged["seed"])
    if "out" in merged:
        kw["out"] = merged["out"]
    if "random_mask" in merged:
        kw["random_mask"] = _parse_mask(merged["random_mask"])
    if "horizon" in merged:
        kw["horizon"] = _parse_int("horizon", merged["horizon"])
    if "level" in merged:
        try:
            kw["level"] = float(merged["level"])
        except ValueError:
            raise UsageError(f"level must be a number, got {merged['level']!r}") from None
    return RunConfig(**kw)


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

def _read_input(path: str):
    if path == "-":
        data = sys.stdin.buffer.read()
    else:
        with open(path, "rb") as fh:
            data = fh.read()
    return parse_csv(data), hashlib.sha256(data).hexdigest()


def _build_series(cfg: RunConfig, records):
    series = []
    for name in cfg.groups:
        selector = resolve_group(name, records)
        series.append(build_group(records, selector, cfg.trim, as_of=cfg.cutoff))
    return series


def _model_dump(k: TransformKind, m: NlmeModel, series_by_id) -> dict:
    mask = np.asarray(m.random_mask)
    return {
        "model": k.label,
        "transform": {"kind": k.kind, "theta": k.theta},
        "beta": [float(v) for v in m.beta],
        "sigma_diag": [float(v) for v in np.diag(m.sigma)],
        "sigma2": float(m.sigma2),
        "random_mask": "".join("1" if v else "0" for v in mask),
        "converged": bool(m.converged),
        "iterations": int(m.iterations),
        "loglik_linearized": float(m.loglik_linearized),
        "flags": sorted(m.flags),
        "excluded": dict(sorted(m.excluded.items())),
        "groups": {
            gid: {
                "b": [float(v) for v in m.b[gid]],
                "origin": series_by_id[gid].origin.isoformat(),
                "n_obs": len(series_by_id[gid]),
            }
            for gid in sorted(m.groups)
        },
    }


def cmd_fit(cfg: RunConfig) -> int:
    feed, digest = _read_input(cfg.input)
    if feed.rejects:
        print(f"sigfit: {len(feed.rejects)} malformed rows skipped "
              f"(first: line {feed.rejects[0].line}, {feed.rejects[0].reason})", file=sys.stderr)
    series = _build_series(cfg, feed.records)
    by_id = {g.group_id: g for g in series}
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    reports, dumps, not_converged = [], [], []
    for k in cfg.models:
        obs = [to_observations(g, k) for g in series]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            m = fit_nlme(obs, cfg.random_mask, cfg.controls)
        for w in caught:
            print(f"sigfit: model {k.label}: {w.message}", file=sys.stderr)
        if not m.converged:
            not_converged.append(k.label)
            print(f"sigfit: model {k.label} did not converge after {m.iterations} iterations; "
                  "rows are flagged converged=false and have no intervals", file=sys.stderr)
        for gid in m.groups:
            reports.append(build_report(m, gid, k, by_id[gid].origin, cfg.level, cfg.seed))
        if m.converged:
            export_curves(m, k, [by_id[g] for g in m.groups], cfg.horizon, out, cfg.level)
        dumps.append(_model_dump(k, m, by_id))

    atomic_write(out / "results.csv", results_table(reports, "csv"))
    atomic_write(out / "results.md", results_table(reports, "markdown"))
    dump = {
        "version": DUMP_VERSION,
        "input_sha256": digest,
        "cutoff": cfg.cutoff.isoformat() if cfg.cutoff else None,
        "trim": cfg.trim,
        "seed": cfg.seed,
        "groups": list(cfg.groups),
        "fits": dumps,
    }
    atomic_write(out / DUMP_NAME, (json.dumps(dump, indent=2, sort_keys=True) + "\n").encode("utf-8"))
    return 2 if not_converged else 0


def _load_dump(path) -> dict:
    try:
        dump = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read fit dump {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"fit dump {path} is not valid JSON: {exc}") from None
    if not isinstance(dump, dict) or dump.get("version") != DUMP_VERSION or "fits" not in dump:
        raise ValidationError(f"{path} is not a version-{DUMP_VERSION} sigfit fit dump")
    return dump


def _check_fit(fit: dict) -> tuple[TransformKind, np.ndarray]:
    label = fit.get("model")
    try:
        tr = fit["transform"]
        k = TransformKind(tr["kind"], float(tr["theta"]))
        beta = np.asarray(fit["beta"], dtype=float)
        sigma_diag = np.asarray(fit["sigma_diag"], dtype=float)
        sigma2 = float(fit["sigma2"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"model {label}: malformed fit entry ({exc})") from None
    if not (math.isfinite(sigma2) and sigma2 > 0):
        raise ValidationError(f"model {label}: residual variance must be positive, got {sigma2}")
    if beta.shape != (4,) or not np.all(np.isfinite(beta)):
        raise ValidationError(f"model {label}: fixed effects must be four finite numbers")
    if sigma_diag.shape != (4,) or np.any(~np.isfinite(sigma_diag)) or np.any(sigma_diag < 0):
        raise ValidationError(f"model {label}: random-effect variances must be nonnegative")
    return k, beta


def cmd_validate(cfg: RunConfig, dump_path) -> int:
    """Reported vs. fitted daily incidence for every (group, model) in a fit dump."""
    dump = _load_dump(dump_path)
    feed, digest = _read_input(cfg.input)
    if dump.get("input_sha256") not in (None, digest):
        raise ValidationError("fit dump was produced from a different input file")
    trim = int(dump.get("trim", cfg.trim))
    cutoff = dt.date.fromisoformat(dump["cutoff"]) if dump.get("cutoff") else cfg.cutoff
    out = Path(cfg.out)
    n_files = 0
    for fit in dump["fits"]:
        k, beta = _check_fit(fit)
        for gid, entry in sorted(fit.get("groups", {}).items()):
            try:
                b = np.asarray(entry["b"], dtype=float)
                p = FplmParams.from_array(beta + b)
            except (KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"model {k.label}, group {gid}: invalid parameters ({exc})") from None
            g = build_group(feed.records, resolve_group(gid, feed.records), trim, as_of=cutoff)
            if g.origin.isoformat() != entry.get("origin") or len(g) != entry.get("n_obs"):
                raise ValidationError(f"model {k.label}, group {gid}: series in the input does not "
                                      "match the fit dump (origin or length differs)")
            fitted = curve_cases(k, p, np.arange(len(g), dtype=float))
            export_validation(validation_series(g, fitted), gid, k.label, out)
            n_files += 1
    print(f"sigfit: wrote {n_files} validation series to {out}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p):
    p.add_argument("--config", help="flat key=value file; flags override its values")
    p.add_argument("--input", help="ECDC CSV path, or - for standard input (default: bundled fixture)")
    p.add_argument("--cutoff", help="last date to use, YYYY-MM-DD")
    p.add_argument("--groups", help="comma-separated group names, or paper12 for the twelve default groups")
    p.add_argument("--models", help="comma-separated subset of 1 (identity), 2 (sqrt), 3 (log10)")
    p.add_argument("--theta", help="comma-separated power exponents in (0, 1] (0 means log10)")
    p.add_argument("--trim", help=f"minimum cumulative count at day 0 (default {DEFAULT_TRIM})")
    p.add_argument("--seed", help=f"resampling seed (default $SIGFIT_SEED or {DEFAULT_SEED})")
    p.add_argument("--out", help="output directory")
    p.add_argument("--random-mask", dest="random_mask", help="which of phi1..phi4 are random, e.g. 1111")
    p.add_argument("--horizon", help="days to extend exported curves past the data (default 60)")
    p.add_argument("--level", help="confidence level (default 0.95)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sigfit", description="Grouped logistic growth-curve fits to case counts.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    fit = sub.add_parser("fit", help="fit curves and write results tables, exports and a fit dump")
    _add_common(fit)
    val = sub.add_parser("validate", help="compare fitted and reported daily incidence from a fit dump")
    _add_common(val)
    val.add_argument("--dump", help=f"fit dump to validate (default OUT/{DUMP_NAME})")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error already reported
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "fit":
            return cmd_fit(cfg)
        dump = getattr(args, "dump", None) or str(Path(cfg.out) / DUMP_NAME)
        return cmd_validate(cfg, dump)
    except ValidationError as exc:
        print(f"sigfit: validation error: {exc}", file=sys.stderr)
    except (UsageError, SigfitError) as exc:
        print(f"sigfit: {exc}", file=sys.stderr)
    except OSError as exc:
        where = f" {exc.filename}" if exc.filename else ""
        print(f"sigfit: I/O error:{where} {exc.strerror or exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
