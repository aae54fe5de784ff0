"""Command-line interface: ``hiersel fit | screen | simulate``.

Exit codes: 0 for a complete report, 1 when the computation fails or is
incomplete, 2 for invalid input (configuration, CSV contents, arguments).
Reports are JSON with a top-level ``"schema_version": 1``; equal flags give
byte-identical output.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, HierselError, ParseError
from .glm import FAMILIES, Dataset, make_family, null_deviance
from .screening import SCREENS, default_gamma
from .search import select
from .simulation import SimConfig, run_experiment
from .tuning import KappaRule, gic, kappa, lambda_closed_form

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAILED, EXIT_INVALID = 0, 1, 2


# -- configuration -----------------------------------------------------------

@dataclass
class RunConfig:
    """Settings of ``fit`` and ``screen``; ``lam`` (``--lambda``) bypasses kappa."""

    response: str = "y"
    family: str = "gaussian"
    trials: str | None = None
    kappa: str = "ebic"
    gamma: float | None = None
    lam: float | None = None
    restarts: int = 10
    rounds: int = 2
    seed: int = 0
    max_size: int | None = None
    method: str = "assis"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; valid: {', '.join(FAMILIES)}")
        if self.trials is not None and self.family != "binomial":
            raise ConfigError("a trials column only applies to the binomial family")
        KappaRule.parse(self.kappa)
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if self.lam is not None and not self.lam > 0:
            raise ConfigError("lambda must be positive")
        if self.restarts < 1 or self.rounds < 1:
            raise ConfigError("restarts and rounds must be at least 1")
        if self.max_size is not None and self.max_size < 0:
            raise ConfigError("max_size must be non-negative")
        if self.method not in SCREENS:
            raise ConfigError(f"unknown screening method {self.method!r}; valid: {', '.join(SCREENS)}")


def _convert(field: dataclasses.Field, raw: str):
    text = raw.strip()
    kind = str(field.type)
    if "None" in kind and text.lower() in ("", "none"):
        return None
    try:
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"{field.name}: cannot read {raw!r} as {kind.split(' ')[0]}") from None
    return text


def parse_config_text(text: str, cls, source: str = "<config>"):
    """Build ``cls`` from flat ``key = value`` lines (``#`` starts a comment)."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in fields:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}; valid: {', '.join(fields)}")
        values[key] = _convert(fields[key], raw)
    return cls(**values)


def load_config(path, cls):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, cls, str(path))


# -- data ----------------------------------------------------------------------

def ingest_csv(path, response: str, trials: str | None = None) -> Dataset:
    """Read a numeric CSV with a header row into a standardized :class:`Dataset`.

    Every column other than the response (and the trials column) becomes a
    main effect named by its header. Constant columns cannot be
    standardized; they are dropped with a warning.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    for name in [response] + ([trials] if trials else []):
        if name not in header:
            raise ConfigError(f"column {name!r} not found; columns: {', '.join(header)}")
    if len(set(header)) != len(header):
        raise ParseError(f"{path}: duplicate column names in the header")
    body = rows[1:]
    if not body:
        raise ParseError(f"{path}: no data rows")
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        line = i + 2  # 1-based, after the header
        if len(row) != len(header):
            raise ParseError(f"{path}: line {line} has {len(row)} cells, expected {len(header)}")
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise ParseError(f"{path}: line {line}, column {header[c]!r}: "
                                 f"not a finite number: {cell!r}")
            values[i, c] = v
    special = {response, trials}
    keep = [c for c, h in enumerate(header) if h not in special]
    Xraw = values[:, keep]
    spread = Xraw.max(axis=0) - Xraw.min(axis=0) if len(body) else np.zeros(len(keep))
    const = [c for c, s in zip(keep, spread) if s == 0.0]
    if const:
        names = ", ".join(header[c] for c in const)
        warnings.warn(f"dropping constant column(s): {names}", UserWarning, stacklevel=2)
    keep = [c for c in keep if c not in const]
    if not keep:
        raise ConfigError("no usable predictor columns")
    y = values[:, header.index(response)]
    t = values[:, header.index(trials)] if trials else None
    return Dataset.from_arrays(y, values[:, keep], names=[header[c] for c in keep], trials=t)


def _family_for(cfg: RunConfig, data: Dataset):
    if cfg.family == "binomial":
        return make_family("binomial", data.trials if data.trials is not None else 1.0)
    return make_family(cfg.family)


def _term_label(data: Dataset, term) -> str | list:
    if isinstance(term, tuple):
        return [data.names[term[0]], data.names[term[1]]]
    return data.names[term]


# -- commands ------------------------------------------------------------------

def cmd_fit(cfg: RunConfig, path) -> dict:
    """Screen, select and report; raises on any failure."""
    data = ingest_csv(path, cfg.response, cfg.trials)
    family = _family_for(cfg, data)
    family.check_response(data.y)
    if cfg.lam is not None:
        lam = cfg.lam
        kap = lam * data.n
    else:
        kap = kappa(KappaRule.parse(cfg.kappa), data.n, data.p)
        lam = lambda_closed_form(kap, data.n)
    res = select(family, data, lam, restarts=cfg.restarts, rounds=cfg.rounds, gamma=cfg.gamma,
                 seed=cfg.seed, max_size=cfg.max_size, kappa=kap,
                 screen=SCREENS[cfg.method])
    fit = res.fit
    null_dev = null_deviance(family, data)
    coefs = {"(Intercept)": fit.beta0}
    for term in fit.alpha.terms():
        coefs[data.term_name(term)] = fit.beta[term]
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "fit",
        "config": dataclasses.asdict(cfg),
        "data": {"path": str(path), "n": data.n, "p": data.p, "names": data.names},
        "kappa": kap,
        "lambda": lam,
        "selected": {
            "mains": [_term_label(data, j) for j in fit.alpha.mains],
            "interactions": [_term_label(data, t) for t in fit.alpha.interactions],
        },
        "coefficients": coefs,
        "phi_hat": fit.phi_hat,
        "loglik": fit.loglik,
        "objective": res.objective,
        "deviance": fit.deviance,
        "null_deviance": null_dev,
        "deviance_explained": (null_dev - fit.deviance) / null_dev if null_dev > 0 else None,
        "gic": gic(fit, kap),
        "screens": [
            {"base": {"mains": [_term_label(data, j) for j in s.base_alpha.mains],
                      "interactions": [_term_label(data, t) for t in s.base_alpha.interactions]},
             "d_gamma": s.d_gamma,
             "active": [data.names[j] for j in s.shrunk]}
            for s in res.screens
        ],
        "restart_objectives": res.restarts,
    }


def cmd_screen(cfg: RunConfig, path) -> dict:
    data = ingest_csv(path, cfg.response, cfg.trials)
    family = _family_for(cfg, data)
    gamma = default_gamma(data.n) if cfg.gamma is None else cfg.gamma
    scr = SCREENS[cfg.method](family, data, gamma=gamma)
    order = sorted(scr.stats, key=lambda j: (-scr.stats[j], j))
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "screen",
        "config": dataclasses.asdict(cfg),
        "data": {"path": str(path), "n": data.n, "p": data.p},
        "method": scr.method,
        "gamma": gamma,
        "d_gamma": scr.d_gamma,
        "active": [data.names[j] for j in scr.shrunk],
        "ranking": [
            {"name": data.names[j], "statistic": scr.stats[j],
             "partner": None if scr.best_partner.get(j) is None else data.names[scr.best_partner[j]]}
            for j in order
        ],
    }


def cmd_simulate(cfg: SimConfig, progress=None):
    return run_experiment(cfg, progress=progress)


# -- argument handling ---------------------------------------------------------

def _add_run_flags(sp, with_search: bool):
    sp.add_argument("csv", help="numeric CSV with a header row")
    sp.add_argument("--config", help="flat 'key = value' file; flags override it")
    sp.add_argument("--response", help="response column (default y)")
    sp.add_argument("--family", choices=FAMILIES)
    sp.add_argument("--trials", help="binomial trials column (default: 1 trial per row)")
    sp.add_argument("--gamma", type=float, help="screening fraction (default 1/log n)")
    sp.add_argument("--method", choices=sorted(SCREENS), help="screening statistic (default assis)")
    sp.add_argument("--out", help="write the JSON report here instead of stdout")
    if with_search:
        sp.add_argument("--kappa", help="bic, hbic4, ebic (default) or a positive number")
        sp.add_argument("--lambda", dest="lam", type=float, help="use this lambda, bypassing kappa")
        sp.add_argument("--restarts", type=int)
        sp.add_argument("--rounds", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--max-size", dest="max_size", type=int,
                        help="cap on the number of selected terms (default n // 2)")
        sp.add_argument("--threads", type=int, default=1,
                        help="accepted for symmetry; fit runs in one process")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiersel", description="Interaction selection under strong hierarchy.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_flags(sub.add_parser("fit", help="screen and select a model from a CSV"), True)
    _add_run_flags(sub.add_parser("screen", help="run the screening stage only"), False)
    sim = sub.add_parser("simulate", help="run a simulation experiment from a config file")
    sim.add_argument("config", help="flat 'key = value' file with SimConfig fields")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--threads", type=int, help="worker processes over replications")
    sim.add_argument("--replications", type=int)
    sim.add_argument("--out", help="JSON report path (default: stdout)")
    sim.add_argument("--table", help="also write the text table here")
    return parser


_RUN_KEYS = [f.name for f in dataclasses.fields(RunConfig)]


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config, RunConfig) if args.config else RunConfig()
    overrides = {k: getattr(args, k) for k in _RUN_KEYS
                 if getattr(args, k, None) is not None}
    return dataclasses.replace(cfg, **overrides)


def _emit(text: str, path: str | None):
    if path:
        Path(path).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    warnings.formatwarning = lambda msg, *a, **k: f"hiersel: warning: {msg}\n"

    try:
        if args.command == "simulate":
            cfg = load_config(args.config, SimConfig)
            overrides = {k: getattr(args, k) for k in ("seed", "threads", "replications")
                         if getattr(args, k) is not None}
            cfg = dataclasses.replace(cfg, **overrides)
            report = cmd_simulate(cfg)
            _emit(report.to_json(), args.out)
            table = report.format_table()
            if args.table:
                Path(args.table).write_text(table + "\n")
            print(table, file=sys.stderr if not args.out else sys.stdout)
            if report.failures:
                print(f"hiersel: {report.failures} replication(s) failed; report incomplete",
                      file=sys.stderr)
                return EXIT_FAILED
            return EXIT_OK
        cfg = _run_config(args)
        report = cmd_fit(cfg, args.csv) if args.command == "fit" else cmd_screen(cfg, args.csv)
        _emit(json.dumps(report, indent=2, sort_keys=True), args.out)
        return EXIT_OK
    except (ConfigError, ParseError, DomainError) as exc:
        print(f"hiersel: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except HierselError as exc:
        print(f"hiersel: failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
