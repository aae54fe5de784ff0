"""Monte Carlo benchmark for interaction selection under strong hierarchy.

Two planted models are available, each with three main-effect cases:

linear (gaussian noise, variance 1)
    interactions (1,4), (1,5), (5,6) with coefficient 3; case ``a`` has
    mains 1-4 equal to 3, case ``b`` mains 1-6, case ``c`` no mains.
logistic (10 binomial trials per row)
    interactions (1,2), (1,3), (3,4) with coefficient 3; case ``a`` has
    mains 1-2, case ``b`` mains 1-4, case ``c`` none.

Variables are numbered from 1 in this docstring and in reports, from 0 in
code. Rows of the design are AR(1) gaussian in a randomly permuted
column order, so correlated columns are scattered across the matrix.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DomainError
from .glm import Dataset, make_family, standardize_columns
from .models import ModelAlpha, check_strong_hierarchy
from .search import select
from .tuning import KappaRule, kappa, lambda_closed_form

logger = logging.getLogger(__name__)

CASES = ("a", "b", "c")
MODELS = ("linear", "logistic")
SIGNAL = 3.0
LOGISTIC_TRIALS = 10

# 0-based truth
LINEAR_PAIRS = ((0, 3), (0, 4), (4, 5))
LINEAR_MAINS = {"a": (0, 1, 2, 3), "b": (0, 1, 2, 3, 4, 5), "c": ()}
LOGISTIC_PAIRS = ((0, 1), (0, 2), (2, 3))
LOGISTIC_MAINS = {"a": (0, 1), "b": (0, 1, 2, 3), "c": ()}


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _check_case(case):
    if case not in CASES:
        raise ConfigError(f"unknown case {case!r}; valid cases: {', '.join(CASES)}")


def gen_correlated_design(n: int, p: int, rho: float, seed=None) -> np.ndarray:
    """Rows with ``cov(x_j, x_k) = rho ** |tau(j) - tau(k)|``, then standardized."""
    if not 0.0 <= rho < 1.0:
        raise DomainError(f"rho must lie in [0, 1), got {rho}")
    rng = _rng(seed)
    tau = rng.permutation(p)
    E = rng.standard_normal((n, p))
    Z = np.empty((n, p))
    Z[:, 0] = E[:, 0]
    c = math.sqrt(1.0 - rho * rho)
    for t in range(1, p):
        Z[:, t] = rho * Z[:, t - 1] + c * E[:, t]
    # variable j sits at position tau[j] of the AR(1) chain
    return standardize_columns(Z[:, tau])


def true_model(model: str, case: str) -> ModelAlpha:
    """Strong-hierarchy truth: planted mains plus every parent of a pair."""
    _check_case(case)
    if model == "linear":
        pairs, mains = LINEAR_PAIRS, LINEAR_MAINS[case]
    elif model == "logistic":
        pairs, mains = LOGISTIC_PAIRS, LOGISTIC_MAINS[case]
    else:
        raise ConfigError(f"unknown model {model!r}; valid: {', '.join(MODELS)}")
    parents = {v for pr in pairs for v in pr}
    return ModelAlpha(tuple(set(mains) | parents), pairs)


def _linear_predictor(X, mains, pairs):
    eta = np.zeros(X.shape[0])
    for j in mains:
        eta += SIGNAL * X[:, j]
    for j, k in pairs:
        eta += SIGNAL * X[:, j] * X[:, k]
    return eta


def gen_linear_response(X, case: str, seed=None, noise: bool = True) -> np.ndarray:
    _check_case(case)
    if X.shape[1] < 6:
        raise DomainError("the linear design needs p >= 6")
    eta = _linear_predictor(X, LINEAR_MAINS[case], LINEAR_PAIRS)
    if not noise:
        return eta
    return eta + _rng(seed).standard_normal(X.shape[0])


def gen_logistic_response(X, case: str, seed=None) -> np.ndarray:
    _check_case(case)
    if X.shape[1] < 4:
        raise DomainError("the logistic design needs p >= 4")
    eta = _linear_predictor(X, LOGISTIC_MAINS[case], LOGISTIC_PAIRS)
    pi = 1.0 / (1.0 + np.exp(-eta))
    return _rng(seed).binomial(LOGISTIC_TRIALS, pi).astype(float)


def evaluate_selection(alpha_hat: ModelAlpha, alpha_star: ModelAlpha) -> dict:
    """True/false positive counts and percentages against the truth."""
    hat_m, star_m = set(alpha_hat.mains), set(alpha_star.mains)
    hat_i, star_i = set(alpha_hat.interactions), set(alpha_star.interactions)
    tp_m, tp_i = len(hat_m & star_m), len(hat_i & star_i)
    return {
        "tp_main": tp_m,
        "fp_main": len(hat_m - star_m),
        "tp_inter": tp_i,
        "fp_inter": len(hat_i - star_i),
        "tp_main_pct": 100.0 * tp_m / len(star_m) if star_m else 100.0,
        "tp_inter_pct": 100.0 * tp_i / len(star_i) if star_i else 100.0,
        "sh_violation": not check_strong_hierarchy(alpha_hat),
    }


SCALES = ("desk", "full")


@dataclass
class SimConfig:
    """One simulation experiment.

    ``n``, ``p`` and ``replications`` default by model and ``scale``: desk
    scale runs 100 replications with ``p = 500`` for the linear model; full
    scale restores 1000 replications and ``p = 2000``.
    """

    model: str = "linear"
    case: str = "a"
    scale: str = "desk"
    n: int | None = None
    p: int | None = None
    rho: float = 0.0
    replications: int | None = None
    seed: int = 0
    kappa_rule: str = "ebic"
    gamma: float | None = None
    restarts: int = 10
    rounds: int = 2
    threads: int = 1

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; valid: {', '.join(MODELS)}")
        _check_case(self.case)
        if self.scale not in SCALES:
            raise ConfigError(f"unknown scale {self.scale!r}; valid: {', '.join(SCALES)}")
        full = self.scale == "full"
        if self.n is None:
            self.n = 200 if self.model == "linear" else 500
        if self.p is None:
            self.p = (2000 if full else 500) if self.model == "linear" else 100
        if self.replications is None:
            self.replications = 1000 if full else 100
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError(f"rho must lie in [0, 1), got {self.rho}")
        if self.n < 3 or self.p < (6 if self.model == "linear" else 4):
            raise ConfigError("n or p too small for the planted model")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if self.restarts < 1 or self.rounds < 1 or self.threads < 1:
            raise ConfigError("restarts, rounds and threads must be at least 1")
        KappaRule.parse(self.kappa_rule)


@dataclass
class SimReport:
    config: dict
    tp_main_pct: float
    tp_inter_pct: float
    fp_main_mean: float
    fp_inter_mean: float
    sh_violation_pct: float
    sure_screen_pct: float
    sure_screen_first_pct: float
    failures: int
    per_replication: list = field(default_factory=list)

    def to_dict(self, timings: bool = False) -> dict:
        """Plain dict; per-replication runtimes only with ``timings``."""
        out = {"schema_version": 1, **asdict(self)}
        if not timings:
            out["per_replication"] = [{k: v for k, v in r.items() if k != "runtime"}
                                      for r in out["per_replication"]]
        return out

    def to_json(self, timings: bool = False) -> str:
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True)

    @property
    def total_runtime(self) -> float:
        return float(sum(r.get("runtime", 0.0) for r in self.per_replication))

    def format_table(self) -> str:
        cfg = self.config
        head = (f"model={cfg['model']} case=({cfg['case']}) rho={cfg['rho']} "
                f"n={cfg['n']} p={cfg['p']} reps={cfg['replications']}")
        rows = [
            head,
            f"{'':10s}{'':4s}{'TP %':>10s}{'FP #':>10s}",
            f"{'SHL0':10s}{'M':4s}{self.tp_main_pct:10.1f}{self.fp_main_mean:10.3f}",
            f"{'':10s}{'I':4s}{self.tp_inter_pct:10.1f}{self.fp_inter_mean:10.3f}",
            f"SH violations: {self.sh_violation_pct:.1f}%   "
            f"sure screening: {self.sure_screen_pct:.1f}% after round 1 "
            f"({self.sure_screen_first_pct:.1f}% first screen)   failures: {self.failures}",
        ]
        return "\n".join(rows)


def simulate_dataset(model: str, n: int, p: int, rho: float, case: str, rng) -> Dataset:
    X = gen_correlated_design(n, p, rho, rng)
    if model == "linear":
        y = gen_linear_response(X, case, rng)
        return Dataset.from_arrays(y, X, standardize=False)
    y = gen_logistic_response(X, case, rng)
    return Dataset.from_arrays(y, X, trials=np.full(n, float(LOGISTIC_TRIALS)), standardize=False)


def _alpha_record(alpha: ModelAlpha) -> dict:
    return {"mains": [j + 1 for j in alpha.mains],
            "interactions": [[j + 1, k + 1] for j, k in alpha.interactions]}


def run_replication(cfg: SimConfig, index: int, seed_seq: np.random.SeedSequence) -> dict:
    data_ss, search_ss = seed_seq.spawn(2)
    rng = np.random.default_rng(data_ss)
    t0 = time.perf_counter()
    data = simulate_dataset(cfg.model, cfg.n, cfg.p, cfg.rho, cfg.case, rng)
    family = make_family("gaussian" if cfg.model == "linear" else "binomial", data.trials)
    kap = kappa(KappaRule.parse(cfg.kappa_rule), data.n, data.p)
    lam = lambda_closed_form(kap, data.n)
    star = true_model(cfg.model, cfg.case)
    res = select(family, data, lam, restarts=cfg.restarts, rounds=cfg.rounds,
                 gamma=cfg.gamma, seed=int(search_ss.generate_state(1)[0]), kappa=kap)
    metrics = evaluate_selection(res.alpha_hat, star)
    # the active set once round 1 is over: the winner's mains plus the
    # re-screen around it (what round 2 searches); the first screen, from
    # the empty model, is reported alongside
    after_round1 = set(res.screens[min(1, len(res.screens) - 1)].shrunk)
    return {
        "replication": index,
        "alpha_hat": _alpha_record(res.alpha_hat),
        "alpha_star": _alpha_record(star),
        "sure_screen": set(star.mains) <= after_round1,
        "sure_screen_first": set(star.mains) <= set(res.screens[0].shrunk),
        "objective": res.objective,
        "runtime": time.perf_counter() - t0,
        **metrics,
    }


def _run_one(args):
    cfg, index, ss = args
    try:
        return run_replication(cfg, index, ss)
    except Exception as exc:  # recorded, not fatal
        logger.exception("replication %d failed", index)
        return {"replication": index, "error": f"{type(exc).__name__}: {exc}"}


def run_experiment(config: SimConfig, progress=None) -> SimReport:
    """Generate, select with ``lambda = kappa / n``, score; aggregate over replications."""
    children = np.random.SeedSequence(config.seed).spawn(config.replications)
    jobs = [(config, i, ss) for i, ss in enumerate(children)]
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            records = list(pool.map(_run_one, jobs))
    else:
        records = []
        for job in jobs:
            records.append(_run_one(job))
            if progress is not None:
                progress(records[-1])
    ok = [r for r in records if "error" not in r]
    k = len(ok)

    def mean(key):
        return float(np.mean([r[key] for r in ok])) if k else float("nan")

    return SimReport(
        config=asdict(config),
        tp_main_pct=mean("tp_main_pct"),
        tp_inter_pct=mean("tp_inter_pct"),
        fp_main_mean=mean("fp_main"),
        fp_inter_mean=mean("fp_inter"),
        sh_violation_pct=100.0 * mean("sh_violation") if k else float("nan"),
        sure_screen_pct=100.0 * mean("sure_screen") if k else float("nan"),
        sure_screen_first_pct=100.0 * mean("sure_screen_first") if k else float("nan"),
        failures=len(records) - k,
        per_replication=records,
    )
