"""Conditional screening of variables given a strong-hierarchy base model.

For every variable ``j`` outside the base mains, a candidate column is
``x_j * x_k`` with ``k`` another outside variable or the intercept (then the
candidate is ``x_j`` itself). Each variable is scored by the largest
statistic over its candidates and the top ``floor(gamma * n)`` are kept.

Two statistics are available:

* score (default): one base-model fit, closed-form one-degree-of-freedom
  score tests for every candidate, computed in bulk with matrix products;
* likelihood ratio: a refit of every expanded model. Orders of magnitude
  slower, kept for comparison.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import DegenerateWeights, HierselError, NotConverged
from .glm import Dataset, ExponentialFamily, FitResult, fit_mle, irls
from .models import ModelAlpha

logger = logging.getLogger(__name__)

# ||s|| below this (absolute) means the candidate lies in the base span.
DEGENERATE_NORM = 1e-10
_ROW_BLOCK = 256


@dataclass(eq=False)
class WorkingQuantities:
    """IRLS quantities of a fitted base model.

    ``w`` holds ``b''(eta_hat)`` without the dispersion factor; the
    dispersion enters once, as ``phi`` in the statistic's denominator.
    ``basis`` is an orthonormal basis of the columns of ``W^1/2 X_alpha``,
    so the weighted hat matrix is ``basis @ basis.T``.
    """

    z: NDArray
    w: NDArray
    sqrt_w: NDArray
    basis: NDArray
    r: NDArray
    phi: float
    X: NDArray

    def project(self, v: NDArray) -> NDArray:
        """Apply ``P_alpha``."""
        return self.basis @ (self.basis.T @ v)

    def residualize(self, v: NDArray) -> NDArray:
        """Apply ``I - P_alpha``."""
        return v - self.project(v)

    def candidate(self, j: int, k: int | None) -> NDArray:
        """``x_j * x_k``; ``k=None`` stands for the intercept partner."""
        col = self.X[:, j]
        return col if k is None else col * self.X[:, k]

    def s_vector(self, column: NDArray) -> NDArray:
        return self.residualize(self.sqrt_w * column)


def working_quantities(family: ExponentialFamily, data: Dataset, fit: FitResult) -> WorkingQuantities:
    design = data.design(fit.alpha)
    eta = design @ fit.coef_vector()
    mu = family.mean(eta)
    w = family.variance(eta)
    if not np.any(w > 0):
        raise DegenerateWeights("all working weights are zero at the base fit")
    w = np.maximum(w, 1e-300)
    sqrt_w = np.sqrt(w)
    # canonical link: d eta / d mu = 1 / b''(eta)
    z = eta + (data.y - mu) / w
    basis, _ = np.linalg.qr(sqrt_w[:, None] * design)
    raw = sqrt_w * (z - eta)
    r = raw - basis @ (basis.T @ raw)
    return WorkingQuantities(z=z, w=w, sqrt_w=sqrt_w, basis=basis, r=r, phi=fit.phi_hat, X=data.X)


def score_from_column(wq: WorkingQuantities, column: NDArray) -> float:
    s = wq.s_vector(column)
    ss = float(s @ s)
    if math.sqrt(ss) < DEGENERATE_NORM:
        return 0.0
    ip = float(wq.r @ s)
    return ip * ip / (wq.phi * ss)


def score_statistic(wq: WorkingQuantities, j: int, k: int | None = None) -> float:
    """Score test for adding ``x_j * x_k`` to the base model.

    ``<r, s>^2 / (phi ||s||^2)`` with ``s = (I - P) W^1/2 x_j * x_k``.
    """
    if k is not None and k == j:
        raise ValueError("partner must differ from j")
    return score_from_column(wq, wq.candidate(j, k))


@dataclass(eq=False)
class ScreenResult:
    base_alpha: ModelAlpha
    stats: dict
    shrunk: tuple
    d_gamma: int
    method: str
    best_partner: dict = field(default_factory=dict)

    @property
    def added(self) -> tuple:
        base = set(self.base_alpha.mains)
        return tuple(j for j in self.shrunk if j not in base)


def d_gamma(gamma: float, n: int) -> int:
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return int(math.floor(gamma * n + 1e-9))


def default_gamma(n: int) -> float:
    return 1.0 / math.log(n)


def _top(candidates: NDArray, values: NDArray, d: int) -> list[int]:
    # descending by value; ties by ascending index (candidates are sorted)
    order = np.lexsort((candidates, -values))
    return sorted(int(candidates[i]) for i in order[:d])


def _base_fit(family, data, alpha, fit):
    if fit is None:
        fit = fit_mle(family, data, alpha)
    if not fit.converged:
        raise NotConverged(f"base model {alpha} did not converge", fit)
    return fit


def aggregated_score_statistics(wq: WorkingQuantities, candidates: NDArray):
    """``max_k S_(j,k)`` for every ``j`` in ``candidates``.

    Returns the per-variable maxima and the maximizing partner (``-1`` for
    the intercept). All candidate pairs are handled with dense products,
    ``block`` rows at a time.
    """
    X = wq.X
    n = X.shape[0]
    m = len(candidates)
    Xc = X[:, candidates]
    partners = np.column_stack([np.ones(n), Xc])  # column 0 = intercept
    Xc2 = Xc * Xc
    partners2 = partners * partners
    rw = wq.r * wq.sqrt_w
    Qw = wq.basis * wq.sqrt_w[:, None]
    best = np.empty(m)
    arg = np.empty(m, dtype=int)
    for start in range(0, m, _ROW_BLOCK):
        rows = slice(start, min(start + _ROW_BLOCK, m))
        xr = Xc[:, rows]
        num = xr.T @ (rw[:, None] * partners)
        ss = (Xc2[:, rows]).T @ (wq.w[:, None] * partners2)
        for col in range(Qw.shape[1]):
            proj = xr.T @ (Qw[:, col][:, None] * partners)
            ss -= proj * proj
        ss = np.maximum(ss, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            stat = num * num / (wq.phi * ss)
        stat[np.sqrt(ss) < DEGENERATE_NORM] = 0.0
        idx = np.arange(rows.start, rows.stop)
        stat[idx - rows.start, idx + 1] = -np.inf  # k == j
        a = np.argmax(stat, axis=1)
        best[rows] = stat[np.arange(len(a)), a]
        arg[rows] = a
    partner = np.where(arg == 0, -1, candidates[np.maximum(arg - 1, 0)])
    return best, partner


def assis_screen(family: ExponentialFamily, data: Dataset, base_alpha: ModelAlpha = ModelAlpha(),
                 gamma: float | None = None, fit: FitResult | None = None) -> ScreenResult:
    """Aggregated score screening: one base fit, bulk score statistics."""
    gamma = default_gamma(data.n) if gamma is None else gamma
    d = d_gamma(gamma, data.n)
    fit = _base_fit(family, data, base_alpha, fit)
    wq = working_quantities(family, data, fit)
    base = set(base_alpha.mains)
    candidates = np.array([j for j in range(data.p) if j not in base], dtype=int)
    if len(candidates) == 0:
        return ScreenResult(base_alpha, {}, tuple(base_alpha.mains), d, "assis")
    best, partner = aggregated_score_statistics(wq, candidates)
    top = _top(candidates, best, d)
    return ScreenResult(
        base_alpha=base_alpha,
        stats={int(j): float(v) for j, v in zip(candidates, best)},
        shrunk=tuple(sorted(base | set(top))),
        d_gamma=d,
        method="assis",
        best_partner={int(j): (None if k < 0 else int(k)) for j, k in zip(candidates, partner)},
    )


def lr_statistic(family: ExponentialFamily, data: Dataset, fit: FitResult, column: NDArray,
                 design: NDArray | None = None) -> float:
    """Deviance drop from adding ``column`` to the base model, over ``phi_hat``."""
    if design is None:
        design = data.design(fit.alpha)
    out = irls(family, data.y, np.column_stack([design, column]))
    if not out.converged:
        raise NotConverged("expanded model did not converge")
    return max(fit.deviance - out.deviance, 0.0) / fit.phi_hat


def alrsis_screen(family: ExponentialFamily, data: Dataset, base_alpha: ModelAlpha = ModelAlpha(),
                  gamma: float | None = None, fit: FitResult | None = None) -> ScreenResult:
    """Aggregated likelihood-ratio screening; refits every expanded model.

    Expanded fits that fail score ``-inf`` and are logged.
    """
    gamma = default_gamma(data.n) if gamma is None else gamma
    d = d_gamma(gamma, data.n)
    fit = _base_fit(family, data, base_alpha, fit)
    design = data.design(base_alpha)
    base = set(base_alpha.mains)
    candidates = [j for j in range(data.p) if j not in base]
    best = {j: -np.inf for j in candidates}
    partner = {j: None for j in candidates}

    def evaluate(column):
        try:
            return lr_statistic(family, data, fit, column, design)
        except HierselError as exc:
            logger.info("expanded fit failed: %s", exc)
            return -np.inf

    for a, j in enumerate(candidates):
        v = evaluate(data.X[:, j])
        if v > best[j]:
            best[j], partner[j] = v, None
        for k in candidates[a + 1:]:
            v = evaluate(data.X[:, j] * data.X[:, k])
            # one expanded model serves both endpoints
            if v > best[j]:
                best[j], partner[j] = v, k
            if v > best[k]:
                best[k], partner[k] = v, j
    cand = np.array(candidates, dtype=int)
    vals = np.array([best[j] for j in candidates])
    top = _top(cand, vals, d) if len(cand) else []
    return ScreenResult(
        base_alpha=base_alpha,
        stats={int(j): float(best[j]) for j in candidates},
        shrunk=tuple(sorted(base | set(top))),
        d_gamma=d,
        method="alrsis",
        best_partner=partner,
    )


SCREENS = {"assis": assis_screen, "alrsis": alrsis_screen}
