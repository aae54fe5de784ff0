"""L0-penalized likelihood under strong hierarchy, optimized by local search.

The objective of a model is its maximized log-likelihood minus ``n*lambda/2``
per selected variable group and per selected interaction. Starting from the
empty model, a pass visits every variable and every pair of the screened
set in random order and jumps to the corresponding neighbor as soon as that
improves the objective. Passes repeat until one changes nothing; several
randomized restarts are run and the best one kept. A second round
re-screens around the winner and searches again.
"""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, HierselError
from numpy.typing import NDArray

from . import _kernels as _k
from .glm import Dataset, ExponentialFamily, FitResult, dispersion_estimate, irls
from .models import (
    ModelAlpha,
    Move,
    apply_move,
    enumerate_models,
    move_for_element,
    neighborhood,
    search_elements,
)
from .screening import ScreenResult, assis_screen

logger = logging.getLogger(__name__)

MAX_PASSES = 50


def penalty_count(beta: dict) -> int:
    """Modified-L0 count of a coefficient map.

    A variable counts once if its main coefficient or any interaction
    touching it is nonzero; each nonzero interaction counts once more.
    """
    touched = set()
    pairs = 0
    for term, value in beta.items():
        if value == 0:
            continue
        if isinstance(term, tuple):
            pairs += 1
            touched.update(term)
        else:
            touched.add(term)
    return len(touched) + pairs


def penalized_objective(fit: FitResult, lam: float) -> float:
    if lam < 0:
        raise DomainError(f"lambda must be nonnegative, got {lam}")
    if lam == 0:
        return fit.loglik
    return fit.loglik - 0.5 * fit.nobs * lam * penalty_count(fit.beta)


@dataclass(eq=False)
class FitRecord:
    """Lightweight cached fit: coefficients in ``terms`` order (intercept first)."""

    alpha: ModelAlpha
    terms: tuple
    coef: NDArray
    deviance: float
    loglik: float
    phi: float
    iterations: int
    trace: tuple


@dataclass(frozen=True)
class _Bounded:
    """Cache marker: a fit abandoned once its kernel log-likelihood was shown to stay below ``bound``."""

    bound: float


_MISSING = object()


class ModelFitter:
    """Memoized MLE fits keyed by the canonical model.

    A fit is a pure function of the model, so one cache serves every
    restart and round of a selection. Failed fits (singular design or no
    convergence) are cached as ``None``. The oldest entries are evicted
    beyond ``max_entries``.

    :meth:`neighbor` fits a model next to an already fitted one, warm
    started from its coefficients. :meth:`scan` skips, without fitting,
    moves that provably cannot improve the penalized objective (exact for
    gaussian, a duality bound otherwise), and :meth:`neighbor` given ``lam``
    abandons a fit as soon as the same kind of bound rules the move out.
    ``prune=False`` turns both off.
    """

    def __init__(self, family: ExponentialFamily, data: Dataset, tol: float = 1e-8,
                 max_iter: int = 100, max_entries: int = 500_000, prune: bool = True):
        family.check_response(data.y)
        self.family = family
        self.data = data
        self.tol = tol
        self.max_iter = max_iter
        self.max_entries = max_entries
        self.prune = prune
        self._cache: OrderedDict = OrderedDict()
        self.n_fits = 0
        self._kind = _k.GAUSSIAN if family.has_dispersion else (
            _k.BINOMIAL if family.kind == "binomial" else _k.POISSON)
        self._y = np.ascontiguousarray(data.y, dtype=float)
        self._m = (np.ascontiguousarray(np.broadcast_to(family.trials, data.y.shape), dtype=float)
                   if family.kind == "binomial" else np.ones(data.n))
        self._X = np.ascontiguousarray(data.X)
        if family.has_dispersion:
            self._sat = 0.0
            self._const = 0.0
        else:
            self._sat = family.saturated_kernel(data.y)
            self._const = self._sat + float(np.sum(family.log_norm(data.y, 1.0)))

    # -- records ---------------------------------------------------------
    def _store(self, alpha, rec):
        self._cache[alpha] = rec
        if len(self._cache) > self.max_entries:
            self._cache.popitem(last=False)
        return rec

    def _record(self, alpha, terms, out) -> FitRecord | None:
        if out is None or not out.converged:
            logger.debug("rejecting unconverged fit of %s", alpha)
            return None
        if self._kind != _k.GAUSSIAN and np.abs(out.eta).max() > _k.ETA_BOUND:
            # diverging toward separation; also keeps the pruning bounds valid
            logger.debug("rejecting fit of %s with |eta| above %g", alpha, _k.ETA_BOUND)
            return None
        n = self.data.n
        dev = out.deviance
        if self.family.has_dispersion:
            try:
                phi = dispersion_estimate(self.family, dev, n, alpha.size + 1)
            except HierselError:
                return None
            ll = -0.5 * dev / phi - 0.5 * n * math.log(2.0 * math.pi * phi)
        else:
            phi = 1.0
            ll = self._const - 0.5 * dev
        return FitRecord(alpha, tuple(terms), out.coef, dev, ll, phi, out.iterations, out.trace)

    def _fit(self, alpha, design, terms, start, floor=None):
        self.n_fits += 1
        if alpha.size + 1 > self.data.n:
            return None
        try:
            out = irls(self.family, self._y, design, self.tol, self.max_iter, start=start,
                       sat=self._sat, floor=floor)
        except HierselError as exc:
            logger.debug("rejecting %s: %s", alpha, exc)
            return None
        if out.bound is not None:
            return _Bounded(out.bound)
        return self._record(alpha, terms, out)

    def record(self, alpha: ModelAlpha) -> FitRecord | None:
        hit = self._cache.get(alpha, _MISSING)
        if hit is not _MISSING and not isinstance(hit, _Bounded):
            return hit
        terms = alpha.terms()
        design = self.data.design_for_terms(terms) if alpha.size + 1 <= self.data.n else None
        return self._store(alpha, self._fit(alpha, design, terms, None))

    def materialize(self, rec: FitRecord) -> FitResult:
        coef = rec.coef.tolist()
        return FitResult(
            alpha=rec.alpha,
            beta0=coef[0],
            beta=dict(zip(rec.terms, coef[1:])),
            phi_hat=rec.phi,
            loglik=rec.loglik,
            deviance=rec.deviance,
            df=rec.alpha.size + 1,
            converged=True,
            iterations=rec.iterations,
            nobs=self.data.n,
            deviance_trace=rec.trace,
        )

    def __call__(self, alpha: ModelAlpha) -> FitResult | None:
        rec = self.record(alpha)
        return None if rec is None else self.materialize(rec)

    def neighbor(self, state: "SearchState", alpha: ModelAlpha,
                 lam: float | None = None) -> FitRecord | None:
        """Record of ``alpha``, fitted warm from the neighboring ``state``.

        With ``lam``, ``None`` is also returned, possibly without finishing
        the fit, when ``alpha`` provably does not improve on ``state``.
        """
        hit = self._cache.get(alpha, _MISSING)
        floor = None
        if self.prune and lam is not None and self._kind != _k.GAUSSIAN:
            # kernel log-likelihood alpha must beat, less a rounding margin
            base = self._sat - 0.5 * state.record.deviance
            need = 0.5 * self.data.n * lam * (alpha.size - state.alpha.size)
            floor = base + need - 1e-7 * (1.0 + abs(base))
        if isinstance(hit, _Bounded):
            if floor is not None and hit.bound < floor:
                return None
        elif hit is not _MISSING:
            return hit
        design, terms, coef = state.design, state.record.terms, state.record.coef
        if alpha.size > state.alpha.size:
            old = set(terms)
            extra = tuple(t for t in alpha.terms() if t not in old)
            X = np.hstack([design, self.data.columns(extra)])
            terms = terms + extra
            start = np.concatenate([coef, np.zeros(len(extra))])
        else:
            keep = set(alpha.terms())
            idx = [0] + [i + 1 for i, t in enumerate(terms) if t in keep]
            X = design[:, idx]
            terms = tuple(terms[i - 1] for i in idx[1:])
            start = coef[idx]
        out = self._store(alpha, self._fit(alpha, X, terms, start, floor))
        return None if isinstance(out, _Bounded) else out

    def _context(self, state: "SearchState"):
        if state.context is None:
            p = self.data.p
            rec = state.record
            main_pos = np.full(p, -1, dtype=np.int64)
            pair_pos = np.full((p, p), -1, dtype=np.int64)
            pj, pk = [], []
            for col, term in enumerate(rec.terms, start=1):
                if isinstance(term, tuple):
                    pair_pos[term] = col
                    pj.append(term[0])
                    pk.append(term[1])
                else:
                    main_pos[term] = col
            base = rec.deviance if self._kind == _k.GAUSSIAN else self._sat - 0.5 * rec.deviance
            shared = _k.prepare_state(state.design, self._y, self._m, self._kind, rec.coef)
            state.context = (shared, base, main_pos, pair_pos,
                             np.array(pj, dtype=np.int64), np.array(pk, dtype=np.int64))
        return state.context

    def scan(self, state: "SearchState", js: NDArray, ks: NDArray, start: int, lam: float,
             max_size: int | None) -> int:
        """First position from ``start`` whose move needs a real fit (see the class notes)."""
        if not self.prune:
            return start
        (mu, w, L, a0, h0), base, main_pos, pair_pos, pj, pk = self._context(state)
        n = self.data.n
        return int(_k.scan_moves(
            self._X, self._y, self._m, self._kind, state.design, state.record.coef, mu, w, L,
            a0, h0, base, main_pos, pair_pos, pj, pk, state.alpha.size,
            n if max_size is None else max_size, 0.5 * n * lam, 1e-7 * (1.0 + abs(base)),
            js, ks, start))

    def clear(self):
        self._cache.clear()


@dataclass
class SearchState:
    alpha: ModelAlpha
    fit: FitResult
    objective: float
    rng_seed: int = 0
    trace: list = field(default_factory=list)
    passes: int = 0
    converged: bool = True
    record: FitRecord | None = field(default=None, repr=False)
    design: NDArray | None = field(default=None, repr=False)
    context: tuple | None = field(default=None, repr=False)


def _objective(rec: FitRecord, lam: float, n: int) -> float:
    # on a strong-hierarchy fit the modified L0 count is the model size
    return rec.loglik - 0.5 * n * lam * rec.alpha.size


def _state_from(fitter: ModelFitter, rec: FitRecord, lam: float, **kw) -> SearchState:
    return SearchState(rec.alpha, fitter.materialize(rec), _objective(rec, lam, fitter.data.n),
                       record=rec, design=fitter.data.design_for_terms(rec.terms), **kw)


def initial_state(fitter: ModelFitter, lam: float, alpha: ModelAlpha = ModelAlpha(),
                  rng_seed: int = 0) -> SearchState:
    rec = fitter.record(alpha)
    if rec is None:
        raise HierselError(f"cannot fit the starting model {alpha}")
    return _state_from(fitter, rec, lam, rng_seed=rng_seed)


def move_gain(state: SearchState, move: Move, lam: float, fitter: ModelFitter) -> float:
    """Penalized likelihood ratio of the neighbor reached by ``move``.

    ``-inf`` when the neighbor cannot be fitted.
    """
    rec = fitter.neighbor(state, apply_move(state.alpha, move), lam)
    if rec is None:
        return -math.inf
    return _objective(rec, lam, fitter.data.n) - state.objective


def _accept(state: SearchState, rec: FitRecord, move: Move, lam: float, fitter: ModelFitter,
            gain: float) -> SearchState:
    new = _state_from(fitter, rec, lam, rng_seed=state.rng_seed)
    new.trace = state.trace + [(move, gain)]
    return new


def _encode(order) -> tuple[NDArray, NDArray]:
    js = np.empty(len(order), dtype=np.int64)
    ks = np.empty(len(order), dtype=np.int64)
    for t, e in enumerate(order):
        if isinstance(e, tuple):
            js[t], ks[t] = e
        else:
            js[t], ks[t] = e, -1
    return js, ks


def f1ls_pass(state: SearchState, lam: float, order, fitter: ModelFitter,
              max_size: int | None = None) -> SearchState:
    """One first-improvement pass over the diff elements in ``order``.

    Each element is examined once against the current model; the move it
    determines is taken as soon as its gain is positive. Moves that
    provably do not improve are skipped in bulk by :meth:`ModelFitter.scan`.
    """
    n = fitter.data.n
    js, ks = _encode(order)
    t = 0
    while t < len(order):
        t = fitter.scan(state, js, ks, t, lam, max_size)
        if t >= len(order):
            break
        element = order[t]
        t += 1
        move = move_for_element(state.alpha, element)
        alpha = apply_move(state.alpha, move)
        if max_size is not None and alpha.size > max_size:
            continue
        rec = fitter.neighbor(state, alpha, lam)
        if rec is None:
            continue
        gain = _objective(rec, lam, n) - state.objective
        if gain > 0:
            state = _accept(state, rec, move, lam, fitter, gain)
    return state


def best_move(state: SearchState, lam: float, universe, fitter: ModelFitter,
              max_size: int | None = None):
    """Scan the whole neighborhood; ties go to the earlier canonical move."""
    best, best_gain = None, -math.inf
    for move in neighborhood(state.alpha, universe, max_size):
        gain = move_gain(state, move, lam, fitter)
        if gain > best_gain:
            best, best_gain = move, gain
    return best, best_gain


def b1ls_step(state: SearchState, lam: float, universe, fitter: ModelFitter,
              max_size: int | None = None) -> SearchState:
    """Take the best improving neighbor, or return ``state`` at a local optimum."""
    move, gain = best_move(state, lam, universe, fitter, max_size)
    if move is None or not gain > 0:
        return state
    rec = fitter.neighbor(state, apply_move(state.alpha, move))
    return _accept(state, rec, move, lam, fitter, gain)


def is_local_optimum(state: SearchState, lam: float, universe, fitter: ModelFitter,
                     max_size: int | None = None) -> bool:
    _, gain = best_move(state, lam, universe, fitter, max_size)
    return not gain > 0


def restart_rng(seed: int, round_index: int, restart: int) -> np.random.Generator:
    """Counter-based stream for one restart of one round."""
    ss = np.random.SeedSequence([int(seed), int(round_index), int(restart)])
    return np.random.Generator(np.random.Philox(ss))


def local_search(fitter: ModelFitter, lam: float, universe, rng: np.random.Generator,
                 max_size: int | None = None, start: ModelAlpha = ModelAlpha(),
                 strategy: str = "f1ls", max_passes: int = MAX_PASSES) -> SearchState:
    """Iterate passes until one accepts no move (or ``max_passes`` is hit)."""
    state = initial_state(fitter, lam, start)
    elements = search_elements(universe)
    for npass in range(1, max_passes + 1):
        before = state.alpha
        if strategy == "f1ls":
            order = [elements[i] for i in rng.permutation(len(elements))]
            state = f1ls_pass(state, lam, order, fitter, max_size)
        elif strategy == "b1ls":
            state = b1ls_step(state, lam, universe, fitter, max_size)
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
        if state.alpha == before:
            return replace(state, passes=npass, converged=True)
    logger.warning("local search hit the pass cap (%d) without settling", max_passes)
    return replace(state, passes=max_passes, converged=False)


@dataclass(eq=False)
class SelectionResult:
    alpha_hat: ModelAlpha
    fit: FitResult
    lam: float
    kappa: float
    objective: float
    restarts: list  # per round: final objective of every restart
    rounds: int
    screens: list  # ScreenResult per round
    round_winners: list = field(default_factory=list)
    n_fits: int = 0

    @property
    def restart_objectives(self) -> list:
        return [v for per_round in self.restarts for v in per_round]


def default_max_size(n: int) -> int:
    return n // 2


def select(family: ExponentialFamily, data: Dataset, lam: float, *, restarts: int = 10,
           rounds: int = 2, gamma: float | None = None, seed: int = 0,
           max_size: int | None = None, kappa: float | None = None,
           fitter: ModelFitter | None = None, screen=assis_screen) -> SelectionResult:
    """Screen, then search; repeat around the winner for ``rounds`` rounds.

    Each round screens with the previous winner as base model (the empty
    model first), keeps the winner's mains in the search universe, and runs
    ``restarts`` randomized searches from the empty model. The best model
    over all rounds is returned.
    """
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    if restarts < 1 or rounds < 1:
        raise DomainError("restarts and rounds must be at least 1")
    max_size = default_max_size(data.n) if max_size is None else max_size
    fitter = ModelFitter(family, data) if fitter is None else fitter
    try:
        best = initial_state(fitter, lam)
    except HierselError:
        raise HierselError("the intercept-only model cannot be fitted") from None
    base_alpha, base_fit = best.alpha, best.fit
    screens: list[ScreenResult] = []
    all_objectives = []
    winners = []
    for rnd in range(rounds):
        scr = screen(family, data, base_alpha, gamma, fit=base_fit)
        universe = sorted(set(scr.shrunk) | set(base_alpha.mains))
        screens.append(scr)
        round_best = None
        objectives = []
        for i in range(restarts):
            rng = restart_rng(seed, rnd, i)
            try:
                state = local_search(fitter, lam, universe, rng, max_size)
            except HierselError as exc:
                logger.warning("restart %d of round %d failed: %s", i, rnd + 1, exc)
                objectives.append(-math.inf)
                continue
            objectives.append(state.objective)
            if round_best is None or state.objective > round_best.objective:
                round_best = state
        all_objectives.append(objectives)
        if round_best is None:
            winners.append(best.alpha)
            continue
        winners.append(round_best.alpha)
        if round_best.objective > best.objective:
            best = round_best
        base_alpha, base_fit = round_best.alpha, round_best.fit

    return SelectionResult(
        alpha_hat=best.alpha,
        fit=best.fit,
        lam=lam,
        kappa=data.n * lam if kappa is None else kappa,
        objective=best.objective,
        restarts=all_objectives,
        rounds=rounds,
        screens=screens,
        round_winners=winners,
        n_fits=fitter.n_fits,
    )


def exhaustive_search(fitter: ModelFitter, lam: float, universe) -> tuple[ModelAlpha, float]:
    """Global optimum over every strong-hierarchy model on ``universe``."""
    best, best_obj = None, -math.inf
    for alpha in enumerate_models(universe):
        fit = fitter(alpha)
        if fit is None:
            continue
        obj = penalized_objective(fit, lam)
        if obj > best_obj:
            best, best_obj = alpha, obj
    return best, best_obj
