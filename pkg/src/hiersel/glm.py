"""Canonical-link exponential families and IRLS maximum likelihood.

Every family is written in natural-parameter form

    log f(y; theta, phi) = (y * theta - b(theta)) / phi + c(y, phi)

and, because only canonical links are supported, ``theta == eta``. The
log-likelihood keeps the normalizing constant ``c`` so that values are
comparable across models (needed by the information criteria and by the
penalized objective).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.special import expit, gammaln, xlogy

from . import _kernels as _k
from .errors import DomainError, SingularDesign
from .models import ModelAlpha

logger = logging.getLogger(__name__)

FAMILIES = ("gaussian", "binomial", "poisson")

# |eta| cap used for the mean/weight computation of binomial and poisson.
ETA_CLAMP = _k.ETA_CLAMP
MAX_HALVINGS = _k.MAX_HALVINGS
PIVOT_RATIO = _k.PIVOT_RATIO


@dataclass(frozen=True, eq=False)
class ExponentialFamily:
    """One of the supported families with its canonical link.

    Parameters
    ----------
    kind : {"gaussian", "binomial", "poisson"}
    trials : ndarray of int, optional
        Binomial trial counts ``m_i`` (length n). Required for binomial,
        ignored otherwise. A scalar is broadcast.
    """

    kind: str
    trials: NDArray | None = None

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise DomainError(f"unknown family {self.kind!r}; expected one of {FAMILIES}")
        if self.kind == "binomial":
            if self.trials is None:
                raise DomainError("binomial family needs trial counts")
            m = np.asarray(self.trials, dtype=float)
            if np.any(m <= 0) or np.any(m != np.round(m)):
                raise DomainError("binomial trials must be positive integers")
            object.__setattr__(self, "trials", m)
        else:
            object.__setattr__(self, "trials", None)

    @property
    def has_dispersion(self) -> bool:
        return self.kind == "gaussian"

    @property
    def link_name(self) -> str:
        return {"gaussian": "identity", "binomial": "logit", "poisson": "log"}[self.kind]

    def _m(self, n):
        m = self.trials
        return np.broadcast_to(m, (n,)) if m.ndim == 0 else m

    def cumulant(self, eta: NDArray) -> NDArray:
        """b(theta)."""
        if self.kind == "gaussian":
            return 0.5 * eta**2
        if self.kind == "poisson":
            return np.exp(eta)
        return self._m(len(eta)) * np.logaddexp(0.0, eta)

    def mean(self, eta: NDArray) -> NDArray:
        """b'(theta), the mean under the canonical link."""
        if self.kind == "gaussian":
            return eta
        if self.kind == "poisson":
            return np.exp(eta)
        return self._m(len(eta)) * expit(eta)

    def variance(self, eta: NDArray) -> NDArray:
        """b''(theta); equals d mu / d eta for a canonical link."""
        if self.kind == "gaussian":
            return np.ones_like(eta)
        if self.kind == "poisson":
            return np.exp(eta)
        pi = expit(eta)
        return self._m(len(eta)) * pi * (1.0 - pi)

    def link(self, mu: NDArray) -> NDArray:
        if self.kind == "gaussian":
            return mu
        if self.kind == "poisson":
            return np.log(mu)
        m = self._m(len(mu))
        return np.log(mu) - np.log(m - mu)

    def log_norm(self, y: NDArray, phi: float) -> NDArray:
        """c(y, phi) per observation."""
        if self.kind == "gaussian":
            return -0.5 * y**2 / phi - 0.5 * np.log(2.0 * np.pi * phi)
        if self.kind == "poisson":
            return -gammaln(y + 1.0)
        m = self._m(len(y))
        return gammaln(m + 1.0) - gammaln(y + 1.0) - gammaln(m - y + 1.0)

    def saturated_kernel(self, y: NDArray, phi: float = 1.0) -> float:
        """Saturated value of ``sum(y * theta - b(theta)) / phi``."""
        if self.kind == "gaussian":
            return float(0.5 * np.sum(y * y) / phi)
        if self.kind == "poisson":
            return float(np.sum(xlogy(y, y) - y))
        m = self._m(len(y))
        return float(np.sum(xlogy(y, y / m) + xlogy(m - y, (m - y) / m)))

    def saturated_loglik(self, y: NDArray, phi: float = 1.0) -> float:
        """Log-likelihood with each mean set to its own observation."""
        return self.saturated_kernel(y, phi) + float(np.sum(self.log_norm(y, phi)))

    def initial_eta(self, y: NDArray) -> NDArray:
        if self.kind == "gaussian":
            return y.astype(float)
        if self.kind == "poisson":
            return np.log(y + 0.1)
        m = self._m(len(y))
        p = (y + 0.5) / (m + 1.0)
        return np.log(p) - np.log1p(-p)

    def check_response(self, y: NDArray) -> None:
        if not np.all(np.isfinite(y)):
            raise DomainError("response contains non-finite values")
        if self.kind == "poisson" and np.any(y < 0):
            raise DomainError("poisson response must be nonnegative")
        if self.kind == "binomial":
            m = self._m(len(y))
            if np.any(y < 0) or np.any(y > m):
                raise DomainError("binomial successes must lie in [0, trials]")


def gaussian() -> ExponentialFamily:
    return ExponentialFamily("gaussian")


def binomial(trials) -> ExponentialFamily:
    return ExponentialFamily("binomial", np.asarray(trials, dtype=float))


def poisson() -> ExponentialFamily:
    return ExponentialFamily("poisson")


def make_family(kind: str, trials=None) -> ExponentialFamily:
    return ExponentialFamily(kind, None if trials is None else np.asarray(trials, dtype=float))


def _check_phi(family: ExponentialFamily, phi: float) -> None:
    if not np.isfinite(phi) or phi <= 0:
        raise DomainError(f"dispersion must be positive, got {phi}")
    if not family.has_dispersion and phi != 1.0:
        raise DomainError(f"{family.kind} family has no dispersion; phi must be 1")


def log_likelihood(family: ExponentialFamily, y, eta, phi: float = 1.0) -> float:
    """Full log-likelihood, normalizing constant included."""
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if not (np.all(np.isfinite(eta)) and np.all(np.isfinite(y))):
        raise DomainError("log-likelihood needs finite y and eta")
    _check_phi(family, phi)
    return float(np.sum((y * eta - family.cumulant(eta)) / phi + family.log_norm(y, phi)))


def deviance(family: ExponentialFamily, y, mu, phi: float = 1.0) -> float:
    """Residual deviance ``2 phi [l_sat - l(model)]``; the RSS for gaussian."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    _check_phi(family, phi)
    if not np.all(np.isfinite(mu)):
        raise DomainError("fitted means must be finite")
    if family.kind == "gaussian":
        return float(np.sum((y - mu) ** 2))
    if family.kind == "poisson":
        if np.any(mu <= 0):
            raise DomainError("poisson means must be positive")
        return float(2.0 * np.sum(xlogy(y, y / mu) - (y - mu)))
    m = family._m(len(y))
    if np.any(mu <= 0) or np.any(mu >= m):
        raise DomainError("binomial means must lie strictly inside (0, trials)")
    return float(2.0 * np.sum(xlogy(y, y / mu) + xlogy(m - y, (m - y) / (m - mu))))


def standardize_columns(X) -> NDArray:
    """Center each column and scale it to squared norm ``n``.

    Raises :class:`DomainError` on a constant column.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    Xc = X - X.mean(axis=0)
    scale = np.sqrt(np.sum(Xc**2, axis=0) / n)
    if np.any(scale <= 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0))):
        bad = np.flatnonzero(scale <= 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0)))
        raise DomainError(f"constant columns cannot be standardized: {bad.tolist()}")
    return Xc / scale


@dataclass(eq=False)
class Dataset:
    """Response plus standardized main-effect columns.

    Interaction columns are never stored; :meth:`column` forms the raw
    Hadamard product of two standardized mains on demand.
    """

    y: NDArray
    X: NDArray
    names: list[str] = field(default_factory=list)
    trials: NDArray | None = None

    @classmethod
    def from_arrays(cls, y, X, names: Sequence[str] | None = None, trials=None,
                    standardize: bool = True) -> "Dataset":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise DomainError("X must be two-dimensional")
        y = np.asarray(y, dtype=float).ravel()
        if len(y) != X.shape[0]:
            raise DomainError(f"y has {len(y)} rows, X has {X.shape[0]}")
        if names is None:
            names = [f"x{j + 1}" for j in range(X.shape[1])]
        if len(names) != X.shape[1]:
            raise DomainError("one name per column is required")
        if standardize:
            X = standardize_columns(X)
        if trials is not None:
            trials = np.broadcast_to(np.asarray(trials, dtype=float), y.shape).copy()
        return cls(y=y, X=np.ascontiguousarray(X), names=list(names), trials=trials)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def column(self, term) -> NDArray:
        if isinstance(term, tuple):
            j, k = term
            return self.X[:, j] * self.X[:, k]
        return self.X[:, term]

    def term_name(self, term) -> str:
        if isinstance(term, tuple):
            return f"{self.names[term[0]]}:{self.names[term[1]]}"
        return self.names[term]

    def columns(self, terms: Sequence) -> NDArray:
        """Columns of ``terms`` (mains or pairs) side by side, no intercept."""
        out = np.empty((self.n, len(terms)))
        for i, t in enumerate(terms):
            if isinstance(t, tuple):
                np.multiply(self.X[:, t[0]], self.X[:, t[1]], out=out[:, i])
            else:
                out[:, i] = self.X[:, t]
        return out

    def design_for_terms(self, terms: Sequence) -> NDArray:
        out = np.empty((self.n, 1 + len(terms)))
        out[:, 0] = 1.0
        out[:, 1:] = self.columns(terms)
        return out

    def design(self, alpha: ModelAlpha) -> NDArray:
        """Intercept, then the model's mains, then its interactions."""
        q = 1 + alpha.size
        out = np.empty((self.n, q))
        out[:, 0] = 1.0
        nm = len(alpha.mains)
        if nm:
            out[:, 1:1 + nm] = self.X[:, list(alpha.mains)]
        if alpha.interactions:
            js, ks = zip(*alpha.interactions)
            out[:, 1 + nm:] = self.X[:, list(js)] * self.X[:, list(ks)]
        return out

    def family(self, kind: str) -> ExponentialFamily:
        return make_family(kind, self.trials if kind == "binomial" else None)


@dataclass(eq=False)
class FitResult:
    """Maximum-likelihood fit of one model.

    ``beta`` maps a main index ``j`` or a pair ``(j, k)`` to its coefficient
    and holds exactly the model's terms. ``df`` counts the intercept.
    """

    alpha: ModelAlpha
    beta0: float
    beta: dict
    phi_hat: float
    loglik: float
    deviance: float
    df: int
    converged: bool
    iterations: int
    nobs: int
    deviance_trace: tuple = ()

    def coef_vector(self) -> NDArray:
        return np.array([self.beta0] + [self.beta[t] for t in self.alpha.terms()])

    def linear_predictor(self, data: Dataset) -> NDArray:
        return data.design(self.alpha) @ self.coef_vector()


@dataclass
class IRLSOutput:
    coef: NDArray
    eta: NDArray
    deviance: float
    converged: bool
    iterations: int
    trace: tuple
    bound: float | None = None  # set when stopped below the floor


_KIND_CODE = {"gaussian": _k.GAUSSIAN, "binomial": _k.BINOMIAL, "poisson": _k.POISSON}


def _trials_or_ones(family, n):
    return np.ascontiguousarray(family._m(n), dtype=float) if family.kind == "binomial" else np.ones(n)


def irls(family: ExponentialFamily, y: NDArray, X: NDArray, tol: float = 1e-8,
         max_iter: int = 100, start: NDArray | None = None,
         sat: float | None = None, floor: float | None = None) -> IRLSOutput:
    """Fit a canonical-link GLM on the full design ``X`` (intercept included).

    Stops when the relative deviance change ``|D_old - D| / (|D| + 0.1)``
    drops below ``tol``. A step that raises the deviance is halved up to ten
    times; if that fails the previous iterate is returned unconverged.

    Parameters
    ----------
    start : ndarray, optional
        Warm-start coefficients; otherwise the family's data-based start.
    sat : float, optional
        Precomputed ``family.saturated_kernel(y)``.
    floor : float, optional
        Stop, unconverged and with ``bound`` set, as soon as the maximal
        kernel log-likelihood ``sum(y * eta - b(eta))`` is shown to lie below
        this value (see :func:`hiersel._kernels.irls_kernel`).
    """
    n = len(y)
    if X.shape[1] > n:
        raise SingularDesign(f"{X.shape[1]} columns exceed {n} observations")
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    kind = _KIND_CODE[family.kind]
    if sat is None:
        sat = family.saturated_kernel(y) if kind != _k.GAUSSIAN else 0.0
    if start is None:
        coef0 = np.zeros(X.shape[1])
        eta0 = family.initial_eta(y)
        warm = False
    else:
        coef0 = np.ascontiguousarray(start, dtype=float)
        eta0 = X @ coef0
        warm = True
    coef, eta, dev, status, it, trace, bound = _k.irls_kernel(
        X, y, _trials_or_ones(family, n), kind, eta0, coef0, warm, float(sat), float(tol),
        int(max_iter), -np.inf if floor is None else float(floor))
    if status == _k.SINGULAR:
        raise SingularDesign("weighted Gram matrix is singular or not positive definite")
    if status == _k.HALVING_EXHAUSTED:
        logger.debug("IRLS step halving exhausted at iteration %d", it)
    return IRLSOutput(coef, eta, float(dev), status == _k.CONVERGED, int(it), tuple(trace.tolist()),
                      float(bound) if status == _k.BOUNDED else None)


def dispersion_estimate(family: ExponentialFamily, dev: float, n: int, df: int) -> float:
    """``D / (n - df)`` floored at the smallest normal double; 1 without dispersion."""
    if not family.has_dispersion:
        return 1.0
    if n <= df:
        raise SingularDesign("no residual degrees of freedom for the dispersion")
    return max(dev / (n - df), np.finfo(float).tiny)


def fit_mle(family: ExponentialFamily, data: Dataset, alpha: ModelAlpha,
            tol: float = 1e-8, max_iter: int = 100, *, design: NDArray | None = None,
            terms: Sequence | None = None, start: NDArray | None = None) -> FitResult:
    """MLE of ``alpha`` with an unpenalized intercept.

    Raises :class:`SingularDesign` for a rank-deficient design. A fit that
    fails to converge is returned with ``converged=False``.

    ``design`` may hold the model's columns in any order given by ``terms``
    (intercept first); ``start`` is a warm start in that order.
    """
    n = data.n
    if alpha.size + 1 > n:
        raise SingularDesign(f"model with {alpha.size} terms is too large for n={n}")
    family.check_response(data.y)
    if design is None:
        design, terms = data.design(alpha), alpha.terms()
    out = irls(family, data.y, design, tol=tol, max_iter=max_iter, start=start)
    df = alpha.size + 1
    phi = dispersion_estimate(family, out.deviance, n, df)
    if not out.converged:
        logger.debug("fit of %s did not converge after %d iterations", alpha, out.iterations)
    return FitResult(
        alpha=alpha,
        beta0=float(out.coef[0]),
        beta={t: float(c) for t, c in zip(terms, out.coef[1:].tolist())},
        phi_hat=float(phi),
        loglik=log_likelihood(family, data.y, out.eta, phi),
        deviance=out.deviance,
        df=df,
        converged=out.converged,
        iterations=out.iterations,
        nobs=n,
        deviance_trace=out.trace,
    )


def null_deviance(family: ExponentialFamily, data: Dataset) -> float:
    return fit_mle(family, data, ModelAlpha()).deviance
