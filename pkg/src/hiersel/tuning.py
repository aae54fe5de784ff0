"""Information-criterion constants and the closed-form tuning parameter.

With an L0 penalty the GIC-optimal tuning parameter needs no path search:
plugging ``lambda = kappa / n`` into the penalized objective selects the same
model that minimizing ``GIC_kappa`` over lambda would.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, DomainError
from .glm import FitResult

RULES = ("bic", "hbic4", "ebic", "custom")


@dataclass(frozen=True)
class KappaRule:
    """How to pick the GIC complexity weight kappa.

    ``epsilon`` only affects ``hbic4``: when set, kappa becomes
    ``(4 + epsilon) * log(max(n, p))`` instead of ``max(log n, 4 log p)``.
    """

    rule: str = "ebic"
    value: float | None = None
    epsilon: float | None = None

    def __post_init__(self):
        if self.rule not in RULES:
            raise ConfigError(f"unknown kappa rule {self.rule!r}; valid: {', '.join(RULES)}")
        if self.rule == "custom" and (self.value is None or not self.value > 0):
            raise ConfigError("custom kappa needs a positive value")

    @classmethod
    def parse(cls, text: str) -> "KappaRule":
        """Accept ``bic``, ``hbic4``, ``ebic`` or a positive number."""
        key = str(text).strip().lower()
        if key in ("bic", "hbic4", "ebic"):
            return cls(key)
        try:
            value = float(key)
        except ValueError:
            raise ConfigError(
                f"kappa must be bic, hbic4, ebic or a positive number, got {text!r}"
            ) from None
        return cls("custom", value)

    def __str__(self) -> str:
        return f"{self.value:g}" if self.rule == "custom" else self.rule


def default_rule(n: int, p: int) -> KappaRule:
    """EBIC when variables outnumber observations, BIC otherwise."""
    return KappaRule("ebic" if p > n else "bic")


def kappa(rule: KappaRule | str, n: float, p: float) -> float:
    if isinstance(rule, str):
        rule = KappaRule.parse(rule)
    if rule.rule == "custom":
        return float(rule.value)
    if n <= 1:
        raise DomainError(f"kappa needs n > 1, got {n}")
    if rule.rule == "bic":
        return math.log(n)
    if p < 2:
        raise DomainError(f"kappa rule {rule.rule} needs p >= 2, got {p}")
    if rule.rule == "hbic4":
        if rule.epsilon is not None:
            return (4.0 + rule.epsilon) * math.log(max(n, p))
        return max(math.log(n), 4.0 * math.log(p))
    # ebic
    if n < 3:
        raise DomainError(f"EBIC needs n >= 3 so that log log n > 0, got {n}")
    return math.log(p) * math.log(math.log(n))


def lambda_closed_form(kappa_value: float, n: int) -> float:
    """The tuning parameter ``kappa / n``."""
    if not kappa_value > 0:
        raise DomainError(f"kappa must be positive, got {kappa_value}")
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    return kappa_value / n


def gic(fit: FitResult, kappa_value: float, count_intercept: bool = False) -> float:
    """``-2 loglik + kappa * df``.

    By default ``df`` counts the penalized nonzero coefficients, which makes
    ``gic(fit, kappa) == -2 * penalized_objective(fit, kappa / n)`` hold
    exactly. ``count_intercept=True`` adds the intercept (the classical BIC
    count); this shifts every value by ``kappa`` and leaves the argmin alone.
    """
    df = fit.df if count_intercept else fit.df - 1
    return -2.0 * fit.loglik + kappa_value * df
