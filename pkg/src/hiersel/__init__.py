"""Selection of main effects and interactions under strong hierarchy.

An L0-penalized likelihood over strong-hierarchy models, optimized by
randomized local search after conditional score screening, for canonical
GLMs (gaussian, binomial, poisson).
"""

from .errors import (ConfigError, DegenerateWeights, DomainError, HierselError, InvalidMove,
                     NotConverged, ParseError, SingularDesign)
from .glm import (Dataset, ExponentialFamily, FitResult, binomial, fit_mle, gaussian, irls,
                  log_likelihood, make_family, poisson)
from .models import EMPTY, ModelAlpha, Move, MoveKind, apply_move, check_strong_hierarchy
from .screening import ScreenResult, alrsis_screen, assis_screen, score_statistic
from .search import (ModelFitter, SelectionResult, exhaustive_search, local_search,
                     penalized_objective, select)
from .tuning import KappaRule, gic, kappa, lambda_closed_form

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DegenerateWeights", "DomainError", "HierselError", "InvalidMove",
    "NotConverged", "ParseError", "SingularDesign",
    "Dataset", "ExponentialFamily", "FitResult", "binomial", "fit_mle", "gaussian", "irls",
    "log_likelihood", "make_family", "poisson",
    "EMPTY", "ModelAlpha", "Move", "MoveKind", "apply_move", "check_strong_hierarchy",
    "ScreenResult", "alrsis_screen", "assis_screen", "score_statistic",
    "ModelFitter", "SelectionResult", "exhaustive_search", "local_search",
    "penalized_objective", "select",
    "KappaRule", "gic", "kappa", "lambda_closed_form",
]
