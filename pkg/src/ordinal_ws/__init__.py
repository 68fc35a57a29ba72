"""Weighted scores estimation and CL1 model selection for clustered ordinal data."""
from .cl1 import CorrelationModel, cl1_loglik, estimate_correlations
from .data import OrdinalDataset, ingest_csv
from .errors import (ClampWarning, ConvergenceError, DomainError, EvaluationError, IdentifiabilityError,
                     MatrixError)
from .gauss import LOGIT, PROBIT, Link, bvn_cdf, bvn_rect, get_link, mvn_rect
from .margins import MarginalFit, UnivariateParams, fit_independent
from .selection import CriteriaReport, assemble_H, assemble_J, cl1_criteria, model_search
from .simulate import SimDesign, SimSummary, run_replications
from .wscore import FitReport, build_weights, sandwich_covariance, solve_weighted_scores, wald_test

__version__ = "0.1.0"

__all__ = [
    "ClampWarning", "ConvergenceError", "CorrelationModel", "CriteriaReport", "DomainError", "EvaluationError",
    "FitReport", "IdentifiabilityError", "LOGIT", "Link", "MarginalFit", "MatrixError", "OrdinalDataset", "PROBIT",
    "SimDesign", "SimSummary", "UnivariateParams", "assemble_H", "assemble_J", "build_weights", "bvn_cdf",
    "bvn_rect", "cl1_criteria", "cl1_loglik", "estimate_correlations", "fit_independent", "get_link",
    "ingest_csv", "model_search", "mvn_rect", "run_replications", "sandwich_covariance",
    "solve_weighted_scores", "wald_test",
]
