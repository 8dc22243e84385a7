"""Lipschitz-Killing curvatures of Gaussian excursion sets and their fluctuations."""

from .covariance import IsotropicCovariance, check_hypotheses
from .experiment import ExperimentPlan, run_experiment
from .fieldgen import GridSpec, derive_seed, synthesize
from .geometry import ExcursionMask, LkcPolicy, estimate_all_lkcs, threshold
from .theory import ChaosContext, expected_lkc, first_chaos_variance, sojourn_variance_series

__all__ = [
    "ChaosContext",
    "ExcursionMask",
    "ExperimentPlan",
    "GridSpec",
    "IsotropicCovariance",
    "LkcPolicy",
    "check_hypotheses",
    "derive_seed",
    "estimate_all_lkcs",
    "expected_lkc",
    "first_chaos_variance",
    "run_experiment",
    "sojourn_variance_series",
    "synthesize",
    "threshold",
]
