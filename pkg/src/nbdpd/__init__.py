"""Density-power divergences, their norm-based Bregman generalisation, and
robust minimum-divergence estimation."""

__version__ = "0.1.0"

from .densities import Exponential, Gaussian, GridDensity, PowerMoments, sample, sample_contaminated
from .divergences import (DivergenceRequest, DivergenceResult, Family, HSpec, VSpec, evaluate, kl, nb_dpce,
                          nb_dpd)
from .errors import ConvergenceError, DomainError, IntegrationError, NBDPDError, ParameterError
from .estimation import EmpiricalLossSpec, EstimationResult, empirical_loss, psi, solve
from .phi import PhiKind, PhiSpec, validate_phi
from .quadrature import QuadConfig, integrate
from .robustness import (ContaminationReport, EstimatorSpec, InfluenceCurve, contamination_experiment,
                         influence_curve)

__all__ = [
    "ContaminationReport", "ConvergenceError", "DivergenceRequest", "DivergenceResult", "DomainError",
    "EmpiricalLossSpec", "EstimationResult", "EstimatorSpec", "Exponential", "Family", "Gaussian",
    "GridDensity", "HSpec", "InfluenceCurve", "IntegrationError", "NBDPDError", "ParameterError", "PhiKind",
    "PhiSpec", "PowerMoments", "QuadConfig", "VSpec", "contamination_experiment", "empirical_loss",
    "evaluate", "influence_curve", "integrate", "kl", "nb_dpce", "nb_dpd", "psi", "sample",
    "sample_contaminated", "solve", "validate_phi",
]
