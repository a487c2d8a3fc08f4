"""Programmable photon-statistics generator.

Invert a target photon-number distribution into a modulation program,
simulate the modulated source through a realistic detector, and compare
the recorded statistics against the target.
"""
__version__ = "0.1.0"

from .distributions import (
    DomainError,
    IntensityModel,
    LevelTable,
    LogNormal,
    Mixture,
    NegativeExponential,
    Normal,
    PhotonPMF,
    PointMass,
    bose_einstein_pmf,
    discretize,
    poisson_pmf,
    uniform_truncated_pmf,
)
from .inversion import InversionResult, invert_statistics, nnls, scan_wmax
from .mandel import NumericalFailure, build_design_matrix, forward_continuous, forward_discrete, poisson_weight
from .metrics import ComparisonReport, total_variation

__all__ = [
    "ComparisonReport",
    "DomainError",
    "IntensityModel",
    "InversionResult",
    "LevelTable",
    "LogNormal",
    "Mixture",
    "NegativeExponential",
    "Normal",
    "NumericalFailure",
    "PhotonPMF",
    "PointMass",
    "bose_einstein_pmf",
    "build_design_matrix",
    "discretize",
    "forward_continuous",
    "forward_discrete",
    "invert_statistics",
    "nnls",
    "poisson_pmf",
    "poisson_weight",
    "scan_wmax",
    "total_variation",
    "uniform_truncated_pmf",
]
