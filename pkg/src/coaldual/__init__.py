"""Jacobi diffusion transition densities, their coalescent lines-of-descent
duals, Jacobi spectra, and Inverse Gaussian subordination of both."""
from .errors import (
    BranchError,
    CoalDualError,
    CombinatorialLimit,
    ConvergenceError,
    DivergentLambda,
    DomainError,
    NonTerminatingSeries,
    PoleError,
    PrecisionLoss,
    StepSizeError,
    TruncationError,
)
from .series import DensityValue, MCEstimate, ProbVector, SeriesControl
from .special import DirichletParams, ModelParams
from .subordination import INF

__version__ = "0.1.0"

__all__ = [
    "BranchError",
    "CoalDualError",
    "CombinatorialLimit",
    "ConvergenceError",
    "DensityValue",
    "DirichletParams",
    "DivergentLambda",
    "DomainError",
    "INF",
    "MCEstimate",
    "ModelParams",
    "NonTerminatingSeries",
    "PoleError",
    "PrecisionLoss",
    "ProbVector",
    "SeriesControl",
    "StepSizeError",
    "TruncationError",
]
