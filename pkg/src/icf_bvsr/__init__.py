"""Penalized linear system solvers (iterative complex factorization) and
Bayesian variable selection regression fitted by an exchange-algorithm MCMC."""

__version__ = "0.1.0"

from .estimator import BvsrRegressor
from .mcmc import ChainConfig, merge_outputs, run_chain
from .model import Dataset, Hyperpriors
from .solvers import (
    PenalizedSystem,
    SolverOptions,
    solve_direct,
    solve_icf,
)

__all__ = [
    "__version__",
    "BvsrRegressor",
    "ChainConfig",
    "Dataset",
    "Hyperpriors",
    "PenalizedSystem",
    "SolverOptions",
    "merge_outputs",
    "run_chain",
    "solve_direct",
    "solve_icf",
]
