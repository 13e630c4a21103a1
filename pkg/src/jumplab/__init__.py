"""jumplab: desk-scale solvers for Dirichlet problems and principal
eigenvalues of operators that combine a Laplacian with a Levy jump part.

Two independent routes are provided and cross-validated: exit-time Monte
Carlo along simulated jump-diffusion paths, and a deterministic sparse
discretization on uniform grids.
"""

__version__ = "0.1.0"

from .kernels import JumpKernel
from .geometry import Ball, Box, Ellipsoid, Interval, Polytope, equal_volume_ball
from .paths import ExitSample, PathConfig, simulate_exit, survival_curve
from .dirichlet import EstimatorResult, solve_at
from .eigen import EigenEstimate, estimate_lambda, faber_krahn_compare

__all__ = [
    "JumpKernel",
    "Ball", "Box", "Ellipsoid", "Interval", "Polytope", "equal_volume_ball",
    "ExitSample", "PathConfig", "simulate_exit", "survival_curve",
    "EstimatorResult", "solve_at",
    "EigenEstimate", "estimate_lambda", "faber_krahn_compare",
    "__version__",
]
