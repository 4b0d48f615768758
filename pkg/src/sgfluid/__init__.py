"""Pathwise spectral-Galerkin simulation of the stochastic second grade fluid
on the 2D torus, with Malliavin-calculus verification studies."""
from .config import ConfigError, RunConfig, load_config, parse_config
from .operators import ForceSpec, GridTooSmallError, apply_B_hat
from .solver import BlowUpError, InitSpec, SolverConfig, Trajectory, solve_v
from .spectral import SpectralField, build_basis, norm_V, norm_W
from .wiener import BrownianPath, QPath, q_of, sample_path, synthetic_path

__version__ = "0.1.0"

__all__ = [
    "BlowUpError",
    "BrownianPath",
    "ConfigError",
    "ForceSpec",
    "GridTooSmallError",
    "InitSpec",
    "QPath",
    "RunConfig",
    "SolverConfig",
    "SpectralField",
    "Trajectory",
    "apply_B_hat",
    "build_basis",
    "load_config",
    "norm_V",
    "norm_W",
    "parse_config",
    "q_of",
    "sample_path",
    "solve_v",
    "synthetic_path",
]
