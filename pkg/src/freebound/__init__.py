"""Numerical lab for the semilinear one-phase Bernoulli free-boundary problem."""

from .grid import Grid, GridSpec, ScalarField, VectorField, make_grid
from .model import BoundaryData, ForceField, ModelSpec, NonlinearTerm, Obstacle, make_model, validate_model
from .energy import EnergyBreakdown, first_variation, total_energy
from .levelset import FreeBoundary, extract_free_boundary
from .minimizer import Solution, SolverConfig, competitor_audit, solve
from .config import RunConfig, parse_config, serialize

__all__ = [
    "Grid",
    "GridSpec",
    "ScalarField",
    "VectorField",
    "make_grid",
    "BoundaryData",
    "ForceField",
    "ModelSpec",
    "NonlinearTerm",
    "Obstacle",
    "make_model",
    "validate_model",
    "EnergyBreakdown",
    "first_variation",
    "total_energy",
    "FreeBoundary",
    "extract_free_boundary",
    "Solution",
    "SolverConfig",
    "competitor_audit",
    "solve",
    "RunConfig",
    "parse_config",
    "serialize",
]
