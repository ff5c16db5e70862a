"""Finite elements for Neumann problems of the integral fractional Laplacian."""

from .analysis import (
    RateFit,
    decay_diagnostics,
    fit_rate,
    hs_error_omega_1d,
    hs_seminorm_omega_1d,
    l2_error_omega,
    omega_mean,
    quasi_interpolate,
    truncation_study,
)
from .assembly import (
    AdmissibilityError,
    FluxSpec,
    LinearSystem,
    SourceSpec,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    assemble_system,
)
from .mesh import Mesh1D, MeshError, TriMesh2D, build_disk_mesh_2d, build_mesh_1d, mesh_stats
from .params import FractionalParams, ParameterError, dirichlet_constant, normalization_constant
from .solve import (
    ConditioningError,
    DiscreteSolution,
    HeatConfig,
    SolverError,
    evaluate,
    solve_heat,
    solve_stationary,
)

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityError",
    "ConditioningError",
    "DiscreteSolution",
    "FluxSpec",
    "FractionalParams",
    "HeatConfig",
    "LinearSystem",
    "Mesh1D",
    "MeshError",
    "ParameterError",
    "RateFit",
    "SolverError",
    "SourceSpec",
    "TriMesh2D",
    "assemble_load",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_system",
    "build_disk_mesh_2d",
    "build_mesh_1d",
    "decay_diagnostics",
    "dirichlet_constant",
    "evaluate",
    "fit_rate",
    "hs_error_omega_1d",
    "hs_seminorm_omega_1d",
    "l2_error_omega",
    "mesh_stats",
    "normalization_constant",
    "omega_mean",
    "quasi_interpolate",
    "solve_heat",
    "solve_stationary",
    "truncation_study",
]
