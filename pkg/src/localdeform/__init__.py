"""Localized shape deformation via SC-L1-regularized elastic energy minimization."""

from . import errors
from .energies import (Acap, Arap, ClothArap, NeoHookean, PolylineArap,
                       acap_fit_rotation_scale, arap_fit_rotation,
                       bending_matrix, nh_energy_sigma,
                       nh_prox_singular_values, strain_limit_project)
from .geometry import (RestMesh, SmallMatrixFactors, build_rest_mesh,
                       displacement_stats, polar_sym, svd_small)
from .regularizers import (LocalityParams, l21_prox, l21_value, scl1_prox,
                           scl1_value)
from .solver import (AffineGroup, ConstraintSet, DeformResult, SolverParams,
                     SolverState, admm_iterate, assemble_global_system,
                     augmented_lagrangian, init_state, reset_duals, solve,
                     validate_params)

__version__ = "0.1.0"

__all__ = [
    "errors", "RestMesh", "SmallMatrixFactors", "build_rest_mesh",
    "displacement_stats", "polar_sym", "svd_small", "LocalityParams",
    "scl1_value", "scl1_prox", "l21_value", "l21_prox", "Arap", "Acap",
    "NeoHookean", "ClothArap", "PolylineArap", "arap_fit_rotation",
    "acap_fit_rotation_scale", "nh_energy_sigma", "nh_prox_singular_values",
    "bending_matrix", "strain_limit_project", "SolverParams", "ConstraintSet",
    "AffineGroup", "SolverState", "DeformResult", "validate_params",
    "assemble_global_system", "admm_iterate", "solve", "init_state",
    "reset_duals", "augmented_lagrangian", "__version__",
]
