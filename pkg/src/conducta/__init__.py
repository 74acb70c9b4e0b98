"""Effective-conductivity bounds for multiphase periodic composites.

Closed-form upper bounds (trivial, Hashin-Shtrikman, and a distribution-tail
refinement with a free shift parameter), a spectral cell-problem solver to
validate them on voxel microstructures, the constructive test-field pipeline
behind the refined bound, and dyadic BMO / John-Nirenberg analysis of the
potential fields.
"""

from .bmo import (
    BmoEstimate,
    JohnNirenbergFit,
    bmo_norm,
    full_dyadic_depth,
    john_nirenberg_fit,
    lemma1_ratio,
    superlevel_masks,
)
from .bounds import (
    BoundConfig,
    BoundReport,
    h_term,
    hs_upper,
    milton_gap,
    optimize_S,
    theorem1_upper,
    three_phase_refined,
    trivial_upper,
)
from .cell_solver import (
    EffectiveTensor,
    PotentialField,
    SolverConfig,
    build_optimal_potential,
    constructive_upper,
    constructive_value,
    evaluate_I1,
    evaluate_I2,
    oscillation_closed_form,
    oscillation_of_theta,
    solve_effective_tensor,
    traceless_hessian,
)
from .errors import ConfigError, ConvergenceError, GridFormatError
from .microstructure import (
    VoxelGrid,
    empirical_phase_set,
    generate_checkerboard,
    generate_laminate,
    generate_random,
    load_grid,
    save_grid,
)
from .phases import (
    DistributionFunction,
    Phase,
    PhaseSet,
    distribution_from_phases,
    distribution_weight,
    parse_phase_config,
    read_phase_config,
    shifted_harmonic_L,
    tail_integral,
)

__version__ = "0.1.0"

__all__ = [
    "BmoEstimate",
    "BoundConfig",
    "BoundReport",
    "ConfigError",
    "ConvergenceError",
    "DistributionFunction",
    "EffectiveTensor",
    "GridFormatError",
    "JohnNirenbergFit",
    "Phase",
    "PhaseSet",
    "PotentialField",
    "SolverConfig",
    "VoxelGrid",
    "bmo_norm",
    "build_optimal_potential",
    "constructive_upper",
    "constructive_value",
    "distribution_from_phases",
    "distribution_weight",
    "empirical_phase_set",
    "evaluate_I1",
    "evaluate_I2",
    "full_dyadic_depth",
    "generate_checkerboard",
    "generate_laminate",
    "generate_random",
    "h_term",
    "hs_upper",
    "john_nirenberg_fit",
    "lemma1_ratio",
    "load_grid",
    "milton_gap",
    "optimize_S",
    "oscillation_closed_form",
    "oscillation_of_theta",
    "parse_phase_config",
    "read_phase_config",
    "save_grid",
    "shifted_harmonic_L",
    "solve_effective_tensor",
    "superlevel_masks",
    "tail_integral",
    "theorem1_upper",
    "three_phase_refined",
    "traceless_hessian",
    "trivial_upper",
]
