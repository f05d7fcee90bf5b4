"""Steady-state mean concentration of randomly switching source/sink holes.

Two independent routes to the same quantity:

* a two-term small-hole expansion built from Markov firing statistics and
  Green's functions of the ball (:mod:`volt.markov`, :mod:`volt.greens`,
  :mod:`volt.asymptotics`), and
* a high-order meshfree solve of the coupled mean-field PDE system on
  scattered nodes (:mod:`volt.geometry`, :mod:`volt.rbf_fd`,
  :mod:`volt.pde_solver`).

The spherically symmetric configuration has an exact solution
(:mod:`volt.shell`) used to validate both routes.
"""

from volt.asymptotics import (
    ExpansionResult,
    VaricosityConfig,
    expansion,
    expansion_eval,
    sync_indep_gap,
    synchronous_expansion,
    theta1,
    theta2_independent_pair,
    theta2_single_centered,
    theta2_synchronous_spheres,
)
from volt.geometry import (
    DomainSpec,
    GradingPolicy,
    Hole,
    NodeSet,
    check_separation,
    generate_nodes,
    shape_coefficients,
)
from volt.greens import HelmholtzGreens, NeumannGreens, regular_part_center
from volt.markov import (
    FiringModel,
    JumpSpec,
    build_jump_spec,
    firing_marginals,
    firing_matrix,
    invariant_distribution,
    spectral_decomposition,
)
from volt.pde_solver import (
    SolutionField,
    assemble_mean_system,
    assemble_two_field_system,
    field_metrics,
    solve_diagonalized,
    solve_mean_system,
)
from volt.rbf_fd import FDConfig, assemble_operator, build_stencils
from volt.shell import ShellParams, exact_shell_mean, shell_taylor

__all__ = [
    "DomainSpec",
    "ExpansionResult",
    "FDConfig",
    "FiringModel",
    "GradingPolicy",
    "HelmholtzGreens",
    "Hole",
    "JumpSpec",
    "NeumannGreens",
    "NodeSet",
    "ShellParams",
    "SolutionField",
    "VaricosityConfig",
    "assemble_mean_system",
    "assemble_operator",
    "assemble_two_field_system",
    "build_jump_spec",
    "build_stencils",
    "check_separation",
    "expansion",
    "expansion_eval",
    "exact_shell_mean",
    "field_metrics",
    "firing_marginals",
    "firing_matrix",
    "generate_nodes",
    "invariant_distribution",
    "regular_part_center",
    "shape_coefficients",
    "shell_taylor",
    "solve_diagonalized",
    "solve_mean_system",
    "spectral_decomposition",
    "sync_indep_gap",
    "synchronous_expansion",
    "theta1",
    "theta2_independent_pair",
    "theta2_single_centered",
    "theta2_synchronous_spheres",
]
