"""Dislocation structure of low-angle grain boundaries by constrained
energy minimization: modified ADMM, ALM and penalty solvers, a
quasi-convexity certifier and the three-block ADMM counterexample."""

from gbadmm.numkit import (
    ConvergenceFailure,
    NonFiniteError,
    SingularMatrix,
    eigvals_dense,
    fd_gradient,
    matmul,
    solve_linear,
    spectral_radius,
    sym_eig_min_2x2,
)
from gbadmm.model import (
    BurgersSet,
    ConstraintSystem,
    GBModel,
    GBParams,
    assemble_constraints,
    energy_component,
    grad_energy_component,
    hess_energy_component,
    preset_fcc111,
    preset_three_burgers,
    residual,
    total_energy,
)
from gbadmm.solvers import (
    AugLagParams,
    Diverged,
    SolveResult,
    SolverTrace,
    admm_solve,
    alm_solve,
    monotonicity_audit,
    penalty_solve,
)

__all__ = [
    "ConvergenceFailure",
    "NonFiniteError",
    "SingularMatrix",
    "eigvals_dense",
    "fd_gradient",
    "matmul",
    "solve_linear",
    "spectral_radius",
    "sym_eig_min_2x2",
    "BurgersSet",
    "ConstraintSystem",
    "GBModel",
    "GBParams",
    "assemble_constraints",
    "energy_component",
    "grad_energy_component",
    "hess_energy_component",
    "preset_fcc111",
    "preset_three_burgers",
    "residual",
    "total_energy",
    "AugLagParams",
    "Diverged",
    "SolveResult",
    "SolverTrace",
    "admm_solve",
    "alm_solve",
    "monotonicity_audit",
    "penalty_solve",
]

__version__ = "0.1.0"
