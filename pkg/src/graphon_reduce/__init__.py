"""Graphon dynamical systems and their one-dimensional reductions."""

from __future__ import annotations

from .errors import (ConfigError, DegenerateKernelError, GraphonReduceError, InvalidInputError,
                     NumericalBlowupError, SolverError)
from .experiments import (ExperimentConfig, SweepRecord, convergence_study, integrated_error,
                          load_config, relative_error, run_sweep)
from .full_system import (KernelMatrix, StateField, boundedness_check, full_rhs, gbb_observable,
                          kernel_matrix, solve_full, spectral_observable)
from .kernels import (GraphonKernel, eval_kernel, kernel_grid, kernel_l2_distance, make_kernel,
                      step_graphon_matrix, weighted_degree)
from .models import DynamicsModel, coupling, make_model, reduced_rhs, self_dynamics
from .numerics import (IntegratorConfig, UniformGrid, integrate_to_equilibrium, rk4_step,
                       simpson_integrate)
from .reduction import ReductionSummary, beta_eff, leading_eigenpair, reduced_branch_sweep, solve_reduced

__all__ = [
    "ConfigError", "DegenerateKernelError", "GraphonReduceError", "InvalidInputError",
    "NumericalBlowupError", "SolverError", "ExperimentConfig", "SweepRecord", "convergence_study",
    "integrated_error", "load_config", "relative_error", "run_sweep", "KernelMatrix", "StateField",
    "boundedness_check", "full_rhs", "gbb_observable", "kernel_matrix", "solve_full",
    "spectral_observable", "GraphonKernel", "eval_kernel", "kernel_grid", "kernel_l2_distance",
    "make_kernel", "step_graphon_matrix", "weighted_degree", "DynamicsModel", "coupling",
    "make_model", "reduced_rhs", "self_dynamics", "IntegratorConfig", "UniformGrid",
    "integrate_to_equilibrium", "rk4_step", "simpson_integrate", "ReductionSummary", "beta_eff",
    "leading_eigenpair", "reduced_branch_sweep", "solve_reduced",
]
