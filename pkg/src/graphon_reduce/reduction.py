"""Effective coupling constants and the one-dimensional reduced systems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateKernelError, InvalidInputError, SolverError
from .full_system import KernelMatrix, kernel_matrix
from .kernels import GraphonKernel, StepGraphonMatrix, degree_field, kernel_grid
from .models import DynamicsModel
from .numerics import EquilibriumBatch, IntegratorConfig, UniformGrid, solve_equilibria


def beta_eff(kernel: GraphonKernel, grid: UniformGrid) -> float:
    """Degree-weighted mean degree: integral of s^2 over the integral of s."""
    s = degree_field(kernel, grid)
    return beta_from_degrees(s, grid.weights)


def beta_from_degrees(s: np.ndarray, weights: np.ndarray) -> float:
    den = float(weights @ s)
    if not den > 0.0:
        raise DegenerateKernelError("weighted degree integrates to zero (empty graphon)")
    return float(weights @ (s * s)) / den


def beta_discrete(step: StepGraphonMatrix) -> float:
    """Network analogue of beta_eff using s_i = sum_j (W_N)_ij / N."""
    s = step.degrees()
    return beta_from_degrees(s, np.full(step.N, 1.0 / step.N))


class Eigenpair(NamedTuple):
    alpha: float
    eigenfunction: np.ndarray
    iterations: int
    residual: float
    residual_transpose: float


def leading_eigenpair(km: KernelMatrix, tol: float = 1e-12, max_iter: int = 100_000,
                      residual_tol: float = 1e-10) -> Eigenpair:
    """Perron eigenpair of (T a)_k = sum_l w_l W_kl a_l by power iteration.

    The iteration runs on T^2 from the constant vector, which also converges
    when -alpha is an eigenvalue (bipartite kernels); the positive part is
    then recovered as v + T v / alpha. Convergence needs successive
    estimates of alpha^2 to differ by less than ``tol`` and the eigen-residual
    to be below ``residual_tol``. The eigenfunction is positive and
    normalized to unit integral.
    """
    w = km.weights
    if not np.any(km.values):
        raise DegenerateKernelError("kernel matrix is identically zero")

    def wnorm(u):
        return float(np.sqrt(w @ (u * u)))

    v = np.ones(km.size)
    v /= wnorm(v)
    prev = np.inf
    residual = np.inf
    a = v
    alpha = 0.0
    for it in range(1, max_iter + 1):
        u = km.apply(v)
        z = km.apply(u)
        rq2 = float(w @ (v * z))
        if not rq2 > 0.0:
            raise DegenerateKernelError("kernel operator annihilates the constant function")
        alpha = np.sqrt(rq2)
        a = v + u / alpha
        mass = float(w @ a)
        if mass != 0.0:
            a = a / mass
            Ta = km.apply(a)
            alpha = float(w @ (a * Ta)) / float(w @ (a * a))
            residual = float(np.max(np.abs(Ta - alpha * a)))
        if abs(rq2 - prev) < tol and residual < residual_tol:
            break
        prev = rq2
        v = z / wnorm(z)
    else:
        raise SolverError(f"power iteration did not converge in {max_iter} iterations "
                          "(tied leading eigenvalue?)", residual, max_iter)
    if float(w @ a) < 0:
        a = -a
    Tt = (km.values.T * w[None, :]) @ a
    return Eigenpair(alpha, a, it, residual, float(np.max(np.abs(Tt - alpha * a))))


@dataclass(frozen=True)
class ReductionSummary:
    kernel: str
    beta_eff: float
    alpha: float
    eigenfunction: np.ndarray
    nodes: np.ndarray
    iterations: int
    residual: float
    residual_transpose: float

    def to_json(self, eigenfunction_csv_path: str | None = None) -> dict:
        return {
            "kernel": self.kernel,
            "beta_eff": self.beta_eff,
            "alpha": self.alpha,
            "residual": self.residual,
            "residual_transpose": self.residual_transpose,
            "iterations": self.iterations,
            "eigenfunction_csv_path": eigenfunction_csv_path,
        }


def summarize_kernel(kernel: GraphonKernel, grid: UniformGrid | None = None,
                     km: KernelMatrix | None = None, M: int = 200) -> ReductionSummary:
    grid = grid if grid is not None else kernel_grid(kernel, M)
    km = km if km is not None else kernel_matrix(kernel, grid)
    eig = leading_eigenpair(km)
    return ReductionSummary(kernel.name, beta_eff(kernel, grid), eig.alpha, eig.eigenfunction,
                            grid.nodes, eig.iterations, eig.residual, eig.residual_transpose)


def solve_reduced_batch(model: DynamicsModel, kappas: Sequence[float] | np.ndarray, x0,
                        config: IntegratorConfig) -> EquilibriumBatch:
    """Equilibria of x' = f(x) + kappa G(x, x) for many effective couplings at once."""
    kv = np.asarray(kappas, dtype=float).ravel()
    X0 = np.broadcast_to(np.asarray(x0, dtype=float), (kv.size,)).reshape(-1, 1).copy()

    def rhs(X, rows):
        return model.reduced_rhs(kv[rows, None], X)

    def jac(X, rows):
        return model.reduced_jacobian(kv[rows, None], X)[:, :, None]

    return solve_equilibria(rhs, jac, X0, config)


class ReducedSolution(NamedTuple):
    equilibrium: float
    converged: bool
    diverged: bool


def solve_reduced(model: DynamicsModel, effective_coupling: float, ic: float,
                  config: IntegratorConfig) -> ReducedSolution:
    """Equilibrium of the reduced system; divergence is reported, not raised."""
    if effective_coupling < 0:
        raise InvalidInputError("effective coupling must be non-negative")
    res = solve_reduced_batch(model, [effective_coupling], ic, config)
    return ReducedSolution(float(res.states[0, 0]), bool(res.converged[0]), bool(res.diverged[0]))


class BranchPoint(NamedTuple):
    ic: str
    kappa: float
    equilibrium: float
    converged: bool
    diverged: bool


def reduced_branch_sweep(model: DynamicsModel, kappas: Sequence[float], config: IntegratorConfig,
                         ic_labels: Sequence[str] | None = None) -> list[BranchPoint]:
    """Reduced equilibria over a monotone coupling grid for each labelled initial condition."""
    kv = np.asarray(kappas, dtype=float)
    if kv.size > 1 and np.any(np.diff(kv) <= 0):
        raise InvalidInputError("coupling grid must be strictly increasing")
    labels = list(model.initial_conditions) if ic_labels is None else list(ic_labels)
    out: list[BranchPoint] = []
    for label in labels:
        res = solve_reduced_batch(model, kv, model.initial_conditions[label], config)
        for i, k in enumerate(kv):
            out.append(BranchPoint(label, float(k), float(res.states[i, 0]),
                                   bool(res.converged[i]), bool(res.diverged[i])))
    return out
