"""Nystrom discretization of the graphon system and its scalar observables.

The integral over y' is replaced by a weighted sum over nodes, so the graphon
system on a Simpson grid and the N-node network (uniform weights 1/N, cell
averaged kernel) share one right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateKernelError, InvalidInputError
from .kernels import GraphonKernel, StepGraphonMatrix, step_graphon_matrix
from .models import DynamicsModel
from .numerics import (EquilibriumBatch, IntegratorConfig, Trajectory, UniformGrid,
                       integrate_span, solve_equilibria)


@dataclass(frozen=True)
class KernelMatrix:
    """Kernel values between quadrature nodes together with the quadrature weights."""

    values: np.ndarray
    weights: np.ndarray
    nodes: np.ndarray
    weighted: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] != w.size:
            raise InvalidInputError(f"kernel matrix {v.shape} does not match {w.size} weights")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "weighted", v * w[None, :])

    @property
    def size(self) -> int:
        return self.weights.size

    def apply(self, u: np.ndarray) -> np.ndarray:
        """(T u)_k = sum_l w_l W_kl u_l."""
        return self.weighted @ u

    def degrees(self) -> np.ndarray:
        return self.weighted.sum(axis=1)


def kernel_matrix(kernel: GraphonKernel, grid: UniformGrid) -> KernelMatrix:
    """Sample W on the grid (one-sided at split points, stencil-averaged on jump lines)."""
    e = grid.eval_points
    vals = kernel.node_values(e[:, None], e[None, :])
    vals = 0.5 * (vals + vals.T)
    return KernelMatrix(vals, grid.weights, grid.nodes)


def finite_network_matrix(kernel: GraphonKernel | StepGraphonMatrix, N: int | None = None,
                          subcell_points: int = 8) -> KernelMatrix:
    """The N-node network: cell-averaged W_N with uniform weights 1/N at cell midpoints."""
    step = kernel if isinstance(kernel, StepGraphonMatrix) else step_graphon_matrix(kernel, N, subcell_points)
    n = step.N
    return KernelMatrix(step.entries, np.full(n, 1.0 / n), (np.arange(n) + 0.5) / n)


@dataclass
class StateField:
    """Node values of x(., t) with the quadrature weights they are integrated with."""

    values: np.ndarray
    weights: np.ndarray
    nodes: np.ndarray
    time: float = 0.0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != np.shape(self.weights):
            raise InvalidInputError("field values and weights differ in length")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("field values must be finite")


def _as_values(field_or_values, n: int) -> np.ndarray:
    vals = field_or_values.values if isinstance(field_or_values, StateField) else np.asarray(field_or_values, dtype=float)
    if vals.shape[-1] != n:
        raise InvalidInputError(f"state has {vals.shape[-1]} nodes, kernel matrix has {n}")
    return vals


def full_rhs(model: DynamicsModel, km: KernelMatrix, state) -> np.ndarray:
    """f(x_k) + D sum_l w_l W_kl G(x_k, x_l) for a single field or a batch (B, n)."""
    x = _as_values(state, km.size)
    X = np.atleast_2d(x)
    out = model.f(X) + model.D * model.coupling_sum(X, km.weighted)
    return out.reshape(x.shape)


def full_jacobian(model: DynamicsModel, km: KernelMatrix, state, D: np.ndarray | float | None = None) -> np.ndarray:
    X = np.atleast_2d(_as_values(state, km.size))
    Dv = np.broadcast_to(np.asarray(model.D if D is None else D, dtype=float), (X.shape[0],))
    J = Dv[:, None, None] * model.coupling_jacobian(X, km.weighted)
    idx = np.arange(km.size)
    J[:, idx, idx] += model.df(X)
    return J


def solve_full_batch(model: DynamicsModel, km: KernelMatrix, D: Sequence[float] | np.ndarray,
                     x0, config: IntegratorConfig) -> EquilibriumBatch:
    """Integrate the system to equilibrium for every coupling strength in ``D`` at once."""
    Dv = np.asarray(D, dtype=float).ravel()
    if np.any(Dv < 0):
        raise InvalidInputError("coupling strengths must be non-negative")
    n = km.size
    X0 = np.broadcast_to(np.asarray(x0, dtype=float), (Dv.size, n)).copy()
    Kw = km.weighted

    def rhs(X, rows):
        return model.f(X) + Dv[rows, None] * model.coupling_sum(X, Kw)

    def jac(X, rows):
        return full_jacobian(model, km, X, Dv[rows])

    return solve_equilibria(rhs, jac, X0, config)


class FullSolution(NamedTuple):
    field: StateField
    converged: bool
    diverged: bool
    residual: float
    max_abs: float
    polished: bool


def solve_full(model: DynamicsModel, kernel: GraphonKernel | KernelMatrix, grid: UniformGrid | None,
               ic_label: str, config: IntegratorConfig) -> FullSolution:
    """Equilibrium of the graphon system from the labelled constant initial condition."""
    km = kernel if isinstance(kernel, KernelMatrix) else kernel_matrix(kernel, grid)
    try:
        x0 = model.initial_conditions[ic_label]
    except KeyError:
        raise InvalidInputError(f"{model.name} has no initial condition {ic_label!r}") from None
    res = solve_full_batch(model, km, [model.D], x0, config)
    state = res.states[0]
    finite = bool(np.all(np.isfinite(state)))
    fld = StateField(state if finite else np.zeros_like(state), km.weights, km.nodes, float(res.times[0]))
    return FullSolution(fld, bool(res.converged[0]), bool(res.diverged[0]), float(res.residual[0]),
                        float(res.max_abs[0]), bool(res.polished[0]))


def integrate_full(model: DynamicsModel, km: KernelMatrix, x0, dt: float, T: float,
                   snapshot_every: float) -> Trajectory:
    """Fixed-horizon trajectory of the discretized system with periodic snapshots."""
    x0 = _as_values(np.broadcast_to(np.asarray(x0, dtype=float), (km.size,)), km.size)
    return integrate_span(lambda x: full_rhs(model, km, x), x0, dt, T, snapshot_every)


def gbb_observable(values, degree, weights) -> float:
    """Degree-weighted mean: integral of s x over the integral of s."""
    x = np.asarray(getattr(values, "values", values), dtype=float)
    s = np.asarray(degree, dtype=float)
    w = np.asarray(weights, dtype=float)
    if not x.shape[-1] == s.size == w.size:
        raise InvalidInputError("field, degree and weights must have equal length")
    den = float(w @ s)
    if not abs(den) > 0.0:
        raise DegenerateKernelError("weighted degree integrates to zero (empty graphon)")
    return (x @ (w * s)) / den


def spectral_observable(values, eigenfunction, weights, tol: float = 1e-8) -> float:
    """Integral of a x, with a normalized so that its integral is one."""
    x = np.asarray(getattr(values, "values", values), dtype=float)
    a = np.asarray(eigenfunction, dtype=float)
    w = np.asarray(weights, dtype=float)
    if not x.shape[-1] == a.size == w.size:
        raise InvalidInputError("field, eigenfunction and weights must have equal length")
    if abs(float(w @ a) - 1.0) > tol:
        raise InvalidInputError(f"eigenfunction is not normalized (integral {float(w @ a)!r})")
    return x @ (w * a)


@dataclass(frozen=True)
class BoundednessReport:
    finite: bool
    max_norm: float
    bound: float
    within_bound: bool
    constant: float

    @property
    def passed(self) -> bool:
        return self.finite and self.within_bound


def boundedness_check(max_norm: float, x0_norm: float, model: DynamicsModel, T: float) -> BoundednessReport:
    """Compare max_t ||x(t)||_inf with 4 ||x(0)||_inf + 2 (|f(0)| + D |G(0,0)|) T.

    The coupling constant D is folded into G, as in the system the bound is
    stated for. Failures are reported, never raised.
    """
    f0 = abs(float(model.f(0.0)))
    g0 = abs(float(model.G(0.0, 0.0)))
    C = 2.0 * (f0 + model.D * g0) * T
    bound = 4.0 * abs(x0_norm) + C
    finite = bool(np.isfinite(max_norm))
    return BoundednessReport(finite, float(max_norm), bound, finite and max_norm <= bound * (1 + 1e-12), C)
