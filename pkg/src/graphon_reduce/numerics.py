"""Composite Simpson quadrature, fixed-step RK4 and equilibrium detection.

Every solver in the package shares these routines. Time stepping is the
classical fourth-order Runge-Kutta scheme with a fixed step; equilibria are
declared when the infinity norm of the right-hand side drops below a
threshold, and can optionally be refined with Newton's method afterwards.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import InvalidInputError, NumericalBlowupError

log = logging.getLogger(__name__)

# Distance used to place the two copies of a split node on either side of a
# kernel discontinuity. Must stay far above the kernel averaging stencil.
SIDE_OFFSET = 1e-10

_INTEGRAL_TOL = 1e-9


def simpson_weights(M: int) -> np.ndarray:
    """Composite Simpson weights for M (even) intervals on [0, 1]."""
    if M < 2 or M % 2:
        raise InvalidInputError(f"Simpson rule needs an even interval count >= 2, got {M}")
    w = np.full(M + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w / (3.0 * M)


def _is_integral(v: float) -> bool:
    return abs(v - round(v)) < _INTEGRAL_TOL


def snap_grid_size(M: int, aligned: Sequence[float] = (), split: Sequence[float] = (),
                   search: int = 100_000) -> int:
    """Smallest even M' >= M putting every aligned point on a node and every split point on an even node.

    Falls back to ``M`` (rounded up to even) when no such size exists within
    ``search`` candidates, e.g. for irrational breakpoints.
    """
    start = M + (M % 2)
    for cand in range(start, start + search, 2):
        if all(_is_integral(a * cand) for a in aligned) and all(
            _is_integral(s * cand) and round(s * cand) % 2 == 0 for s in split
        ):
            return cand
    log.warning("no grid size aligns breakpoints %s / %s; using M=%d", aligned, split, start)
    return start


@dataclass(frozen=True)
class UniformGrid:
    """Uniform Simpson grid on [0, 1] with M intervals.

    Without split points the nodes are y_k = k/M. Each split point s (which
    must sit on an even node) is stored twice, once closing the piece to its
    left and once opening the piece to its right; ``eval_points`` nudges
    those copies by ``SIDE_OFFSET`` so functions are sampled by their
    one-sided limits. The weights are the composite Simpson weights of each
    piece and still sum to one.
    """

    M: int
    split_points: tuple[float, ...] = ()
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)
    eval_points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        M = int(self.M)
        if M < 2 or M % 2:
            raise InvalidInputError(f"grid needs an even interval count >= 2, got {M}")
        splits = tuple(sorted(float(s) for s in self.split_points))
        object.__setattr__(self, "split_points", splits)
        bounds = [0]
        for s in splits:
            if not 0.0 < s < 1.0:
                raise InvalidInputError(f"split point {s} outside (0, 1)")
            k = s * M
            if not _is_integral(k) or round(k) % 2:
                raise InvalidInputError(f"split point {s} is not on an even node of M={M}")
            bounds.append(int(round(k)))
        bounds.append(M)
        if any(b1 <= b0 for b0, b1 in zip(bounds, bounds[1:])):
            raise InvalidInputError(f"degenerate split points {splits}")

        nodes, weights, evals = [], [], []
        for i, (k0, k1) in enumerate(zip(bounds, bounds[1:])):
            idx = np.arange(k0, k1 + 1)
            y = idx / M
            m = k1 - k0
            w = simpson_weights(m) * (m / M)
            e = y.copy()
            if i > 0:
                e[0] += SIDE_OFFSET
            if i < len(bounds) - 2:
                e[-1] -= SIDE_OFFSET
            nodes.append(y)
            weights.append(w)
            evals.append(e)
        object.__setattr__(self, "nodes", np.concatenate(nodes))
        object.__setattr__(self, "weights", np.concatenate(weights))
        object.__setattr__(self, "eval_points", np.concatenate(evals))

    @property
    def size(self) -> int:
        return self.nodes.size

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Simpson integral over the last axis."""
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != self.size:
            raise InvalidInputError(f"expected {self.size} values on the grid, got {values.shape[-1]}")
        return values @ self.weights


def simpson_integrate(values: Sequence[float] | np.ndarray, grid: UniformGrid | None = None) -> float:
    """Composite Simpson estimate of the integral over [0, 1] of sampled values."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise InvalidInputError("values must be one-dimensional")
    if grid is None:
        M = values.size - 1
        if M < 2 or M % 2:
            raise InvalidInputError(f"need an odd number (>= 3) of samples, got {values.size}")
        return float(values @ simpson_weights(M))
    return float(grid.integrate(values))


@dataclass(frozen=True)
class IntegratorConfig:
    """Time-stepping settings.

    ``polish`` enables a Newton refinement of every equilibrium found by
    time stepping. With polishing on, batched solves also try Newton every
    ``newton_interval`` time units on trajectories whose residual is below
    ``newton_handoff_tol``; such an attempt only counts if it lands on a
    stable equilibrium meeting ``equilibrium_tol``. ``blowup_threshold``
    marks trajectories as divergent once any component exceeds it.
    """

    dt: float = 0.01
    t_max: float = 500.0
    equilibrium_tol: float = 1e-9
    polish: bool = True
    blowup_threshold: float = 1e12
    newton_interval: float = 25.0
    newton_handoff_tol: float = 1e-6

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise InvalidInputError(f"dt must be positive, got {self.dt}")
        if not self.equilibrium_tol > 0:
            raise InvalidInputError(f"equilibrium_tol must be positive, got {self.equilibrium_tol}")
        if not self.t_max >= 0:
            raise InvalidInputError(f"t_max must be non-negative, got {self.t_max}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))


def _rk4_advance(rhs: Callable[[np.ndarray], np.ndarray], x: np.ndarray, k1: np.ndarray,
                 dt: float) -> np.ndarray:
    k2 = rhs(x + 0.5 * dt * k1)
    k3 = rhs(x + 0.5 * dt * k2)
    k4 = rhs(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(rhs: Callable[[np.ndarray], np.ndarray], state: np.ndarray, dt: float,
             t: float = 0.0) -> np.ndarray:
    """One classical RK4 step of the autonomous system x' = rhs(x).

    Raises NumericalBlowupError if the right-hand side or the new state is
    not finite; ``t`` is only used to label that error.
    """
    x = np.asarray(state, dtype=float)
    k1 = rhs(x)
    if not np.all(np.isfinite(k1)):
        raise NumericalBlowupError("non-finite right-hand side", t)
    new = _rk4_advance(rhs, x, k1, dt)
    if not np.all(np.isfinite(new)):
        raise NumericalBlowupError("non-finite state after RK4 step", t + dt)
    return new


class EquilibriumResult(NamedTuple):
    state: np.ndarray
    converged: bool
    time: float


def integrate_to_equilibrium(rhs: Callable[[np.ndarray], np.ndarray], state0,
                             config: IntegratorConfig) -> EquilibriumResult:
    """Step until ||rhs(x)||_inf < tol or t_max is reached, whichever comes first."""
    x = np.array(state0, dtype=float)
    dt = config.dt
    n_steps = config.n_steps
    t = 0.0
    for step in range(n_steps + 1):
        t = step * dt
        k1 = rhs(x)
        if not np.all(np.isfinite(k1)):
            raise NumericalBlowupError("non-finite right-hand side", t)
        if np.max(np.abs(k1), initial=0.0) < config.equilibrium_tol:
            return EquilibriumResult(x, True, t)
        if step == n_steps:
            break
        x = _rk4_advance(rhs, x, k1, dt)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > config.blowup_threshold:
            raise NumericalBlowupError("trajectory diverged", t + dt)
    return EquilibriumResult(x, False, t)


class BatchResult(NamedTuple):
    states: np.ndarray      # (B, n) final states
    converged: np.ndarray   # (B,) bool
    diverged: np.ndarray    # (B,) bool
    times: np.ndarray       # (B,) time at which each row stopped
    lo: np.ndarray          # (B,) smallest component seen along each trajectory
    hi: np.ndarray          # (B,) largest component seen along each trajectory
    residual: np.ndarray    # (B,) ||rhs||_inf at the final state

    @property
    def max_abs(self) -> np.ndarray:
        return np.maximum(np.abs(self.lo), np.abs(self.hi))


BatchRhs = Callable[[np.ndarray, np.ndarray], np.ndarray]


def integrate_batch(rhs: BatchRhs, X0: np.ndarray, config: IntegratorConfig) -> BatchResult:
    """Integrate independent trajectories side by side until each reaches equilibrium.

    ``rhs(X, rows)`` returns the derivative of the trajectories ``rows`` whose
    current states are the rows of X. Rows are frozen once converged or
    divergent; divergence is recorded per row and never raised.
    """
    X = np.array(X0, dtype=float, copy=True)
    if X.ndim != 2:
        raise InvalidInputError("batch states must be two-dimensional (B, n)")
    B = X.shape[0]
    converged = np.zeros(B, dtype=bool)
    diverged = ~np.all(np.isfinite(X), axis=1)
    times = np.zeros(B)
    lo = np.min(X, axis=1, initial=np.inf)
    hi = np.max(X, axis=1, initial=-np.inf)
    residual = np.full(B, np.inf)
    active = np.flatnonzero(~diverged)
    dt = config.dt
    n_steps = config.n_steps
    for step in range(n_steps + 1):
        if active.size == 0:
            break
        t = step * dt
        Xa = X[active]
        k1 = rhs(Xa, active)
        res = np.max(np.abs(k1), axis=1, initial=0.0)
        bad = ~np.isfinite(res)
        done = (res < config.equilibrium_tol) & ~bad
        residual[active] = res
        times[active] = t
        converged[active[done]] = True
        diverged[active[bad]] = True
        keep = ~(done | bad)
        if step == n_steps:
            break
        active, Xa, k1 = active[keep], Xa[keep], k1[keep]
        if active.size == 0:
            break

        def sub_rhs(Z, rows=active):
            return rhs(Z, rows)

        Xn = _rk4_advance(sub_rhs, Xa, k1, dt)
        amax = np.max(np.abs(Xn), axis=1, initial=0.0)
        blown = ~np.isfinite(amax) | (amax > config.blowup_threshold)
        X[active] = Xn
        with np.errstate(invalid="ignore"):
            lo[active] = np.fmin(lo[active], np.where(blown, -np.inf, np.min(Xn, axis=1)))
            hi[active] = np.fmax(hi[active], np.where(blown, np.inf, np.max(Xn, axis=1)))
        times[active] = t + dt
        if np.any(blown):
            diverged[active[blown]] = True
            residual[active[blown]] = np.inf
            active = active[~blown]
    return BatchResult(X, converged, diverged, times, lo, hi, residual)


BatchJac = Callable[[np.ndarray, np.ndarray], np.ndarray]


def newton_polish(rhs: BatchRhs, jac: BatchJac, X: np.ndarray, rows: np.ndarray,
                  check_stability: np.ndarray | None = None, max_iter: int = 80,
                  step_tol: float = 1e-14, radius: float = 1e-2,
                  stability_tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Refine approximate equilibria X (one per row) with Newton's method.

    Returns the refined states and a boolean mask of the rows whose
    refinement was accepted. A refinement is rejected when it leaves a ball of
    relative radius ``radius`` around the starting point, does not reduce the
    residual, or (for rows flagged in ``check_stability``) lands on an
    equilibrium whose Jacobian has an eigenvalue with real part above
    ``stability_tol``. Rejected rows keep their original state.
    """
    X0 = np.array(X, dtype=float)
    rows = np.asarray(rows)
    Y = X0.copy()
    live = np.arange(len(rows))
    for _ in range(max_iter):
        if live.size == 0:
            break
        r = rhs(Y[live], rows[live])
        J = jac(Y[live], rows[live])
        delta = _batched_solve(J, -r)
        finite = np.all(np.isfinite(delta), axis=1)
        delta[~finite] = 0.0
        Y[live] += delta
        scale = 1.0 + np.max(np.abs(Y[live]), axis=1)
        small = np.max(np.abs(delta), axis=1) <= step_tol * scale
        live = live[~(small | ~finite)]

    r0 = np.max(np.abs(rhs(X0, rows)), axis=1, initial=0.0)
    r1 = np.max(np.abs(rhs(Y, rows)), axis=1, initial=0.0)
    dist = np.max(np.abs(Y - X0), axis=1, initial=0.0)
    ok = (np.all(np.isfinite(Y), axis=1) & np.isfinite(r1) & (r1 <= r0)
          & (dist <= radius * (1.0 + np.max(np.abs(X0), axis=1, initial=0.0))))
    if check_stability is not None:
        idx = np.flatnonzero(ok & np.asarray(check_stability, dtype=bool))
        if idx.size:
            eig = np.linalg.eigvals(jac(Y[idx], rows[idx]))
            ok[idx] = np.max(eig.real, axis=1) <= stability_tol
    out = np.where(ok[:, None], Y, X0)
    return out, ok


def _batched_solve(J: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(J, b[..., None])[..., 0]
    except np.linalg.LinAlgError:
        out = np.empty_like(b)
        for i in range(b.shape[0]):
            out[i] = np.linalg.lstsq(J[i], b[i], rcond=None)[0]
        return out


class Trajectory(NamedTuple):
    times: np.ndarray       # (S,)
    snapshots: np.ndarray   # (S, *state.shape)


def integrate_span(rhs: Callable[[np.ndarray], np.ndarray], state0, dt: float, T: float,
                   snapshot_every: float) -> Trajectory:
    """Fixed-step RK4 over [0, T], storing the state at every multiple of ``snapshot_every``."""
    x = np.array(state0, dtype=float)
    n_steps = int(round(T / dt))
    stride = int(round(snapshot_every / dt))
    if stride < 1 or abs(stride * dt - snapshot_every) > 1e-9 * max(1.0, snapshot_every):
        raise InvalidInputError("snapshot interval must be a positive multiple of dt")
    times, snaps = [0.0], [x.copy()]
    for step in range(1, n_steps + 1):
        x = rk4_step(rhs, x, dt, (step - 1) * dt)
        if step % stride == 0 or step == n_steps:
            times.append(step * dt)
            snaps.append(x.copy())
    return Trajectory(np.array(times), np.array(snaps))


class EquilibriumBatch(NamedTuple):
    states: np.ndarray      # (B, n)
    converged: np.ndarray   # (B,) residual below tolerance at the returned state
    diverged: np.ndarray    # (B,) non-finite or above the blow-up threshold
    times: np.ndarray       # (B,) integration time used
    lo: np.ndarray          # (B,) smallest component along the trajectory
    hi: np.ndarray          # (B,) largest component along the trajectory
    residual: np.ndarray    # (B,) ||rhs||_inf at the returned state
    polished: np.ndarray    # (B,) Newton refinement accepted

    @property
    def max_abs(self) -> np.ndarray:
        return np.maximum(np.abs(self.lo), np.abs(self.hi))


def solve_equilibria(rhs: BatchRhs, jac: BatchJac | None, X0: np.ndarray,
                     config: IntegratorConfig) -> EquilibriumBatch:
    """Integrate a batch to equilibrium, refining with Newton's method when enabled.

    Without polishing this is :func:`integrate_batch`. With polishing the
    horizon is split into ``newton_interval`` chunks; after each chunk,
    unconverged rows with a small residual get a Newton attempt that must
    reach a linearly stable equilibrium, and rows that converged by time
    stepping are refined at the end.
    """
    X = np.array(X0, dtype=float, copy=True)
    if not (config.polish and jac is not None):
        res = integrate_batch(rhs, X, config)
        return EquilibriumBatch(*res, np.zeros(X.shape[0], dtype=bool))

    B = X.shape[0]
    converged = np.zeros(B, dtype=bool)
    diverged = np.zeros(B, dtype=bool)
    polished = np.zeros(B, dtype=bool)
    times = np.zeros(B)
    residual = np.full(B, np.inf)
    lo = np.min(X, axis=1)
    hi = np.max(X, axis=1)
    active = np.arange(B)
    chunk_steps = max(1, int(round(config.newton_interval / config.dt)))
    total = config.n_steps
    done_steps = 0
    while active.size:
        span = min(chunk_steps, total - done_steps)
        sub = replace(config, t_max=span * config.dt)

        def sub_rhs(Z, rows, idx=active):
            return rhs(Z, idx[rows])

        res = integrate_batch(sub_rhs, X[active], sub)
        X[active] = res.states
        times[active] = done_steps * config.dt + res.times
        lo[active] = np.fmin(lo[active], res.lo)
        hi[active] = np.fmax(hi[active], res.hi)
        residual[active] = res.residual
        converged[active] = res.converged
        diverged[active] = res.diverged
        done_steps += span
        still = active[~(res.converged | res.diverged)]
        if done_steps >= total:
            break
        try_rows = still[residual[still] < config.newton_handoff_tol]
        if try_rows.size:
            new, ok = newton_polish(rhs, jac, X[try_rows], try_rows,
                                    check_stability=np.ones(try_rows.size, dtype=bool))
            r = np.max(np.abs(rhs(new, try_rows)), axis=1, initial=0.0)
            good = ok & (r < config.equilibrium_tol)
            hit = try_rows[good]
            X[hit] = new[good]
            residual[hit] = r[good]
            converged[hit] = True
            polished[hit] = True
            still = np.setdiff1d(still, hit, assume_unique=True)
        active = still

    rows = np.flatnonzero(~diverged & ~polished)
    if rows.size:
        new, ok = newton_polish(rhs, jac, X[rows], rows, check_stability=~converged[rows])
        r = np.max(np.abs(rhs(new, rows)), axis=1, initial=0.0)
        X[rows] = new
        polished[rows] = ok
        residual[rows] = r
        converged[rows] = r < config.equilibrium_tol
    return EquilibriumBatch(X, converged, diverged, times, lo, hi, residual, polished)
