"""The six graphon families, their weighted degrees and step-graphon discretizations."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass
from typing import ClassVar

import numpy as np

from .errors import InvalidInputError
from .numerics import UniformGrid, simpson_weights, snap_grid_size

# Offsets of the symmetric averaging stencil used when a node sits exactly on a
# discontinuity line of the kernel.
_STENCIL_A = 1e-13
_STENCIL_B = 2e-13
_STENCIL = np.array([
    (_STENCIL_A, _STENCIL_B), (_STENCIL_A, -_STENCIL_B), (-_STENCIL_A, _STENCIL_B), (-_STENCIL_A, -_STENCIL_B),
    (_STENCIL_B, _STENCIL_A), (_STENCIL_B, -_STENCIL_A), (-_STENCIL_B, _STENCIL_A), (-_STENCIL_B, -_STENCIL_A),
])

# Inward shift of quadrature evaluation points that sit on a breakpoint.
_EDGE_NUDGE = 1e-12
_CELL_NUDGE = 1e-10


def _check_prob(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise InvalidInputError(f"{name} must lie in [0, 1], got {value}")


def _check_open_unit(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise InvalidInputError(f"{name} must lie in (0, 1), got {value}")


class GraphonKernel(ABC):
    """A symmetric kernel W on the unit square with values in [0, 1].

    ``evaluate`` is vectorized and broadcasts its arguments; it performs no
    range checks. Use :func:`eval_kernel` for a checked pointwise call.
    """

    name: ClassVar[str]

    @abstractmethod
    def evaluate(self, y, yp) -> np.ndarray: ...

    @abstractmethod
    def degree(self, y) -> np.ndarray:
        """Closed-form weighted degree s(y) = integral of W(y, y') over y'."""

    def row_breakpoints(self, y: float) -> np.ndarray:
        """Points in (0, 1) where W(y, .) is discontinuous or has a kink."""
        return np.empty(0)

    @property
    def aligned_points(self) -> tuple[float, ...]:
        """Offsets that a quadrature grid should place on nodes."""
        return ()

    @property
    def split_points(self) -> tuple[float, ...]:
        """Coordinates across which W jumps in both arguments (block edges)."""
        return ()

    def params(self) -> dict[str, float]:
        return asdict(self)

    def node_values(self, y, yp) -> np.ndarray:
        """W averaged over a tiny symmetric stencil around each (y, y') pair.

        Off discontinuities this equals W; on a jump line it returns the mean
        of the one-sided limits, which keeps Simpson's rule exact for
        piecewise-constant kernels whose jumps fall on even nodes.
        """
        y = np.asarray(y, dtype=float)
        yp = np.asarray(yp, dtype=float)
        total = np.zeros(np.broadcast_shapes(y.shape, yp.shape))
        for da, db in _STENCIL:
            total += self.evaluate(np.clip(y + da, 0.0, 1.0), np.clip(yp + db, 0.0, 1.0))
        return total / len(_STENCIL)


@dataclass(frozen=True)
class ErdosRenyi(GraphonKernel):
    p: float = 0.1
    name: ClassVar[str] = "er"

    def __post_init__(self) -> None:
        _check_prob("p", self.p)

    def evaluate(self, y, yp):
        return np.full(np.broadcast_shapes(np.shape(y), np.shape(yp)), float(self.p))

    def degree(self, y):
        return np.full(np.shape(y), float(self.p))


def _ring_indicator(y, yp, q: float) -> np.ndarray:
    d = np.abs(np.asarray(y, dtype=float) - np.asarray(yp, dtype=float))
    return np.minimum(d, 1.0 - d) <= q


def _ring_breakpoints(y: float, q: float) -> np.ndarray:
    if q >= 0.5:
        return np.empty(0)
    cands = np.array([y - q, y + q, y - q + 1.0, y + q - 1.0])
    inside = cands[(cands > 0.0) & (cands < 1.0)]
    return np.unique(inside)


@dataclass(frozen=True)
class Ring(GraphonKernel):
    q: float = 1.0 / 3.0
    name: ClassVar[str] = "ring"

    def __post_init__(self) -> None:
        _check_open_unit("q", self.q)

    def evaluate(self, y, yp):
        return _ring_indicator(y, yp, self.q).astype(float)

    def degree(self, y):
        return np.full(np.shape(y), min(2.0 * self.q, 1.0))

    def row_breakpoints(self, y):
        return _ring_breakpoints(y, self.q)

    @property
    def aligned_points(self):
        return (self.q,)


@dataclass(frozen=True)
class SmallWorld(GraphonKernel):
    """Ring lattice with every edge flipped with probability p."""

    p: float = 0.1
    q: float = 1.0 / 3.0
    name: ClassVar[str] = "small_world"

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 0.5:
            raise InvalidInputError(f"p must lie in [0, 0.5], got {self.p}")
        _check_open_unit("q", self.q)

    def evaluate(self, y, yp):
        return np.where(_ring_indicator(y, yp, self.q), 1.0 - self.p, float(self.p))

    def degree(self, y):
        s = min(2.0 * self.q, 1.0)
        return np.full(np.shape(y), (1.0 - self.p) * s + self.p * (1.0 - s))

    def row_breakpoints(self, y):
        return _ring_breakpoints(y, self.q)

    @property
    def aligned_points(self):
        return (self.q,)


@dataclass(frozen=True)
class PowerLaw(GraphonKernel):
    """W = min(C (y y')^nu, 1). The clip is active for y y' <= C^(-1/nu)."""

    C: float = 0.5
    nu: float = -0.2
    name: ClassVar[str] = "power_law"

    def __post_init__(self) -> None:
        _check_open_unit("C", self.C)
        if not -0.5 < self.nu < 0.0:
            raise InvalidInputError(f"nu must lie in (-0.5, 0), got {self.nu}")

    @property
    def clip_product(self) -> float:
        return self.C ** (-1.0 / self.nu)

    def evaluate(self, y, yp):
        prod = np.asarray(y, dtype=float) * np.asarray(yp, dtype=float)
        with np.errstate(divide="ignore"):
            return np.minimum(self.C * prod ** self.nu, 1.0)

    def degree(self, y):
        y = np.asarray(y, dtype=float)
        b = self.clip_product
        safe = np.where(y > b, y, 1.0)
        tail = (b * self.nu / safe + self.C * safe ** self.nu) / (1.0 + self.nu)
        return np.where(y > b, tail, 1.0)

    def row_breakpoints(self, y):
        if y <= 0.0:
            return np.empty(0)
        k = self.clip_product / y
        return np.array([k]) if 0.0 < k < 1.0 else np.empty(0)


@dataclass(frozen=True)
class Modular(GraphonKernel):
    """Two communities [0, gamma) and [gamma, 1]."""

    gamma: float = 1.0 / 3.0
    p_in: float = 0.2
    p_out: float = 0.01
    name: ClassVar[str] = "modular"

    def __post_init__(self) -> None:
        _check_open_unit("gamma", self.gamma)
        _check_prob("p_in", self.p_in)
        _check_prob("p_out", self.p_out)

    def evaluate(self, y, yp):
        same = (np.asarray(y) < self.gamma) == (np.asarray(yp) < self.gamma)
        return np.where(same, float(self.p_in), float(self.p_out))

    def degree(self, y):
        g = self.gamma
        low = g * self.p_in + (1.0 - g) * self.p_out
        high = g * self.p_out + (1.0 - g) * self.p_in
        return np.where(np.asarray(y) < g, low, high)

    def row_breakpoints(self, y):
        return np.array([self.gamma])

    @property
    def aligned_points(self):
        return (self.gamma,)

    @property
    def split_points(self):
        return (self.gamma,)


@dataclass(frozen=True)
class Bipartite(GraphonKernel):
    """Edges only between [0, gamma) and [gamma, 1]."""

    gamma: float = 1.0 / 3.0
    p: float = 0.1
    name: ClassVar[str] = "bipartite"

    def __post_init__(self) -> None:
        _check_open_unit("gamma", self.gamma)
        _check_prob("p", self.p)

    def evaluate(self, y, yp):
        across = (np.asarray(y) < self.gamma) != (np.asarray(yp) < self.gamma)
        return np.where(across, float(self.p), 0.0)

    def degree(self, y):
        g = self.gamma
        return np.where(np.asarray(y) < g, (1.0 - g) * self.p, g * self.p)

    def row_breakpoints(self, y):
        return np.array([self.gamma])

    @property
    def aligned_points(self):
        return (self.gamma,)

    @property
    def split_points(self):
        return (self.gamma,)


KERNELS: dict[str, type[GraphonKernel]] = {
    cls.name: cls for cls in (ErdosRenyi, Ring, SmallWorld, PowerLaw, Modular, Bipartite)
}
KERNEL_NAMES: tuple[str, ...] = tuple(KERNELS)


def make_kernel(name: str, params: dict[str, float] | None = None) -> GraphonKernel:
    """Build a kernel from its config name and an optional parameter map."""
    try:
        cls = KERNELS[name]
    except KeyError:
        raise InvalidInputError(f"unknown kernel {name!r}; expected one of {KERNEL_NAMES}") from None
    try:
        return cls(**{k: float(v) for k, v in (params or {}).items()})
    except TypeError as exc:
        raise InvalidInputError(f"bad parameters for kernel {name!r}: {exc}") from None


def _check_coordinate(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any((arr < 0.0) | (arr > 1.0)):
        raise InvalidInputError(f"coordinates must lie in [0, 1], got {v}")
    return arr


def eval_kernel(kernel: GraphonKernel, y, yp):
    """Checked evaluation of W(y, y'); returns a float for scalar input."""
    out = kernel.evaluate(_check_coordinate(y), _check_coordinate(yp))
    return float(out) if np.ndim(out) == 0 else out


def kernel_grid(kernel: GraphonKernel, M: int) -> UniformGrid:
    """Simpson grid with at least M intervals whose nodes respect the kernel's breakpoints."""
    M = snap_grid_size(M, kernel.aligned_points, kernel.split_points)
    return UniformGrid(M, kernel.split_points)


def weighted_degree(kernel: GraphonKernel, y: float, quadrature_points: int = 200) -> float:
    """s(y) by composite Simpson, with ``quadrature_points`` intervals on each smooth piece of the row."""
    y = float(_check_coordinate(y))
    if quadrature_points < 2 or quadrature_points % 2:
        raise InvalidInputError(f"quadrature interval count must be even and >= 2, got {quadrature_points}")
    edges = np.concatenate(([0.0], kernel.row_breakpoints(y), [1.0]))
    w = simpson_weights(quadrature_points)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        # Nudge every endpoint, including 0 and 1: a periodic kernel can jump at the wrap-around.
        pts = np.linspace(lo, hi, quadrature_points + 1)
        pts[0] += _EDGE_NUDGE
        pts[-1] -= _EDGE_NUDGE
        total += (hi - lo) * float(w @ kernel.evaluate(y, pts))
    return total


def degree_field(kernel: GraphonKernel, grid: UniformGrid) -> np.ndarray:
    """Closed-form s(y) at the grid's evaluation points."""
    return np.asarray(kernel.degree(grid.eval_points), dtype=float)


@dataclass(frozen=True)
class StepGraphonMatrix:
    """Cell averages (W_N)_ij = N^2 * integral of W over cell i x cell j."""

    N: int
    entries: np.ndarray

    def __post_init__(self) -> None:
        e = np.asarray(self.entries, dtype=float)
        if e.shape != (self.N, self.N):
            raise InvalidInputError(f"entries must be {self.N}x{self.N}, got {e.shape}")
        object.__setattr__(self, "entries", e)

    def degrees(self) -> np.ndarray:
        """Discrete weighted degrees s_i = sum_j (W_N)_ij / N."""
        return self.entries.sum(axis=1) / self.N


def _cell_nodes(N: int, m: int) -> np.ndarray:
    local = np.arange(m + 1) / m
    pts = (np.arange(N)[:, None] + local[None, :]) / N
    pts[:, 0] += _CELL_NUDGE
    pts[:, -1] -= _CELL_NUDGE
    return pts


def step_graphon_matrix(kernel: GraphonKernel, N: int, subcell_points: int = 8) -> StepGraphonMatrix:
    """Cell-averaged N x N matrix of W by a per-cell Simpson product rule."""
    if N < 1:
        raise InvalidInputError(f"N must be positive, got {N}")
    if subcell_points < 2 or subcell_points % 2:
        raise InvalidInputError(f"subcell_points must be even and >= 2, got {subcell_points}")
    m = subcell_points
    pts = _cell_nodes(N, m).ravel()
    w = simpson_weights(m)
    vals = kernel.node_values(pts[:, None], pts[None, :]).reshape(N, m + 1, N, m + 1)
    entries = np.einsum("iajb,a,b->ij", vals, w, w)
    entries = 0.5 * (entries + entries.T)
    return StepGraphonMatrix(N, np.clip(entries, 0.0, 1.0))


def kernel_l2_distance(kernel: GraphonKernel, matrix: StepGraphonMatrix, fine_points: int) -> float:
    """L2 distance on the unit square between the step graphon of ``matrix`` and W.

    The fine Simpson grid is split at every cell edge so the step function is
    sampled by one-sided values; ``fine_points`` is rounded up to a multiple
    of 2N when needed.
    """
    N = matrix.N
    if fine_points < 4 * N:
        raise InvalidInputError(f"fine grid ({fine_points}) must be at least 4x denser than N={N}")
    F = -(-fine_points // (2 * N)) * (2 * N)
    splits = [i / N for i in range(1, N)]
    splits = sorted(set(splits) | set(kernel.split_points))
    grid = UniformGrid(F, tuple(s for s in splits if _on_even_node(s, F)))
    e = grid.eval_points
    cell = np.clip(np.floor(e * N).astype(int), 0, N - 1)
    step = matrix.entries[np.ix_(cell, cell)]
    diff = step - kernel.evaluate(e[:, None], e[None, :])
    sq = grid.weights @ (diff * diff) @ grid.weights
    return float(np.sqrt(max(sq, 0.0)))


def _on_even_node(s: float, F: int) -> bool:
    k = s * F
    return abs(k - round(k)) < 1e-9 and round(k) % 2 == 0
