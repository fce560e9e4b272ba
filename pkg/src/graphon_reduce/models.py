"""Dynamics models dx/dt = f(x) + D * integral of W(y, y') G(x, x') dy'.

Each model supplies the self-dynamics f, the pairwise coupling G (without
the D and W factors), their derivatives, and its labelled initial
conditions. Models whose coupling factorizes as G(x, x') = g(x) h(x') set
``separable`` and expose g and h, which lets the network coupling be
computed with one matrix product.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import ClassVar, Mapping

import numpy as np

from .errors import InvalidInputError

try:  # optional acceleration for the non-separable mutualistic coupling
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None


@dataclass(frozen=True)
class KappaRange:
    """Uniform effective-coupling grid used by sweeps."""

    start: float = 0.0
    stop: float = 20.0
    points: int = 201

    def __post_init__(self) -> None:
        if self.points < 2 or not self.stop > self.start or self.start < 0:
            raise InvalidInputError(f"invalid kappa range {self}")

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)


class DynamicsModel(ABC):
    name: ClassVar[str]
    separable: ClassVar[bool] = True
    default_ics: ClassVar[dict[str, float]]
    kappa_range: ClassVar[KappaRange] = KappaRange()

    D: float
    initial_conditions: Mapping[str, float]

    def _init_common(self) -> None:
        if not self.D >= 0:
            raise InvalidInputError(f"coupling strength D must be non-negative, got {self.D}")
        ics = dict(self.default_ics if self.initial_conditions is None else self.initial_conditions)
        if not ics:
            raise InvalidInputError(f"{self.name}: at least one initial condition is required")
        object.__setattr__(self, "initial_conditions", {str(k): float(v) for k, v in ics.items()})

    @abstractmethod
    def f(self, x): ...

    @abstractmethod
    def df(self, x): ...

    # Separable models override g, dg, h, dh; others override G and dG.
    def g(self, x):
        raise NotImplementedError

    def dg(self, x):
        raise NotImplementedError

    def h(self, xp):
        raise NotImplementedError

    def dh(self, xp):
        raise NotImplementedError

    def G(self, x, xp):
        return self.g(x) * self.h(xp)

    def dG(self, x, xp):
        """Partial derivatives (dG/dx, dG/dx') as a pair of arrays."""
        return self.dg(x) * self.h(xp), self.g(x) * self.dh(xp)

    def with_coupling(self, D: float):
        return replace(self, D=float(D))

    def params(self) -> dict[str, float]:
        out = {k: v for k, v in self.__dict__.items() if k not in ("D", "initial_conditions")}
        return out

    def coupling_sum(self, X: np.ndarray, Kw: np.ndarray) -> np.ndarray:
        """C[b, k] = sum_l Kw[k, l] G(X[b, k], X[b, l]) for a batch of states X (B, n)."""
        X = np.asarray(X, dtype=float)
        if self.separable:
            return self.g(X) * (self.h(X) @ Kw.T)
        return self._coupling_sum_general(X, Kw)

    def _coupling_sum_general(self, X, Kw):
        out = np.empty_like(X)
        for b in range(X.shape[0]):
            out[b] = np.sum(Kw * self.G(X[b][:, None], X[b][None, :]), axis=1)
        return out

    def coupling_jacobian(self, X: np.ndarray, Kw: np.ndarray) -> np.ndarray:
        """Derivative of :meth:`coupling_sum` with respect to the state, shape (B, n, n)."""
        X = np.asarray(X, dtype=float)
        B, n = X.shape
        J = np.empty((B, n, n))
        idx = np.arange(n)
        for b in range(B):
            x = X[b]
            if self.separable:
                J[b] = self.g(x)[:, None] * Kw * self.dh(x)[None, :]
                J[b, idx, idx] += self.dg(x) * (Kw @ self.h(x))
            else:
                gx, gxp = self.dG(x[:, None], x[None, :])
                J[b] = Kw * gxp
                J[b, idx, idx] += np.sum(Kw * gx, axis=1)
        return J

    def reduced_rhs(self, effective_coupling, x):
        """Right-hand side of the one-dimensional reduction f(x) + kappa G(x, x)."""
        return self.f(x) + effective_coupling * self.G(x, x)

    def reduced_jacobian(self, effective_coupling, x):
        gx, gxp = self.dG(x, x)
        return self.df(x) + effective_coupling * (gx + gxp)


@dataclass(frozen=True)
class SIS(DynamicsModel):
    mu: float = 1.0
    D: float = 1.0
    initial_conditions: Mapping[str, float] | None = field(default=None, compare=False)
    name: ClassVar[str] = "sis"
    default_ics: ClassVar[dict[str, float]] = {"upper": 1.0}

    def __post_init__(self) -> None:
        self._init_common()

    def f(self, x):
        return -self.mu * np.asarray(x, dtype=float)

    def df(self, x):
        return np.full(np.shape(x), -self.mu)

    def g(self, x):
        return 1.0 - np.asarray(x, dtype=float)

    def dg(self, x):
        return np.full(np.shape(x), -1.0)

    def h(self, xp):
        return np.asarray(xp, dtype=float)

    def dh(self, xp):
        return np.ones(np.shape(xp))


@dataclass(frozen=True)
class DoubleWell(DynamicsModel):
    r1: float = 1.0
    r2: float = 2.0
    r3: float = 5.0
    D: float = 1.0
    initial_conditions: Mapping[str, float] | None = field(default=None, compare=False)
    name: ClassVar[str] = "double_well"
    default_ics: ClassVar[dict[str, float]] = {"lower": 0.0, "upper": 5.0}

    def __post_init__(self) -> None:
        if not self.r1 < self.r2 < self.r3:
            raise InvalidInputError(f"double well needs r1 < r2 < r3, got {self.r1}, {self.r2}, {self.r3}")
        self._init_common()

    def f(self, x):
        x = np.asarray(x, dtype=float)
        return -(x - self.r1) * (x - self.r2) * (x - self.r3)

    def df(self, x):
        x = np.asarray(x, dtype=float)
        a, b, c = self.r1, self.r2, self.r3
        return -((x - b) * (x - c) + (x - a) * (x - c) + (x - a) * (x - b))

    def g(self, x):
        return np.ones(np.shape(x))

    def dg(self, x):
        return np.zeros(np.shape(x))

    def h(self, xp):
        return np.asarray(xp, dtype=float)

    def dh(self, xp):
        return np.ones(np.shape(xp))


@dataclass(frozen=True)
class GeneRegulatory(DynamicsModel):
    """Degradation -B x^f_exp with Hill activation of exponent h.

    ``gene_coupling="hill"`` uses G = x'^h / (1 + x'^h); ``"as_printed"``
    uses G = x^h / (1 + x'^h).
    """

    B: float = 1.0
    f_exp: float = 1.0
    hill: float = 2.0
    D: float = 1.0
    gene_coupling: str = "hill"
    initial_conditions: Mapping[str, float] | None = field(default=None, compare=False)
    name: ClassVar[str] = "gene"
    default_ics: ClassVar[dict[str, float]] = {"lower": 0.0, "upper": 10.0}

    def __post_init__(self) -> None:
        if self.gene_coupling not in ("hill", "as_printed"):
            raise InvalidInputError(f"gene_coupling must be 'hill' or 'as_printed', got {self.gene_coupling!r}")
        self._init_common()

    def f(self, x):
        return -self.B * np.power(np.asarray(x, dtype=float), self.f_exp)

    def df(self, x):
        x = np.asarray(x, dtype=float)
        if self.f_exp == 1.0:
            return np.full(x.shape, -self.B)
        return -self.B * self.f_exp * np.power(x, self.f_exp - 1.0)

    def _hill(self, v):
        vh = np.power(np.asarray(v, dtype=float), self.hill)
        return vh / (1.0 + vh)

    def _dhill(self, v):
        v = np.asarray(v, dtype=float)
        vh = np.power(v, self.hill)
        return self.hill * np.power(v, self.hill - 1.0) / (1.0 + vh) ** 2

    def g(self, x):
        if self.gene_coupling == "hill":
            return np.ones(np.shape(x))
        return np.power(np.asarray(x, dtype=float), self.hill)

    def dg(self, x):
        if self.gene_coupling == "hill":
            return np.zeros(np.shape(x))
        return self.hill * np.power(np.asarray(x, dtype=float), self.hill - 1.0)

    def h(self, xp):
        if self.gene_coupling == "hill":
            return self._hill(xp)
        return 1.0 / (1.0 + np.power(np.asarray(xp, dtype=float), self.hill))

    def dh(self, xp):
        if self.gene_coupling == "hill":
            return self._dhill(xp)
        xp = np.asarray(xp, dtype=float)
        return -self.hill * np.power(xp, self.hill - 1.0) / (1.0 + np.power(xp, self.hill)) ** 2


@dataclass(frozen=True)
class GLV(DynamicsModel):
    """Generalized Lotka-Volterra: growth alpha, self-limitation c, product coupling."""

    alpha: float = 0.5
    c: float = 1.1
    D: float = 1.0
    initial_conditions: Mapping[str, float] | None = field(default=None, compare=False)
    name: ClassVar[str] = "glv"
    default_ics: ClassVar[dict[str, float]] = {"lower": 1e-6}
    kappa_range: ClassVar[KappaRange] = KappaRange(0.0, 1.0, 101)

    def __post_init__(self) -> None:
        self._init_common()

    def f(self, x):
        x = np.asarray(x, dtype=float)
        return self.alpha * x - self.c * x * x

    def df(self, x):
        return self.alpha - 2.0 * self.c * np.asarray(x, dtype=float)

    def g(self, x):
        return np.asarray(x, dtype=float)

    def dg(self, x):
        return np.ones(np.shape(x))

    def h(self, xp):
        return np.asarray(xp, dtype=float)

    def dh(self, xp):
        return np.ones(np.shape(xp))

    def is_valid_coupling(self, D: float, alpha_w: float) -> bool:
        """Finite equilibria need c > D * alpha_w, alpha_w the leading eigenvalue of W."""
        return self.c > D * alpha_w


if njit is not None:
    @njit(cache=True)
    def _mutualistic_sum(X, Kw, d, e, hh):  # pragma: no cover - compiled
        B, n = X.shape
        out = np.empty((B, n))
        for b in range(B):
            for k in range(n):
                xk = X[b, k]
                a = d + e * xk
                acc = 0.0
                for l in range(n):
                    xl = X[b, l]
                    acc += Kw[k, l] * xl / (a + hh * xl)
                out[b, k] = xk * acc
        return out
else:  # pragma: no cover
    _mutualistic_sum = None


@dataclass(frozen=True)
class Mutualistic(DynamicsModel):
    """Logistic growth with Allee effect and saturating mutualistic coupling."""

    B: float = 0.1
    C_tilde: float = 1.0
    D_tilde: float = 5.0
    E: float = 0.9
    H: float = 0.1
    K: float = 5.0
    D: float = 1.0
    initial_conditions: Mapping[str, float] | None = field(default=None, compare=False)
    name: ClassVar[str] = "mutualistic"
    separable: ClassVar[bool] = False
    default_ics: ClassVar[dict[str, float]] = {"lower": 0.0, "upper": 10.0}

    def __post_init__(self) -> None:
        self._init_common()

    def f(self, x):
        x = np.asarray(x, dtype=float)
        return self.B + x * (1.0 - x / self.K) * (x / self.C_tilde - 1.0)

    def df(self, x):
        x = np.asarray(x, dtype=float)
        K, C = self.K, self.C_tilde
        return (1.0 - x / K) * (x / C - 1.0) + x * (-(x / C - 1.0) / K + (1.0 - x / K) / C)

    def G(self, x, xp):
        x = np.asarray(x, dtype=float)
        xp = np.asarray(xp, dtype=float)
        return x * xp / (self.D_tilde + self.E * x + self.H * xp)

    def dG(self, x, xp):
        x = np.asarray(x, dtype=float)
        xp = np.asarray(xp, dtype=float)
        den = self.D_tilde + self.E * x + self.H * xp
        return (xp * (self.D_tilde + self.H * xp) / den ** 2,
                x * (self.D_tilde + self.E * x) / den ** 2)

    def _coupling_sum_general(self, X, Kw):
        if _mutualistic_sum is None:
            return super()._coupling_sum_general(X, Kw)
        return _mutualistic_sum(np.ascontiguousarray(X), np.ascontiguousarray(Kw),
                                float(self.D_tilde), float(self.E), float(self.H))


@dataclass(frozen=True)
class WilsonCowan(DynamicsModel):
    mu: float = 3.0
    delta: float = 1.0
    D: float = 1.0
    initial_conditions: Mapping[str, float] | None = field(default=None, compare=False)
    name: ClassVar[str] = "wilson_cowan"
    default_ics: ClassVar[dict[str, float]] = {"lower": 0.0, "upper": 8.0}

    def __post_init__(self) -> None:
        self._init_common()

    def f(self, x):
        return -np.asarray(x, dtype=float)

    def df(self, x):
        return np.full(np.shape(x), -1.0)

    def g(self, x):
        return np.ones(np.shape(x))

    def dg(self, x):
        return np.zeros(np.shape(x))

    def h(self, xp):
        with np.errstate(over="ignore"):
            return 1.0 / (1.0 + np.exp(self.mu - self.delta * np.asarray(xp, dtype=float)))

    def dh(self, xp):
        s = self.h(xp)
        return self.delta * s * (1.0 - s)


MODELS: dict[str, type[DynamicsModel]] = {
    cls.name: cls for cls in (SIS, DoubleWell, GeneRegulatory, GLV, Mutualistic, WilsonCowan)
}
MODEL_NAMES: tuple[str, ...] = tuple(MODELS)


def make_model(name: str, params: Mapping[str, object] | None = None,
               initial_conditions: Mapping[str, float] | None = None, D: float = 1.0) -> DynamicsModel:
    """Build a model from its config name, parameter overrides and optional initial conditions."""
    try:
        cls = MODELS[name]
    except KeyError:
        raise InvalidInputError(f"unknown model {name!r}; expected one of {MODEL_NAMES}") from None
    kwargs = {k: (v if isinstance(v, str) else float(v)) for k, v in (params or {}).items()}
    try:
        return cls(D=float(D), initial_conditions=initial_conditions, **kwargs)
    except TypeError as exc:
        raise InvalidInputError(f"bad parameters for model {name!r}: {exc}") from None


def self_dynamics(model: DynamicsModel, x):
    return model.f(x)


def coupling(model: DynamicsModel, x, xp):
    return model.G(x, xp)


def reduced_rhs(model: DynamicsModel, effective_coupling, x_eff):
    return model.reduced_rhs(effective_coupling, x_eff)
