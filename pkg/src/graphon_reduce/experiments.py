"""Coupling sweeps comparing full and reduced equilibria, and discrete-to-continuum ladders."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, InvalidInputError
from .full_system import (KernelMatrix, finite_network_matrix, gbb_observable, integrate_full,
                          kernel_matrix, solve_full_batch, spectral_observable)
from .kernels import (KERNEL_NAMES, GraphonKernel, degree_field, kernel_grid, kernel_l2_distance,
                      make_kernel, step_graphon_matrix)
from .models import GLV, MODEL_NAMES, DynamicsModel, KappaRange, make_model
from .numerics import IntegratorConfig, UniformGrid, integrate_span
from .reduction import ReductionSummary, beta_discrete, beta_eff, solve_reduced_batch, summarize_kernel

log = logging.getLogger(__name__)

REDUCTIONS = ("gbb", "spectral")
DEGENERATE_DENOMINATOR = 1e-12


# --------------------------------------------------------------------------- config


@dataclass(frozen=True)
class ModelSpec:
    name: str
    params: dict[str, Any] = field(default_factory=dict)
    ic: tuple[str, ...] | None = None
    initial_conditions: dict[str, float] | None = None

    def build(self, D: float = 1.0) -> DynamicsModel:
        return make_model(self.name, self.params, self.initial_conditions, D)

    def labels(self) -> tuple[str, ...]:
        available = tuple(self.build().initial_conditions)
        if self.ic is None:
            return available
        missing = [lab for lab in self.ic if lab not in available]
        if missing:
            raise ConfigError(f"model {self.name!r} has no initial condition(s) {missing}")
        return tuple(self.ic)


@dataclass(frozen=True)
class KernelSpec:
    name: str
    params: dict[str, float] = field(default_factory=dict)

    def build(self) -> GraphonKernel:
        return make_kernel(self.name, self.params)


@dataclass(frozen=True)
class ConvergenceConfig:
    model: str = "sis"
    kernel: str = "ring"
    model_params: dict[str, Any] = field(default_factory=dict)
    kernel_params: dict[str, float] = field(default_factory=dict)
    N: tuple[int, ...] = (8, 16, 32, 64, 128)
    T: float = 5.0
    snapshot_interval: float = 0.5
    reference_M: int = 768
    D: float = 3.0
    base: float = 0.5
    amplitude: float = 0.3
    modes: int = 3
    subcell_points: int = 8
    fine_points: int = 2048

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.N, self.N[1:])) or not self.N or min(self.N) < 1:
            raise ConfigError(f"N ladder must be positive and increasing, got {self.N}")
        if self.modes < 1:
            raise ConfigError("modes must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    models: tuple[ModelSpec, ...]
    kernels: tuple[KernelSpec, ...]
    grid_M: int = 200
    integrator: IntegratorConfig = IntegratorConfig()
    kappa: KappaRange | None = None
    reductions: tuple[str, ...] = REDUCTIONS
    output_dir: str = "results"
    seed: int = 0
    convergence: ConvergenceConfig = ConvergenceConfig()

    def __post_init__(self) -> None:
        bad = [r for r in self.reductions if r not in REDUCTIONS]
        if bad or not self.reductions:
            raise ConfigError(f"reductions must be a non-empty subset of {REDUCTIONS}, got {self.reductions}")
        if self.grid_M < 2:
            raise ConfigError("grid_M must be >= 2")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        _reject_unknown(data, {"models", "kernels", "grid_M", "integrator", "kappa", "reductions",
                               "output_dir", "seed", "convergence"}, "config")
        try:
            kwargs: dict[str, Any] = {
                "models": _parse_models(data.get("models", "paper")),
                "kernels": _parse_kernels(data.get("kernels", "paper")),
            }
            if "grid_M" in data:
                kwargs["grid_M"] = int(data["grid_M"])
            if "integrator" in data:
                kwargs["integrator"] = _parse_section(data["integrator"], IntegratorConfig, "integrator",
                                                      {"eq_tol": "equilibrium_tol"})
            if "kappa" in data:
                kwargs["kappa"] = _parse_section(data["kappa"], KappaRange, "kappa",
                                                 {"min": "start", "max": "stop"})
            if "reductions" in data:
                kwargs["reductions"] = tuple(str(r) for r in data["reductions"])
            if "output_dir" in data:
                kwargs["output_dir"] = str(data["output_dir"])
            if "seed" in data:
                kwargs["seed"] = int(data["seed"])
            if "convergence" in data:
                conv = dict(data["convergence"])
                if "N" in conv:
                    conv["N"] = tuple(int(n) for n in conv["N"])
                kwargs["convergence"] = _parse_section(conv, ConvergenceConfig, "convergence", {})
            cfg = cls(**kwargs)
            for m in cfg.models:
                m.labels()
            for k in cfg.kernels:
                k.build()
        except (InvalidInputError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None
        return cfg

    def kappa_grid(self, model: DynamicsModel) -> np.ndarray:
        return (self.kappa or model.kappa_range).values()


def _reject_unknown(data: Mapping[str, Any], allowed: set[str], where: str) -> None:
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where} must be a table/object")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {unknown}")


def _parse_section(data: Mapping[str, Any], cls, where: str, aliases: dict[str, str]):
    names = {f.name for f in fields(cls)}
    _reject_unknown(data, names | set(aliases), where)
    kwargs = {aliases.get(k, k): v for k, v in data.items()}
    return cls(**kwargs)


def _parse_models(spec) -> tuple[ModelSpec, ...]:
    if spec == "paper":
        return tuple(ModelSpec(n) for n in MODEL_NAMES)
    out = []
    for item in spec:
        if isinstance(item, str):
            item = {"name": item}
        _reject_unknown(item, {"name", "params", "ic", "initial_conditions"}, "model entry")
        ic = item.get("ic")
        if isinstance(ic, str):
            ic = [ic]
        ics = item.get("initial_conditions")
        out.append(ModelSpec(str(item["name"]), dict(item.get("params", {})),
                             None if ic is None else tuple(str(x) for x in ic),
                             None if ics is None else {str(k): float(v) for k, v in ics.items()}))
        if out[-1].name not in MODEL_NAMES:
            raise ConfigError(f"unknown model {out[-1].name!r}")
    return tuple(out)


def _parse_kernels(spec) -> tuple[KernelSpec, ...]:
    if spec == "paper":
        return tuple(KernelSpec(n) for n in KERNEL_NAMES)
    out = []
    for item in spec:
        if isinstance(item, str):
            item = {"name": item}
        _reject_unknown(item, {"name", "params"}, "kernel entry")
        out.append(KernelSpec(str(item["name"]), {k: float(v) for k, v in item.get("params", {}).items()}))
        if out[-1].name not in KERNEL_NAMES:
            raise ConfigError(f"unknown kernel {out[-1].name!r}")
    return tuple(out)


def load_config(path: str | Path) -> ExperimentConfig:
    """Read an experiment config from a .toml or .json file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    else:
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            data = tomllib.loads(raw.decode())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return ExperimentConfig.from_mapping(data)


# --------------------------------------------------------------------------- errors


def relative_error(full_observable: float, reduced_equilibrium: float) -> float:
    """|full - reduced| / |full|, 0 when both vanish and inf when only the full value does."""
    full = abs(full_observable)
    if not (math.isfinite(full_observable) and math.isfinite(reduced_equilibrium)):
        return math.inf
    if full < DEGENERATE_DENOMINATOR:
        return 0.0 if abs(reduced_equilibrium) < DEGENERATE_DENOMINATOR else math.inf
    return abs(full_observable - reduced_equilibrium) / full


class IntegratedError(NamedTuple):
    raw: float
    normalized: float
    covered_length: float
    valid_rows: int
    excluded_rows: int


def integrated_error(kappas: Sequence[float], errors: Sequence[float],
                     valid: Sequence[bool] | None = None) -> IntegratedError:
    """Trapezoidal integral of the error curve over kappa, skipping invalid rows.

    Only intervals whose two end points are valid contribute; ``normalized``
    divides by their total length.
    """
    k = np.asarray(kappas, dtype=float)
    e = np.asarray(errors, dtype=float)
    if k.shape != e.shape or k.ndim != 1:
        raise InvalidInputError("kappas and errors must be 1-D arrays of equal length")
    ok = np.isfinite(e) & (np.ones_like(k, dtype=bool) if valid is None else np.asarray(valid, dtype=bool))
    if ok.sum() < 2:
        raise InvalidInputError("need at least two valid rows to integrate the error curve")
    if np.any(np.diff(k) <= 0):
        raise InvalidInputError("kappas must be strictly increasing")
    both = ok[:-1] & ok[1:]
    h = np.diff(k)
    ee = np.where(ok, e, 0.0)
    raw = float(np.sum(np.where(both, 0.5 * h * (ee[:-1] + ee[1:]), 0.0)))
    covered = float(np.sum(np.where(both, h, 0.0)))
    if covered <= 0:
        raise InvalidInputError("no two adjacent valid rows to integrate over")
    return IntegratedError(raw, raw / covered, covered, int(ok.sum()), int((~ok).sum()))


# --------------------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepRecord:
    model: str
    kernel: str
    reduction: str
    ic: str
    D: float
    kappa: float
    full_observable: float
    reduced_equilibrium: float
    rel_error: float
    full_converged: bool
    reduced_converged: bool
    flags: tuple[str, ...] = ()

    @property
    def valid(self) -> bool:
        """Usable in the integrated error."""
        return not ({"full-diverged", "reduced-diverged", "invalid-coupling", "denominator-degenerate"}
                    & set(self.flags))


CSV_COLUMNS = ("model", "kernel", "reduction", "ic", "D", "kappa", "full_observable",
               "reduced_equilibrium", "rel_error", "full_converged", "reduced_converged", "flags")


@dataclass(frozen=True)
class BatchDiagnostics:
    """Trajectory-level data of one full-system batch (one row per coupling strength)."""

    model: str
    kernel: str
    reduction: str
    ic: str
    x0: float
    D: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    times: np.ndarray
    diverged: np.ndarray
    converged: np.ndarray


@dataclass
class SweepResult:
    records: list[SweepRecord]
    summaries: dict[str, ReductionSummary]
    grids: dict[str, UniformGrid]
    integrated: list[dict[str, Any]]
    diagnostics: list[BatchDiagnostics] = field(default_factory=list)
    config: ExperimentConfig | None = None


class _FullCache:
    """Reuses a full batch solve when another reduction asks for the same coupling strengths."""

    def __init__(self) -> None:
        self._store: list[tuple[tuple, np.ndarray, Any]] = []

    def get(self, key: tuple, D: np.ndarray):
        for k, d, res in self._store:
            if k == key and d.shape == D.shape and np.allclose(d, D, rtol=1e-12, atol=0.0):
                return d, res
        return None

    def put(self, key: tuple, D: np.ndarray, res) -> None:
        self._store.append((key, D, res))


def run_sweep(config: ExperimentConfig, progress: Callable[[str], None] | None = None) -> SweepResult:
    """Full-versus-reduced equilibria over the kappa grid for every configured triple."""
    records: list[SweepRecord] = []
    summaries: dict[str, ReductionSummary] = {}
    grids: dict[str, UniformGrid] = {}
    integrated: list[dict[str, Any]] = []
    diagnostics: list[BatchDiagnostics] = []
    icfg = config.integrator
    for kspec in config.kernels:
        kernel = kspec.build()
        grid = kernel_grid(kernel, config.grid_M)
        km = kernel_matrix(kernel, grid)
        summary = summarize_kernel(kernel, grid, km)
        summaries[kernel.name] = summary
        grids[kernel.name] = grid
        s = degree_field(kernel, grid)
        cache = _FullCache()
        for mspec in config.models:
            base = mspec.build()
            kappas = config.kappa_grid(base)
            for reduction in config.reductions:
                coef = summary.beta_eff if reduction == "gbb" else summary.alpha
                D = kappas / coef
                for label in mspec.labels():
                    if progress:
                        progress(f"{base.name} x {kernel.name} x {reduction} x {label}")
                    x0 = base.initial_conditions[label]
                    key = (base.name, tuple(sorted(base.params().items())), label, x0)
                    hit = cache.get(key, D)
                    if hit is None:
                        full = solve_full_batch(base, km, D, x0, icfg)
                        cache.put(key, D, full)
                        D_used = D
                    else:
                        D_used, full = hit
                    field0 = np.full(grid.size, x0)
                    if reduction == "gbb":
                        obs = gbb_observable(full.states, s, grid.weights)
                        red_x0 = gbb_observable(field0, s, grid.weights)
                    else:
                        obs = spectral_observable(full.states, summary.eigenfunction, grid.weights)
                        red_x0 = spectral_observable(field0, summary.eigenfunction, grid.weights)
                    red = solve_reduced_batch(base, kappas, red_x0, icfg)
                    rows = _make_records(base, kernel.name, reduction, label, D_used, kappas, obs,
                                         full, red, summary.alpha)
                    records.extend(rows)
                    integrated.append(_integrate_rows(rows))
                    diagnostics.append(BatchDiagnostics(base.name, kernel.name, reduction, label, x0, D_used,
                                                        full.lo, full.hi, full.times, full.diverged,
                                                        full.converged))
    return SweepResult(records, summaries, grids, integrated, diagnostics, config)


def _make_records(model: DynamicsModel, kernel: str, reduction: str, label: str, D: np.ndarray,
                  kappas: np.ndarray, obs: np.ndarray, full, red, alpha: float) -> list[SweepRecord]:
    out = []
    for i, kap in enumerate(kappas):
        flags = []
        f_div = bool(full.diverged[i]) or not np.isfinite(obs[i])
        r_div = bool(red.diverged[i]) or not np.isfinite(red.states[i, 0])
        if isinstance(model, GLV) and not model.is_valid_coupling(D[i], alpha):
            flags.append("invalid-coupling")
        if f_div:
            flags.append("full-diverged")
        elif not full.converged[i]:
            flags.append("full-unconverged")
        if r_div:
            flags.append("reduced-diverged")
        elif not red.converged[i]:
            flags.append("reduced-unconverged")
        fo = float(obs[i]) if not f_div else math.nan
        ro = float(red.states[i, 0]) if not r_div else math.nan
        re = relative_error(fo, ro)
        if not (f_div or r_div) and math.isinf(re):
            flags.append("denominator-degenerate")
        out.append(SweepRecord(model.name, kernel, reduction, label, float(D[i]), float(kap), fo, ro, re,
                               bool(full.converged[i]), bool(red.converged[i]), tuple(flags)))
    return out


def _integrate_rows(rows: Sequence[SweepRecord]) -> dict[str, Any]:
    r0 = rows[0]
    entry: dict[str, Any] = {"model": r0.model, "kernel": r0.kernel, "reduction": r0.reduction, "ic": r0.ic,
                             "kappa_points": len(rows),
                             "kappa_min": rows[0].kappa, "kappa_max": rows[-1].kappa,
                             "denominator_degenerate_rows": sum("denominator-degenerate" in r.flags for r in rows),
                             "diverged_rows": sum(("full-diverged" in r.flags) or ("reduced-diverged" in r.flags)
                                                  for r in rows),
                             "invalid_coupling_rows": sum("invalid-coupling" in r.flags for r in rows)}
    try:
        ie = integrated_error([r.kappa for r in rows], [r.rel_error for r in rows], [r.valid for r in rows])
        entry.update(integrated_error_raw=ie.raw, integrated_error_normalized=ie.normalized,
                     covered_length=ie.covered_length, excluded_rows=ie.excluded_rows)
    except InvalidInputError as exc:
        entry.update(integrated_error_raw=None, integrated_error_normalized=None, covered_length=0.0,
                     excluded_rows=len(rows), error=str(exc))
    return entry


# --------------------------------------------------------------------------- convergence


@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    field_error: float          # max over snapshots of the L2 field error
    observable_error: float     # |L_N(x_N(T)) - L(x(T))|
    beta_error: float           # |beta_N - beta_eff|
    kernel_distance: float      # ||W_N - W||_L2
    reduced_error: float        # max over snapshots of the reduced-trajectory gap
    initial_error: float        # ||g_N - g||_L2
    envelope: float             # (||g_N-g|| + C1 ||W_N-W|| T) exp(3 L T)


@dataclass
class ConvergenceTable:
    rows: list[ConvergenceRow]
    lipschitz: float
    sup_coupling: float
    beta_eff: float
    reference_M: int


class SmoothInitialCondition:
    """g(y) = base + amplitude * sum_j c_j cos(2 pi j y + phi_j) with seeded c, phi and sum |c_j| = 1."""

    def __init__(self, base: float, amplitude: float, modes: int, seed: int):
        rng = np.random.default_rng(seed)
        c = rng.uniform(0.2, 1.0, modes) * rng.choice([-1.0, 1.0], modes)
        self.coef = c / np.sum(np.abs(c))
        self.phase = rng.uniform(0.0, 2.0 * np.pi, modes)
        self.freq = 2.0 * np.pi * np.arange(1, modes + 1)
        self.base = base
        self.amplitude = amplitude

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        terms = np.cos(self.freq * y[..., None] + self.phase) @ self.coef
        return self.base + self.amplitude * terms

    def cell_averages(self, N: int) -> np.ndarray:
        """Exact averages of g over the cells [i/N, (i+1)/N]."""
        edges = np.arange(N + 1) / N
        prim = (np.sin(self.freq * edges[:, None] + self.phase) / self.freq) @ self.coef
        return self.base + self.amplitude * N * np.diff(prim)


def _lookup(reference: UniformGrid, points: np.ndarray) -> np.ndarray:
    """Index of the nearest reference evaluation point for each query point."""
    ref = reference.eval_points
    j = np.clip(np.searchsorted(ref, points), 1, ref.size - 1)
    left_closer = np.abs(points - ref[j - 1]) <= np.abs(ref[j] - points)
    return np.where(left_closer, j - 1, j)


def lipschitz_estimate(model: DynamicsModel, lo: float, hi: float, samples: int = 64) -> float:
    """max(L_f, L_G) by sampled finite differences on [lo, hi], with D folded into G."""
    if not hi > lo:
        hi = lo + 1e-6
    xs = np.linspace(lo, hi, samples)
    h = (hi - lo) * 1e-6
    lf = np.max(np.abs(model.f(xs + h) - model.f(xs - h)) / (2 * h))
    X, Xp = np.meshgrid(xs, xs, indexing="ij")
    gx = (model.G(X + h, Xp) - model.G(X - h, Xp)) / (2 * h)
    gxp = (model.G(X, Xp + h) - model.G(X, Xp - h)) / (2 * h)
    lg = model.D * np.max(np.hypot(gx, gxp))
    return float(max(lf, lg))


def convergence_study(config: ExperimentConfig) -> ConvergenceTable:
    """Compare N-node networks built from W_N with a fine-grid graphon solution."""
    cc = config.convergence
    kernel = make_kernel(cc.kernel, cc.kernel_params)
    model = make_model(cc.model, cc.model_params, D=cc.D)
    dt = config.integrator.dt
    ref_grid = kernel_grid(kernel, cc.reference_M)
    ref_km = kernel_matrix(kernel, ref_grid)
    g = SmoothInitialCondition(cc.base, cc.amplitude, cc.modes, config.seed)
    g_ref = g(ref_grid.eval_points)
    ref_traj = integrate_full(model, ref_km, g_ref, dt, cc.T, cc.snapshot_interval)
    s_ref = degree_field(kernel, ref_grid)
    beta = beta_eff(kernel, ref_grid)
    obs_ref = gbb_observable(ref_traj.snapshots[-1], s_ref, ref_grid.weights)
    red_ref = integrate_span(lambda x: model.reduced_rhs(model.D * beta, x),
                             np.array([gbb_observable(g_ref, s_ref, ref_grid.weights)]),
                             dt, cc.T, cc.snapshot_interval)
    lo = float(np.min(ref_traj.snapshots))
    hi = float(np.max(ref_traj.snapshots))
    L = lipschitz_estimate(model, lo, hi)
    xs = ref_traj.snapshots
    C1 = float(max(np.max(np.abs(model.D * model.G(x[:, None], x[None, :]))) for x in xs))

    rows = []
    for N in cc.N:
        if ref_grid.M % (2 * N):
            raise ConfigError(f"reference_M={ref_grid.M} must be a multiple of 2N={2 * N}")
        step = step_graphon_matrix(kernel, N, cc.subcell_points)
        km = finite_network_matrix(step)
        gN = g.cell_averages(N)
        traj = integrate_full(model, km, gN, dt, cc.T, cc.snapshot_interval)
        splits = sorted({i / N for i in range(1, N)} | set(kernel.split_points))
        err_grid = UniformGrid(ref_grid.M, tuple(splits))
        e = err_grid.eval_points
        ref_idx = _lookup(ref_grid, e)
        cell = np.clip(np.floor(e * N).astype(int), 0, N - 1)
        field_err = max(
            float(np.sqrt(err_grid.weights @ (xn[cell] - xr[ref_idx]) ** 2))
            for xn, xr in zip(traj.snapshots, ref_traj.snapshots)
        )
        g_err = float(np.sqrt(err_grid.weights @ (gN[cell] - g(e)) ** 2))
        sN = step.degrees()
        obs_N = gbb_observable(traj.snapshots[-1], sN, km.weights)
        beta_N = beta_discrete(step)
        red_N = integrate_span(lambda x: model.reduced_rhs(model.D * beta_N, x),
                               np.array([gbb_observable(gN, sN, km.weights)]), dt, cc.T, cc.snapshot_interval)
        dist = kernel_l2_distance(kernel, step, max(cc.fine_points, 4 * N))
        envelope = (g_err + C1 * dist * cc.T) * math.exp(3.0 * L * cc.T)
        rows.append(ConvergenceRow(N, field_err, abs(obs_N - obs_ref), abs(beta_N - beta), dist,
                                   float(np.max(np.abs(red_N.snapshots - red_ref.snapshots))), g_err, envelope))
    return ConvergenceTable(rows, L, C1, beta, ref_grid.M)
