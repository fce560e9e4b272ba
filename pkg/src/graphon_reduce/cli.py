"""Command-line entry point: ``graphon-reduce {sweep,converge,eig,solve}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .errors import GraphonReduceError
from .experiments import ExperimentConfig, convergence_study, load_config, run_sweep
from .full_system import integrate_full, kernel_matrix, solve_full
from .kernels import KERNEL_NAMES, kernel_grid, make_kernel
from .models import MODEL_NAMES, make_model
from .output import emit_convergence, emit_outputs, write_field_csv, write_json, write_trajectory_csv
from .reduction import summarize_kernel

log = logging.getLogger("graphon_reduce")


def _parse_params(items: Sequence[str] | None) -> dict[str, str]:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise argparse.ArgumentTypeError(f"expected key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _numeric(params: dict[str, str]) -> dict[str, object]:
    out: dict[str, object] = {}
    for k, v in params.items():
        try:
            out[k] = float(v)
        except ValueError:
            out[k] = v
    return out


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid-M", type=int, help="grid intervals (snapped up to respect kernel breakpoints)")
    p.add_argument("--dt", type=float, help="RK4 time step")
    p.add_argument("--t-max", type=float, help="integration horizon")
    p.add_argument("--eq-tol", type=float, help="equilibrium threshold on ||rhs||_inf")
    p.add_argument("--out", help="output directory")


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    integ = cfg.integrator
    if args.dt is not None:
        integ = replace(integ, dt=args.dt)
    if args.t_max is not None:
        integ = replace(integ, t_max=args.t_max)
    if args.eq_tol is not None:
        integ = replace(integ, equilibrium_tol=args.eq_tol)
    cfg = replace(cfg, integrator=integ)
    if args.grid_M is not None:
        cfg = replace(cfg, grid_M=args.grid_M)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    return cfg


def _metadata(cfg: ExperimentConfig) -> dict:
    i = cfg.integrator
    return {"grid_M": cfg.grid_M, "dt": i.dt, "t_max": i.t_max, "equilibrium_tol": i.equilibrium_tol,
            "polish": i.polish, "seed": cfg.seed, "reductions": list(cfg.reductions),
            "kappa": None if cfg.kappa is None else {"min": cfg.kappa.start, "max": cfg.kappa.stop,
                                                     "points": cfg.kappa.points}}


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    result = run_sweep(cfg, progress=lambda msg: log.info("sweep %s", msg))
    manifest = emit_outputs(result.records, result.summaries, cfg.output_dir, result.integrated,
                            _metadata(cfg), plots=not args.no_plots)
    print(json.dumps({"records": len(result.records), "panels": len(manifest["panels"]),
                      "csv": manifest["csv"], "json": manifest["json"]}, indent=2))
    return 0


def cmd_converge(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    table = convergence_study(cfg)
    files = emit_convergence(table, cfg.output_dir, _metadata(cfg))
    print(f"{'N':>5} {'field':>12} {'observable':>12} {'beta':>12} {'||W_N-W||':>12} {'envelope':>12}")
    for r in table.rows:
        print(f"{r.N:>5} {r.field_error:12.4e} {r.observable_error:12.4e} {r.beta_error:12.4e} "
              f"{r.kernel_distance:12.4e} {r.envelope:12.4e}")
    print(files["csv"])
    return 0


def cmd_eig(args: argparse.Namespace) -> int:
    kernel = make_kernel(args.kernel, _numeric(_parse_params(args.param)))
    grid = kernel_grid(kernel, args.grid_M or 200)
    summ = summarize_kernel(kernel, grid)
    csv_path = None
    if args.out:
        csv_path = str(write_field_csv(grid.nodes, summ.eigenfunction, Path(args.out) / f"{kernel.name}_eigenfunction.csv", "a"))
        write_json(summ.to_json(csv_path), Path(args.out) / f"{kernel.name}_reduction.json")
    print(json.dumps(summ.to_json(csv_path), indent=2))
    return 0


def cmd_solve(args: argparse.Namespace) -> int:
    from .numerics import IntegratorConfig

    kernel = make_kernel(args.kernel, _numeric(_parse_params(args.kernel_param)))
    model = make_model(args.model, _numeric(_parse_params(args.model_param)), D=args.D)
    integ = IntegratorConfig(**{k: v for k, v in (("dt", args.dt), ("t_max", args.t_max),
                                                  ("equilibrium_tol", args.eq_tol)) if v is not None})
    grid = kernel_grid(kernel, args.grid_M or 200)
    km = kernel_matrix(kernel, grid)
    ic = args.ic or next(iter(model.initial_conditions))
    sol = solve_full(model, km, grid, ic, integ)
    out = Path(args.out or ".")
    write_field_csv(grid.nodes, sol.field.values, out / f"{model.name}_{kernel.name}_{ic}_equilibrium.csv")
    if args.dump_trajectory:
        traj = integrate_full(model, km, model.initial_conditions[ic], integ.dt, integ.t_max, args.snapshot_interval)
        write_trajectory_csv(traj.times, traj.snapshots, out / f"{model.name}_{kernel.name}_{ic}_trajectory.csv")
    print(json.dumps({"converged": sol.converged, "diverged": sol.diverged, "residual": sol.residual,
                      "time": sol.field.time, "max_abs": sol.max_abs}, indent=2))
    return 0 if sol.converged else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphon-reduce", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="full vs reduced equilibria over the coupling grid")
    p.add_argument("--config", required=True)
    p.add_argument("--no-plots", action="store_true", help="skip SVG panels")
    _add_overrides(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("converge", help="discrete-to-continuum convergence ladder")
    p.add_argument("--config", required=True)
    _add_overrides(p)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("eig", help="beta_eff and leading eigenpair of a kernel")
    p.add_argument("--kernel", required=True, choices=KERNEL_NAMES)
    p.add_argument("--param", action="append", metavar="K=V")
    p.add_argument("--grid-M", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eig)

    p = sub.add_parser("solve", help="equilibrium field of one full system")
    p.add_argument("--model", required=True, choices=MODEL_NAMES)
    p.add_argument("--kernel", required=True, choices=KERNEL_NAMES)
    p.add_argument("--D", type=float, default=1.0)
    p.add_argument("--ic")
    p.add_argument("--model-param", action="append", metavar="K=V")
    p.add_argument("--kernel-param", action="append", metavar="K=V")
    p.add_argument("--dump-trajectory", action="store_true")
    p.add_argument("--snapshot-interval", type=float, default=1.0)
    _add_overrides(p)
    p.set_defaults(func=cmd_solve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (GraphonReduceError, argparse.ArgumentTypeError) as exc:
        print(f"graphon-reduce: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
