"""CSV, JSON and SVG writers for sweep and convergence results."""

from __future__ import annotations

import csv
import json
import math
from collections import OrderedDict
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import GraphonReduceError
from .experiments import CSV_COLUMNS, ConvergenceTable, SweepRecord
from .reduction import ReductionSummary


class OutputError(GraphonReduceError, OSError):
    """Writing a result file failed."""


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ";".join(str(x) for x in v)
    return str(v)


def _json_safe(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _open(path: Path, mode: str = "w"):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, mode, newline="", encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def write_sweep_csv(records: Iterable[SweepRecord], path: Path) -> Path:
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return path


def write_field_csv(nodes: Sequence[float], values: Sequence[float], path: Path, value_name: str = "x") -> Path:
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("y", value_name))
        for y, x in zip(nodes, values):
            w.writerow((_fmt(float(y)), _fmt(float(x))))
    return path


def write_trajectory_csv(times: Sequence[float], snapshots: np.ndarray, path: Path) -> Path:
    snapshots = np.asarray(snapshots)
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"node_{i}" for i in range(snapshots.shape[1])])
        for t, row in zip(times, snapshots):
            w.writerow([_fmt(float(t))] + [_fmt(float(v)) for v in row])
    return path


def write_json(data: Mapping[str, Any], path: Path) -> Path:
    with _open(path) as fh:
        json.dump(_json_safe(data), fh, indent=2, sort_keys=False)
        fh.write("\n")
    return path


def _panel_groups(records: Sequence[SweepRecord]) -> "OrderedDict[tuple[str, str, str], list[SweepRecord]]":
    groups: OrderedDict[tuple[str, str, str], list[SweepRecord]] = OrderedDict()
    for r in records:
        groups.setdefault((r.model, r.kernel, r.reduction), []).append(r)
    return groups


def plot_panel(rows: Sequence[SweepRecord], path: Path) -> Path:
    """One bifurcation panel: full observable thick and translucent, reduced equilibria thin and black."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "graphon-reduce"
    fig, ax = plt.subplots(figsize=(4.0, 3.0))
    by_ic: OrderedDict[str, list[SweepRecord]] = OrderedDict()
    for r in rows:
        by_ic.setdefault(r.ic, []).append(r)
    for ic, rs in by_ic.items():
        k = np.array([r.kappa for r in rs])
        ax.plot(k, [r.full_observable for r in rs], color="red", alpha=0.35, linewidth=5.0,
                label=f"full ({ic})")
        ax.plot(k, [r.reduced_equilibrium for r in rs], color="black", linewidth=1.0,
                label=f"reduced ({ic})")
    r0 = rows[0]
    sym = r"$D\beta_{\rm eff}$" if r0.reduction == "gbb" else r"$D\alpha$"
    ax.set_xlabel(sym)
    ax.set_ylabel("observable" if r0.reduction == "gbb" else "R")
    ax.set_title(f"{r0.model} / {r0.kernel} / {r0.reduction}", fontsize=9)
    ax.legend(fontsize=6, frameon=False)
    fig.tight_layout()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)
    return path


def emit_outputs(records: Sequence[SweepRecord], summaries: Mapping[str, ReductionSummary],
                 out_dir: str | Path, integrated: Sequence[Mapping[str, Any]] = (),
                 metadata: Mapping[str, Any] | None = None, plots: bool = True) -> dict[str, Any]:
    """Write sweep.csv, summary.json, one SVG per (model, kernel, reduction) and eigenfunction CSVs.

    Returns a manifest of the written paths.
    """
    out = Path(out_dir)
    manifest: dict[str, Any] = {"csv": str(write_sweep_csv(records, out / "sweep.csv")),
                                "panels": [], "eigenfunctions": []}
    kernel_json = {}
    for name, summ in summaries.items():
        p = write_field_csv(summ.nodes, summ.eigenfunction, out / "eigenfunctions" / f"{name}.csv", "a")
        manifest["eigenfunctions"].append(str(p))
        kernel_json[name] = summ.to_json(str(p.relative_to(out)))
    summary = {"metadata": dict(metadata or {}), "reductions": kernel_json, "integrated_errors": list(integrated)}
    manifest["json"] = str(write_json(summary, out / "summary.json"))
    if plots:
        for (model, kernel, reduction), rows in _panel_groups(records).items():
            p = plot_panel(rows, out / "panels" / f"{model}__{kernel}__{reduction}.svg")
            manifest["panels"].append(str(p))
    return manifest


def emit_convergence(table: ConvergenceTable, out_dir: str | Path, metadata: Mapping[str, Any] | None = None) -> dict[str, str]:
    out = Path(out_dir)
    cols = ("N", "field_error", "observable_error", "beta_error", "kernel_distance", "reduced_error",
            "initial_error", "envelope")
    path = out / "convergence.csv"
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in table.rows:
            w.writerow([_fmt(getattr(r, c)) for c in cols])
    meta = {"metadata": dict(metadata or {}), "lipschitz": table.lipschitz, "sup_coupling": table.sup_coupling,
            "beta_eff": table.beta_eff, "reference_M": table.reference_M}
    return {"csv": str(path), "json": str(write_json(meta, out / "convergence.json"))}
