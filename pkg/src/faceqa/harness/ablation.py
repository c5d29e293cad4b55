"""Axis sweeps over a base manifest: one train+evaluate per axis value.

Rows report metrics only; no ordering among values is asserted anywhere.
A failed sub-run is recorded in its row and the sweep continues.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

from .manifest import ExperimentManifest, ModelConfig
from .training import train

AXES = ("fusion_variant", "sigma", "output_mode", "loss")


def apply_axis(manifest: ExperimentManifest, axis: str, value) -> ExperimentManifest:
    if axis == "fusion_variant":
        model = replace(manifest.model, fusion=replace(manifest.model.fusion, variant=str(value)))
        return replace(manifest, model=model)
    if axis == "output_mode":
        model = replace(manifest.model,
                        fusion=replace(manifest.model.fusion, output_mode=str(value)))
        return replace(manifest, model=model)
    if axis == "sigma":
        model = replace(manifest.model,
                        heatmap=replace(manifest.model.heatmap, sigma=float(value)))
        return replace(manifest, model=model)
    if axis == "loss":
        return replace(manifest, loss=replace(manifest.loss, kind=str(value)))
    raise ValueError(f"unknown ablation axis {axis!r}; expected one of {AXES}")


def parse_axis_arg(arg: str) -> tuple[str, list[str]]:
    """Parse NAME=V1,V2,... into an axis name and its value list."""
    if "=" not in arg:
        raise ValueError(f"axis argument must look like name=v1,v2,... got {arg!r}")
    name, _, values = arg.partition("=")
    parsed = [v.strip() for v in values.split(",") if v.strip()]
    if not parsed:
        raise ValueError(f"axis {name!r} has no values")
    return name.strip(), parsed


def ablate(manifest: ExperimentManifest, axis: str, values, out_dir) -> Path:
    """Sweep the axis with a shared seed; emits a delimited comparison table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    actions = list(manifest.actions)
    header = ["value"] + [f"{a}_pct" for a in actions] + ["avg_pct", "mae", "rmse", "status"]
    rows = [",".join(header)]
    for value in values:
        run_dir = out / f"{axis}_{value}"
        try:
            sub = apply_axis(manifest, axis, value)
            outcome = train(sub, run_dir)
            rep = outcome.report
            cells = [str(value)]
            cells += ["undefined" if rep.per_action_rho[a] is None
                      else f"{rep.per_action_rho[a]:.2f}" for a in actions]
            cells.append("undefined" if rep.average_rho is None else f"{rep.average_rho:.2f}")
            cells += [f"{rep.mae:.4f}", f"{rep.rmse:.4f}", "ok"]
        except Exception as e:  # record and continue with the remaining values
            cells = [str(value)] + [""] * (len(actions) + 3) + [f"error: {e}"]
        rows.append(",".join(cells))
    table_path = out / f"ablation_{axis}.csv"
    table_path.write_text("\n".join(rows) + "\n")
    return table_path
