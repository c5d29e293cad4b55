"""Run reports: per-action rank correlation, errors, loss curves, config echo.

Serialized report bytes are a pure function of (manifest, seed): timing is
kept on the in-memory object only and never written, so identical runs
emit identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

FORMATS = ("structured-text", "delimited-table")


@dataclass
class RunReport:
    per_action_rho: dict[str, float | None]   # percent, None when undefined
    rho_errors: dict[str, str]
    average_rho: float | None
    mae: float
    rmse: float
    loss_curves: dict[str, list[float]]
    config: dict
    seed: int
    wall_clock_seconds: float = field(default=0.0, compare=False)

    def to_dict(self) -> dict:
        return {
            "per_action_rho": self.per_action_rho,
            "rho_errors": self.rho_errors,
            "average_rho": self.average_rho,
            "mae": self.mae,
            "rmse": self.rmse,
            "loss_curves": self.loss_curves,
            "config": self.config,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "RunReport":
        return RunReport(per_action_rho=dict(d["per_action_rho"]),
                         rho_errors=dict(d["rho_errors"]),
                         average_rho=d["average_rho"],
                         mae=float(d["mae"]), rmse=float(d["rmse"]),
                         loss_curves={k: list(v) for k, v in d["loss_curves"].items()},
                         config=d["config"], seed=int(d["seed"]))


def build_report(per_action_rho, rho_errors, mae, rmse, loss_curves, config, seed,
                 wall_clock_seconds=0.0) -> RunReport:
    defined = [v for v in per_action_rho.values() if v is not None]
    average = sum(defined) / len(defined) if defined else None
    return RunReport(per_action_rho=per_action_rho, rho_errors=rho_errors,
                     average_rho=average, mae=mae, rmse=rmse, loss_curves=loss_curves,
                     config=config, seed=seed, wall_clock_seconds=wall_clock_seconds)


def _pct(value: float | None) -> str:
    return "undefined" if value is None else f"{value:.2f}"


def emit_report(report: RunReport, path, fmt: str = "structured-text") -> Path:
    if fmt not in FORMATS:
        raise ValueError(f"unknown report format {fmt!r}; expected one of {FORMATS}")
    path = Path(path)
    if fmt == "structured-text":
        path.write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    else:
        lines = ["action,spearman_pct"]
        for action in sorted(report.per_action_rho):
            lines.append(f"{action},{_pct(report.per_action_rho[action])}")
        lines.append(f"average,{_pct(report.average_rho)}")
        lines.append(f"mae,{report.mae:.4f}")
        lines.append(f"rmse,{report.rmse:.4f}")
        path.write_text("\n".join(lines) + "\n")
    return path


def load_report(path) -> RunReport:
    return RunReport.from_dict(json.loads(Path(path).read_text()))
