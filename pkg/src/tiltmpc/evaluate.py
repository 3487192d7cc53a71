"""Tracking metrics over trajectory logs and the experiment report.

MAE is the time-average of the Euclidean position error; the smoothness
metric is the total variance (summed over axes) of the model-predicted
acceleration trace. The report is emitted both as CSV and as an aligned
text table, deterministically.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .logs import TrajectoryLog, _fmt
from .params import PhysicalParams

REPORT_COLUMNS = (
    "scenario", "controller", "mae", "mae_x", "mae_y", "mae_z",
    "accel_variance", "violations", "crashed",
)


@dataclass(frozen=True)
class EvalRow:
    scenario: str
    controller: str
    mae: float
    mae_axes: tuple
    accel_variance: float
    violations: int
    crashed: bool


@dataclass(frozen=True)
class EvalReport:
    rows: tuple


def input_violation_count(inputs: np.ndarray, params: PhysicalParams) -> int:
    """Logged inputs outside the box; bound-exact values are not violations."""
    f = inputs[:, 0:4]
    a = inputs[:, 4:8]
    bad = (f < params.f_min) | (f > params.f_max) | (np.abs(a) > params.servo_limit_rad)
    return int(np.sum(np.any(bad, axis=1)))


def evaluate_log(log: TrajectoryLog, params: PhysicalParams):
    """(mae, per-axis mae, accel trace variance, violation count) of one run."""
    if len(log) == 0:
        raise ConfigError("cannot evaluate an empty log")
    err = log.states[:, 0:3] - log.ref_pos
    mae = float(np.mean(np.linalg.norm(err, axis=1)))
    mae_axes = tuple(float(v) for v in np.mean(np.abs(err), axis=0))
    accel_var = float(np.sum(np.var(log.accel_model, axis=0)))
    return mae, mae_axes, accel_var, input_violation_count(log.inputs, params)


def evaluate(entries, params: PhysicalParams) -> EvalReport:
    """Metrics for (scenario, controller, log) triples.

    Logs sharing a scenario must share their time grid so the controllers
    are compared over identical references.
    """
    grids = {}
    rows = []
    for scenario, controller, log in entries:
        if len(log) == 0:
            raise ConfigError(f"empty log for {scenario}/{controller}")
        # crashed logs are legitimately truncated; only complete runs must
        # share the scenario's time grid
        if not log.crashed:
            if scenario in grids:
                ref_t = grids[scenario]
                if len(log.t) != len(ref_t) or not np.array_equal(log.t, ref_t):
                    raise ConfigError(
                        f"log for {scenario}/{controller} does not share the scenario time grid")
            else:
                grids[scenario] = log.t
        mae, mae_axes, accel_var, violations = evaluate_log(log, params)
        rows.append(EvalRow(scenario, controller, mae, mae_axes,
                            accel_var, violations, log.crashed))
    return EvalReport(rows=tuple(rows))


def headline_ratio(report: EvalReport, baseline: str = "analytical",
                   ours: str = "energy"):
    """Mean relative MAE improvement of `ours` over `baseline` across the
    scenarios where both ran; None when no scenario has both."""
    by_key = {(r.scenario, r.controller): r for r in report.rows}
    ratios = []
    for row in report.rows:
        if row.controller != baseline:
            continue
        other = by_key.get((row.scenario, ours))
        if other is None or row.mae == 0.0:
            continue
        ratios.append((row.mae - other.mae) / row.mae)
    if not ratios:
        return None
    return float(np.mean(ratios))


def write_report_csv(report: EvalReport, path) -> None:
    lines = [",".join(REPORT_COLUMNS)]
    for r in report.rows:
        lines.append(",".join([
            r.scenario, r.controller, _fmt(r.mae),
            _fmt(r.mae_axes[0]), _fmt(r.mae_axes[1]), _fmt(r.mae_axes[2]),
            _fmt(r.accel_variance), str(r.violations), str(int(r.crashed)),
        ]))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def format_report_table(report: EvalReport) -> str:
    """Aligned text table plus the aggregate improvement line."""
    header = ("scenario", "controller", "MAE [m]", "x", "y", "z",
              "accel var", "viol", "crashed")
    body = [header]
    for r in report.rows:
        body.append((
            r.scenario, r.controller, f"{r.mae:.4f}",
            f"{r.mae_axes[0]:.4f}", f"{r.mae_axes[1]:.4f}", f"{r.mae_axes[2]:.4f}",
            f"{r.accel_variance:.5f}", str(r.violations),
            "yes" if r.crashed else "no",
        ))
    widths = [max(len(row[i]) for row in body) for i in range(len(header))]
    lines = []
    for k, row in enumerate(body):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    ratio = headline_ratio(report)
    if ratio is not None:
        lines.append("")
        lines.append(f"mean MAE improvement, energy vs analytical: {100.0 * ratio:.1f}%")
    return "\n".join(lines) + "\n"
