"""Trajectory logs and their on-disk CSV schema.

One row per model step: time, measured state, applied input, the
controller model's predicted linear acceleration, and the reference
position.  Values are written with 17 significant digits, which
round-trips float64 exactly; a rerun with identical seeds therefore
produces byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LogFormatError

CSV_COLUMNS = (
    "t",
    "px", "py", "pz",
    "vx", "vy", "vz",
    "qw", "qx", "qy", "qz",
    "wx", "wy", "wz",
    "a1", "a2", "a3", "a4",
    "f1", "f2", "f3", "f4",
    "ac1", "ac2", "ac3", "ac4",
    "am_x", "am_y", "am_z",
    "rx", "ry", "rz",
)


@dataclass
class TrajectoryLog:
    t: np.ndarray = field(default_factory=lambda: np.empty(0))
    states: np.ndarray = field(default_factory=lambda: np.empty((0, 17)))
    inputs: np.ndarray = field(default_factory=lambda: np.empty((0, 8)))
    accel_model: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    ref_pos: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    crashed: bool = False
    crash_reason: str = ""

    def __post_init__(self):
        n = len(self.t)
        shapes = {
            "states": (n, 17), "inputs": (n, 8),
            "accel_model": (n, 3), "ref_pos": (n, 3),
        }
        for name, shape in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise LogFormatError(f"{name} must have shape {shape}, got {arr.shape}")
            setattr(self, name, arr)
        self.t = np.asarray(self.t, dtype=float)

    def __len__(self):
        return len(self.t)

    def row_matrix(self) -> np.ndarray:
        return np.column_stack(
            [self.t, self.states, self.inputs, self.accel_model, self.ref_pos]
        )


def _fmt(x: float) -> str:
    # +0.0 forces a canonical "0" for negative zeros
    return format(x + 0.0, ".17g")


def write_log_csv(log: TrajectoryLog, path) -> None:
    rows = log.row_matrix()
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_log_csv(path) -> TrajectoryLog:
    with open(path, "r") as fh:
        header = fh.readline().rstrip("\n")
        if header.split(",") != list(CSV_COLUMNS):
            raise LogFormatError(f"unexpected header in {path}")
        data = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(CSV_COLUMNS):
                raise LogFormatError(f"{path}:{lineno}: expected {len(CSV_COLUMNS)} columns")
            try:
                data.append([float(p) for p in parts])
            except ValueError as exc:
                raise LogFormatError(f"{path}:{lineno}: {exc}") from exc
    arr = np.asarray(data, dtype=float).reshape(len(data), len(CSV_COLUMNS))
    return TrajectoryLog(
        t=arr[:, 0],
        states=arr[:, 1:18],
        inputs=arr[:, 18:26],
        accel_model=arr[:, 26:29],
        ref_pos=arr[:, 29:32],
    )
