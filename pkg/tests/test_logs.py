"""CSV round-trip and format validation for trajectory logs."""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from tiltmpc.errors import LogFormatError
from tiltmpc.logs import CSV_COLUMNS, TrajectoryLog, read_log_csv, write_log_csv


def make_log(rng, n=7):
    states = rng.normal(size=(n, 17))
    return TrajectoryLog(
        t=np.arange(n) * 0.1,
        states=states,
        inputs=rng.normal(size=(n, 8)),
        accel_model=rng.normal(size=(n, 3)),
        ref_pos=rng.normal(size=(n, 3)),
    )


def test_column_count():
    assert len(CSV_COLUMNS) == 32


def test_round_trip_is_exact(tmp_path, rng):
    log = make_log(rng)
    path = tmp_path / "log.csv"
    write_log_csv(log, path)
    back = read_log_csv(path)
    # 17 significant digits round-trip float64 exactly
    assert_array_equal(back.t, log.t)
    assert_array_equal(back.states, log.states)
    assert_array_equal(back.inputs, log.inputs)
    assert_array_equal(back.accel_model, log.accel_model)
    assert_array_equal(back.ref_pos, log.ref_pos)


def test_write_is_deterministic(tmp_path, rng):
    log = make_log(rng)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_log_csv(log, p1)
    write_log_csv(log, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_negative_zero_normalized(tmp_path):
    log = TrajectoryLog(
        t=np.array([0.0]),
        states=np.full((1, 17), -0.0),
        inputs=np.zeros((1, 8)),
        accel_model=np.zeros((1, 3)),
        ref_pos=np.zeros((1, 3)),
    )
    path = tmp_path / "z.csv"
    write_log_csv(log, path)
    assert "-0" not in path.read_text()


def test_header_mismatch_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,x\n0,1\n")
    with pytest.raises(LogFormatError):
        read_log_csv(path)


def test_short_row_rejected(tmp_path, rng):
    log = make_log(rng, n=2)
    path = tmp_path / "log.csv"
    write_log_csv(log, path)
    lines = path.read_text().splitlines()
    lines[1] = ",".join(lines[1].split(",")[:-1])
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(LogFormatError):
        read_log_csv(path)


def test_non_numeric_rejected(tmp_path, rng):
    log = make_log(rng, n=1)
    path = tmp_path / "log.csv"
    write_log_csv(log, path)
    text = path.read_text().replace("0.", "x.", 1)
    path.write_text(text)
    with pytest.raises(LogFormatError):
        read_log_csv(path)


def test_shape_validation():
    with pytest.raises(LogFormatError):
        TrajectoryLog(t=np.zeros(3), states=np.zeros((2, 17)),
                      inputs=np.zeros((3, 8)), accel_model=np.zeros((3, 3)),
                      ref_pos=np.zeros((3, 3)))


def test_empty_log_round_trip(tmp_path):
    path = tmp_path / "empty.csv"
    write_log_csv(TrajectoryLog(), path)
    back = read_log_csv(path)
    assert len(back) == 0
