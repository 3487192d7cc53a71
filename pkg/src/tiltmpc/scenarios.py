"""Reference trajectories: the three tracking experiments and the
excitation program used for data collection.

Every scenario is a pure function of time returning a ReferencePoint; the
closed loop samples it at the horizon nodes. Geometry lives at desk scale:
heights around 1 m, sub-meter excursions, tilt setpoints up to 45 degrees.
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dynamics import State, hover_input
from .errors import ConfigError
from .ocp import ReferencePoint
from .params import PhysicalParams
from .quat import quat_conj, quat_exp_map, quat_log_map, quat_mul

TAKEOFF_RAMP_S = 3.0
# attitude setpoint changes are slerp-blended over this long: the
# single-iteration solver tracks ramps well but tumbles on large steps
ATTITUDE_BLEND_S = 4.0


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    reference_fn: Callable[[float], ReferencePoint]
    initial_state: State
    crash_grace_s: float = 0.0   # low-altitude guard suspended this long

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError("scenario duration must be positive")


def _smoothstep(tau: float):
    """C1 ramp on [0, 1] and its derivative; clamped outside."""
    tau = min(max(tau, 0.0), 1.0)
    return tau * tau * (3.0 - 2.0 * tau), 6.0 * tau * (1.0 - tau)


def _roll_quat(angle: float) -> np.ndarray:
    return np.array([math.cos(angle / 2.0), math.sin(angle / 2.0), 0.0, 0.0])


def _pitch_quat(angle: float) -> np.ndarray:
    return np.array([math.cos(angle / 2.0), 0.0, math.sin(angle / 2.0), 0.0])


_LEVEL = np.array([1.0, 0.0, 0.0, 0.0])


@dataclass(frozen=True)
class _Segment:
    """One piece of a reference program: local time -> (p, v, q)."""
    duration: float
    pose: Callable[[float], tuple]


def _hold(duration, p, q=None):
    p = np.asarray(p, dtype=float)
    q = _LEVEL if q is None else np.asarray(q, dtype=float)
    return _Segment(duration, lambda t: (p, np.zeros(3), q))


def _line(duration, p0, p1, q=None):
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    q = _LEVEL if q is None else np.asarray(q, dtype=float)

    def pose(t):
        s, ds = _smoothstep(t / duration)
        return p0 + (p1 - p0) * s, (p1 - p0) * ds / duration, q

    return _Segment(duration, pose)


def _slerp(q0, q1, s):
    rel = quat_log_map(quat_mul(quat_conj(q0), q1))
    return quat_mul(q0, quat_exp_map(s * rel))


def _turn(duration, p, q0, q1):
    """Hold position while rotating the attitude reference q0 -> q1."""
    p = np.asarray(p, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)

    def pose(t):
        s, _ = _smoothstep(t / duration)
        return p, np.zeros(3), _slerp(q0, q1, s)

    return _Segment(duration, pose)


def _circle(duration, center, radius, freq_hz, z):
    cx, cy = center

    def pose(t):
        th = 2.0 * math.pi * freq_hz * t
        om = 2.0 * math.pi * freq_hz
        p = np.array([cx + radius * math.cos(th), cy + radius * math.sin(th), z])
        v = np.array([-radius * om * math.sin(th), radius * om * math.cos(th), 0.0])
        return p, v, _LEVEL

    return _Segment(duration, pose)


def _program_fn(segments, u_ref, cyclic=False):
    """Chain segments into a reference function; holds the last pose after
    the program ends unless cyclic."""
    total = sum(s.duration for s in segments)

    def reference_fn(t: float) -> ReferencePoint:
        if cyclic:
            t = t % total
        elif t >= total:
            p, _, q = segments[-1].pose(segments[-1].duration)
            return ReferencePoint(State(p=p, q=q), u_ref)
        local = t
        for seg in segments:
            if local <= seg.duration or seg is segments[-1]:
                p, v, q = seg.pose(min(local, seg.duration))
                return ReferencePoint(State(p=p, v=v, q=q), u_ref)
            local -= seg.duration
        raise AssertionError("unreachable")

    return reference_fn


def takeoff_hover_scenario(params: PhysicalParams, duration: float = 10.0) -> Scenario:
    """Climb from 0.1 m to the 1.0 m hover in 3 s, then hold."""
    u_ref = hover_input(params)
    segments = [
        _line(TAKEOFF_RAMP_S, [0.0, 0.0, 0.1], [0.0, 0.0, 1.0]),
        _hold(max(duration - TAKEOFF_RAMP_S, 1.0), [0.0, 0.0, 1.0]),
    ]
    return Scenario(
        name="takeoff-hover",
        duration=duration,
        reference_fn=_program_fn(segments, u_ref),
        initial_state=State(p=np.array([0.0, 0.0, 0.1])),
        crash_grace_s=TAKEOFF_RAMP_S,
    )


def circle_scenario(params: PhysicalParams, duration: float = 30.0) -> Scenario:
    """0.8 m radius at 0.1 Hz, constant 1.0 m height, entered on the circle."""
    u_ref = hover_input(params)
    radius, freq = 0.8, 0.1
    seg = _circle(duration, (0.0, 0.0), radius, freq, 1.0)
    p0, v0, _ = seg.pose(0.0)
    return Scenario(
        name="circle",
        duration=duration,
        reference_fn=_program_fn([seg], u_ref, cyclic=True),
        initial_state=State(p=p0, v=v0),
    )


def setpoint_scenario(params: PhysicalParams, duration: float = 20.0) -> Scenario:
    """Glide to a level pose, then roll 45 degrees in place via servo tilt."""
    u_ref = hover_input(params)
    half = duration / 2.0
    blend = min(ATTITUDE_BLEND_S, half / 2.0)
    glide = min(POSITION_BLEND_S, half / 2.0)
    p0 = [0.0, 0.0, 1.0]
    p = [0.4, 0.0, 1.0]
    rolled = _roll_quat(math.pi / 4.0)
    segments = [
        _line(glide, p0, p),
        _hold(half - glide, p),
        _turn(blend, p, _LEVEL, rolled),
        _hold(half - blend, p, q=rolled),
    ]
    return Scenario(
        name="setpoint",
        duration=duration,
        reference_fn=_program_fn(segments, u_ref),
        initial_state=State(p=np.array([0.0, 0.0, 1.0])),
    )


def _collection_cycle():
    """One excitation cycle: ground-effect hovers, climbs, a circle, and
    blended tilt setpoints to +-45 degrees roll and 30 degrees pitch."""
    roll_p = _roll_quat(math.pi / 4.0)
    roll_m = _roll_quat(-math.pi / 4.0)
    pitch = _pitch_quat(math.pi / 6.0)
    z_lo = [0.0, 0.0, 0.25]
    z_mid = [0.0, 0.0, 0.35]
    z_hi = [0.0, 0.0, 1.2]
    blend = ATTITUDE_BLEND_S
    return [
        _hold(4.0, z_lo),
        _line(3.0, z_lo, z_hi),
        _hold(1.0, z_hi),
        _circle(1.0 / 0.15, (-0.5, 0.0), 0.5, 0.15, 1.2),
        _line(3.0, z_hi, z_mid),
        _turn(blend, z_mid, _LEVEL, roll_p),
        _hold(2.0, z_mid, q=roll_p),
        _turn(2.0 * blend, z_mid, roll_p, roll_m),   # 90 deg sweep through level
        _hold(2.0, z_mid, q=roll_m),
        _turn(blend, z_mid, roll_m, _LEVEL),
        _turn(3.0, z_mid, _LEVEL, pitch),
        _hold(2.0, z_mid, q=pitch),
        _turn(3.0, z_mid, pitch, _LEVEL),
        _line(2.0, z_mid, z_lo),
    ]


def data_collection_scenario(params: PhysicalParams, minutes: float) -> Scenario:
    """Scripted excitation program cycled for the requested duration."""
    if not minutes > 0:
        raise ConfigError("collection minutes must be positive")
    u_ref = hover_input(params)
    segments = _collection_cycle()
    return Scenario(
        name="data-collection",
        duration=minutes * 60.0,
        reference_fn=_program_fn(segments, u_ref, cyclic=True),
        initial_state=State(p=np.array(segments[0].pose(0.0)[0])),
    )


SCENARIO_BUILDERS = {
    "takeoff-hover": takeoff_hover_scenario,
    "circle": circle_scenario,
    "setpoint": setpoint_scenario,
}


def get_scenario(name: str, params: PhysicalParams, duration: float | None = None) -> Scenario:
    if name not in SCENARIO_BUILDERS:
        raise ConfigError(f"unknown scenario {name!r}; expected one of {sorted(SCENARIO_BUILDERS)}")
    builder = SCENARIO_BUILDERS[name]
    if duration is None:
        return builder(params)
    return builder(params, duration=duration)
