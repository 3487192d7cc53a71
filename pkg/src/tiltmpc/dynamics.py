"""Analytical rigid-body model of the tiltable quadrotor.

State vector layout (17 entries, float64):

    [0:3]   p        position, world frame (z up)
    [3:6]   v        linear velocity, world frame
    [6:10]  q        attitude quaternion [w,x,y,z], body -> world
    [10:13] omega_b  angular rate, body frame
    [13:17] alpha_s  servo tilt angles (state)

Input vector layout (8 entries): [f1..f4, alpha_c1..alpha_c4] with per-rotor
thrusts in newtons and commanded tilt angles in radians.

All heavy math is written against arrays with arbitrary leading batch axes;
the dataclasses below are thin typed views used at module boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import HoverInfeasibleError
from .params import PhysicalParams
from .quat import cross3, quat_mul, quat_normalize, quat_rotate

# slice map for the raw state vector
P = slice(0, 3)
V = slice(3, 6)
Q = slice(6, 10)
W = slice(10, 13)
A = slice(13, 17)
NX = 17
NU = 8


@dataclass
class State:
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    omega_b: np.ndarray = field(default_factory=lambda: np.zeros(3))
    alpha_s: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v, self.q, self.omega_b, self.alpha_s]).astype(float)

    @staticmethod
    def from_vector(x: np.ndarray) -> "State":
        x = np.asarray(x, dtype=float)
        return State(x[P].copy(), x[V].copy(), x[Q].copy(), x[W].copy(), x[A].copy())

    def copy(self) -> "State":
        return State.from_vector(self.as_vector())


@dataclass
class ControlInput:
    f: np.ndarray = field(default_factory=lambda: np.zeros(4))
    alpha_c: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.f, self.alpha_c]).astype(float)

    @staticmethod
    def from_vector(u: np.ndarray) -> "ControlInput":
        u = np.asarray(u, dtype=float)
        return ControlInput(u[0:4].copy(), u[4:8].copy())


@dataclass
class Wrench:
    force_b: np.ndarray
    torque_b: np.ndarray


@dataclass
class StateDerivative:
    dp: np.ndarray
    dv: np.ndarray
    dq: np.ndarray
    domega_b: np.ndarray
    dalpha_s: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.dp, self.dv, self.dq, self.domega_b, self.dalpha_s])


def _pairwise_rotor_sum(terms: np.ndarray) -> np.ndarray:
    # fixed (t0+t1)+(t2+t3) order: keeps symmetric rotor layouts exactly
    # cancelled in floating point (hover equilibrium is bit-exact zero)
    return (terms[..., 0, :] + terms[..., 1, :]) + (terms[..., 2, :] + terms[..., 3, :])


def rotor_wrench_vec(alpha_s: np.ndarray, f: np.ndarray, params: PhysicalParams):
    """Total body-frame force and torque from per-rotor thrusts and tilts.

    Per rotor: thrust [0,0,f] and reaction torque [0,0,-dir*f*kq/kt] live in
    the rotor frame, rotated about the arm x axis by alpha, then into the
    body frame by the fixed arm rotation; the lever arm adds p_r x f_r.
    Broadcasts over leading axes of alpha_s and f (shape (...,4)).
    """
    alpha_s = np.asarray(alpha_s, dtype=float)
    f = np.asarray(f, dtype=float)
    sa, ca = np.sin(alpha_s), np.cos(alpha_s)
    zeros = np.zeros_like(f)
    # tilt about arm x: [0,0,z] -> [0, -sin(a) z, cos(a) z]
    thrust_arm = np.stack([zeros, -sa * f, ca * f], axis=-1)
    react = -params.rotor_dir * f * (params.drag_torque_coeff / params.thrust_coeff)
    react_arm = np.stack([zeros, -sa * react, ca * react], axis=-1)
    force_per = np.einsum("rij,...rj->...ri", params.arm_rot_body, thrust_arm)
    torque_per = np.einsum("rij,...rj->...ri", params.arm_rot_body, react_arm)
    torque_per = torque_per + cross3(params.rotor_pos_body, force_per)
    return _pairwise_rotor_sum(force_per), _pairwise_rotor_sum(torque_per)


def rotor_wrench(alpha_s: np.ndarray, f: np.ndarray, params: PhysicalParams) -> Wrench:
    force, torque = rotor_wrench_vec(alpha_s, f, params)
    return Wrench(force_b=force, torque_b=torque)


def state_deriv_vec(x: np.ndarray, u: np.ndarray, params: PhysicalParams) -> np.ndarray:
    """Continuous-time derivative of the raw state vector, batched."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    v = x[..., V]
    q = x[..., Q]
    w = x[..., W]
    alpha_s = x[..., A]
    f = u[..., 0:4]
    alpha_c = u[..., 4:8]

    force_b, torque_b = rotor_wrench_vec(alpha_s, f, params)
    dv = quat_rotate(q, force_b) / params.mass_kg
    dv = dv - np.array([0.0, 0.0, params.gravity])

    wq = np.concatenate([np.zeros_like(w[..., :1]), w], axis=-1)
    dq = 0.5 * quat_mul(q, wq)

    inertia = params.inertia_diag
    domega = (torque_b - cross3(w, inertia * w)) / inertia
    dalpha = (alpha_c - alpha_s) / params.t_servo

    out = np.empty_like(x)
    out[..., P] = v
    out[..., V] = dv
    out[..., Q] = dq
    out[..., W] = domega
    out[..., A] = dalpha
    return out


def state_derivative(x: State, u: ControlInput, params: PhysicalParams) -> StateDerivative:
    d = state_deriv_vec(x.as_vector(), u.as_vector(), params)
    return StateDerivative(d[P], d[V], d[Q], d[W], d[A])


def hover_input(params: PhysicalParams) -> ControlInput:
    """Equilibrium input: equal thrusts mg/4, zero tilt commands."""
    per_rotor = params.mass_kg * params.gravity / 4.0
    if not (params.f_min <= per_rotor <= params.f_max):
        raise HoverInfeasibleError(
            f"hover thrust {per_rotor:.3f} N per rotor outside [{params.f_min}, {params.f_max}]"
        )
    return ControlInput(f=np.full(4, per_rotor), alpha_c=np.zeros(4))


def hover_state(params: PhysicalParams, p=(0.0, 0.0, 1.0)) -> State:
    return State(p=np.asarray(p, dtype=float))


def normalize_quat_vec(x: np.ndarray) -> np.ndarray:
    """Renormalize the quaternion slice of raw state vectors in place."""
    x[..., Q] = quat_normalize(x[..., Q])
    return x
