"""Fixed-step RK4 integration of the robot model.

Two integrators live here: the classical RK4 step over the full 17-entry
state used by the plant, the controller model and label generation, and a
restricted step over (height, velocity) only, used by the energy term of
the training loss.  The restricted step freezes attitude, tilt angles and
thrust at their input values, which makes the subsystem dynamics affine;
RK4 then reproduces the polynomial solution exactly, and its derivative
with respect to the residual acceleration has a closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ControlInput, State, normalize_quat_vec, rotor_wrench_vec
from .errors import ConfigError, NonFiniteStateError
from .params import PhysicalParams
from .quat import quat_rotate


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 0.1
    n_stages: int = 4

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.n_stages != 4:
            raise ConfigError("only the classical 4-stage scheme is implemented")


def rk4_raw(deriv, x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """One classical RK4 step with zero-order-hold input, batched.

    deriv(x, u) must map raw state vectors to their time derivative with
    matching leading axes.  No quaternion handling here.
    """
    k1 = deriv(x, u)
    k2 = deriv(x + (0.5 * dt) * k1, u)
    k3 = deriv(x + (0.5 * dt) * k2, u)
    k4 = deriv(x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step_vec(deriv, x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """RK4 step on full robot states: integrate, renormalize q, check finite."""
    out = rk4_raw(deriv, x, u, dt)
    out = normalize_quat_vec(out)
    if not np.all(np.isfinite(out)):
        raise NonFiniteStateError("non-finite state after RK4 step")
    return out


def rk4_step(deriv_fn, x: State, u: ControlInput, dt: float) -> State:
    """Typed wrapper over rk4_step_vec for State-level derivative functions."""

    def deriv(xv, uv):
        return deriv_fn(State.from_vector(xv), ControlInput.from_vector(uv)).as_vector()

    return State.from_vector(rk4_step_vec(deriv, x.as_vector(), u.as_vector(), dt))


def xi_linear_accel(xi: np.ndarray, params: PhysicalParams) -> np.ndarray:
    """Model acceleration for a network-input vector, batched.

    xi layout: [z, v(3), q(4), alpha_s(4), f(4)].  Attitude, tilt and thrust
    are exactly the frozen quantities of the restricted step, so this is the
    (constant) linear acceleration it integrates under.
    """
    xi = np.asarray(xi, dtype=float)
    q = xi[..., 4:8]
    alpha_s = xi[..., 8:12]
    f = xi[..., 12:16]
    force_b, _ = rotor_wrench_vec(alpha_s, f, params)
    acc = quat_rotate(q, force_b) / params.mass_kg
    acc = acc - np.array([0.0, 0.0, params.gravity])
    return acc


def rk4_step_hv(xi: np.ndarray, residual_accel: np.ndarray, dt: float,
                params: PhysicalParams):
    """Restricted RK4 step over (height, velocity) only, batched.

    dh/dt = v_z, dv/dt = a_lin(xi) + residual_accel, with a_lin held at the
    frozen attitude/tilt/thrust of xi and the residual constant across
    stages.  dt may be a scalar or per-sample (...,) array.  Returns
    (h_next, v_next) with shapes (...,) and (..., 3).
    """
    xi = np.asarray(xi, dtype=float)
    residual_accel = np.asarray(residual_accel, dtype=float)
    dt = np.asarray(dt, dtype=float)
    if dt.ndim > 0:
        dt = dt[..., None]
    acc = xi_linear_accel(xi, params) + residual_accel
    h = xi[..., 0]
    v = xi[..., 1:4]

    def deriv(y):
        d = np.empty_like(y)
        d[..., 0] = y[..., 3]     # dh/dt = v_z
        d[..., 1:4] = acc
        return d

    y = np.concatenate([h[..., None], v], axis=-1)
    k1 = deriv(y)
    k2 = deriv(y + (0.5 * dt) * k1)
    k3 = deriv(y + (0.5 * dt) * k2)
    k4 = deriv(y + dt * k3)
    out = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return out[..., 0], out[..., 1:4]


def rk4_step_hv_jacobian(dt: float):
    """d(h_next, v_next)/d(residual) propagated through the RK4 stages.

    The tangent of each stage is linear, so the Jacobian is state free:
    returns (dh (3,), dv (3,3)).  Equals the closed form [0,0,dt^2/2] and
    dt*I because the restricted dynamics are affine in the residual.
    """
    # tangent y' = F y + G a with F = d/dy (only dh/dv_z), G = [0; I]
    F = np.zeros((4, 4))
    F[0, 3] = 1.0
    G = np.zeros((4, 3))
    G[1:, :] = np.eye(3)
    J = np.zeros((4, 3))
    k1 = F @ J + G
    k2 = F @ (J + 0.5 * dt * k1) + G
    k3 = F @ (J + 0.5 * dt * k2) + G
    k4 = F @ (J + dt * k3) + G
    J = J + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return J[0], J[1:]
