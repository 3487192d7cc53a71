"""Discretized tracking OCP solved by SQP real-time iterations.

Direct multiple shooting over N steps of length t_step.  Each solver call
embeds the current measurement into node 0, linearizes the shooting
dynamics around the stored trajectory by central finite differences in a
17-dim tangent space (attitude handled by the quaternion exp/log maps,
with one documented spare slot at the quaternion-scalar position so the
weight vectors align with the raw state layout), condenses the resulting
equality-constrained quadratic onto the input sequence, solves the box-
constrained QP, applies the Gauss-Newton update, and finally shifts the
trajectory one step for the next call's warm start.

The prediction model is either the analytical dynamics or the neural-
enhanced variant, where the network's residual acceleration, evaluated
once per shooting interval at the node state and clipped to the model's
trust bound, is added to dv/dt and held constant across the RK4 stages.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    A,
    NU,
    NX,
    P,
    Q,
    V,
    W,
    ControlInput,
    State,
    hover_input,
    state_deriv_vec,
)
from .errors import ConfigError, NonFiniteStateError
from .integrator import rk4_raw
from .network import MlpParams, forward, xi_from_state_input
from .params import PhysicalParams
from .qp import solve_box_qp
from .quat import quat_conj, quat_exp_map, quat_log_map, quat_mul, quat_normalize

NT = 17      # tangent dimension: p 3, v 3, spare 1, attitude 3, rate 3, servo 4
SPARE = 6    # unused tangent slot keeping weights index-aligned with the state

FD_STEP = 1e-6


def default_state_weights() -> np.ndarray:
    q = np.zeros(NT)
    q[0:3] = 300.0       # position
    q[3:6] = 10.0        # velocity
    q[SPARE] = 0.0       # spare, must stay unused
    q[7:10] = 100.0      # attitude tangent
    q[10:13] = 1.0       # body rate
    q[13:17] = 1.0       # servo angles
    return q


def default_input_weights() -> np.ndarray:
    return np.ones(NU)


@dataclass(frozen=True)
class OcpConfig:
    horizon_n: int = 20
    t_step: float = 0.1
    t_samp: float = 0.025
    q_diag: np.ndarray = field(default_factory=default_state_weights)
    r_diag: np.ndarray = field(default_factory=default_input_weights)
    qn_diag: np.ndarray = None
    max_sqp_iters: int = 1
    kkt_tol: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "q_diag", np.asarray(self.q_diag, dtype=float))
        object.__setattr__(self, "r_diag", np.asarray(self.r_diag, dtype=float))
        qn = 5.0 * self.q_diag if self.qn_diag is None else np.asarray(self.qn_diag, dtype=float)
        object.__setattr__(self, "qn_diag", qn)
        if self.horizon_n < 2:
            raise ConfigError("horizon_n must be >= 2")
        if not 0 < self.t_samp <= self.t_step:
            raise ConfigError("need 0 < t_samp <= t_step")
        if self.q_diag.shape != (NT,) or self.qn_diag.shape != (NT,):
            raise ConfigError(f"state weights must have {NT} entries")
        if self.r_diag.shape != (NU,):
            raise ConfigError(f"input weights must have {NU} entries")
        if np.any(self.q_diag < 0) or np.any(self.r_diag < 0) or np.any(self.qn_diag < 0):
            raise ConfigError("weights must be >= 0")
        if self.max_sqp_iters < 1:
            raise ConfigError("max_sqp_iters must be >= 1")
        if not self.kkt_tol > 0:
            raise ConfigError("kkt_tol must be positive")


@dataclass
class ReferencePoint:
    x_ref: State
    u_ref: ControlInput

    def __post_init__(self):
        if abs(np.linalg.norm(self.x_ref.q) - 1.0) > 1e-6:
            raise ConfigError("reference quaternion must be unit length")


@dataclass
class DynamicsModel:
    """Prediction model: analytical dynamics plus an optional residual net.

    residual_limit is the componentwise bound (m/s^2) the controller
    places on the network correction. Labels on the shipped plant stay
    under ~1.6 m/s^2; an MLP evaluated off its training distribution can
    output several times that, and an RTI loop fed such corrections
    destabilizes itself, so predictions are never trusted past the bound.
    """

    mode: str = "analytical"           # "analytical" | "neural"
    network: MlpParams = None
    residual_limit: float = 3.0

    def __post_init__(self):
        if self.mode not in ("analytical", "neural"):
            raise ConfigError(f"unknown dynamics mode {self.mode!r}")
        if self.mode == "neural" and self.network is None:
            raise ConfigError("neural mode requires a network")
        if not self.residual_limit > 0.0:
            raise ConfigError("residual_limit must be positive")


def residual_accel(model: DynamicsModel, xi: np.ndarray) -> np.ndarray:
    """Network residual as the controller trusts it: clipped to the limit."""
    a = forward(model.network, xi)
    return np.clip(a, -model.residual_limit, model.residual_limit)


@dataclass
class SolverMemory:
    states: np.ndarray          # (N+1, 17) shooting nodes
    inputs: np.ndarray          # (N, 8)
    last_kkt: float = np.inf
    last_cost: float = np.inf
    qp_converged: bool = True

    def copy(self) -> "SolverMemory":
        return SolverMemory(self.states.copy(), self.inputs.copy(),
                            self.last_kkt, self.last_cost, self.qp_converged)


def init_memory(x_hat: State, cfg: OcpConfig, params: PhysicalParams) -> SolverMemory:
    """Cold start: every node at the measured state, inputs at hover."""
    states = np.tile(x_hat.as_vector(), (cfg.horizon_n + 1, 1))
    inputs = np.tile(hover_input(params).as_vector(), (cfg.horizon_n, 1))
    return SolverMemory(states=states, inputs=inputs)


# ---------------------------------------------------------------- tangent ops

def apply_tangent_vec(x: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Retract tangent steps onto state vectors; attitude via exp map."""
    x = np.asarray(x, dtype=float)
    delta = np.asarray(delta, dtype=float)
    shape = np.broadcast_shapes(x.shape[:-1], delta.shape[:-1])
    out = np.empty(shape + (NX,))
    out[..., P] = x[..., P] + delta[..., 0:3]
    out[..., V] = x[..., V] + delta[..., 3:6]
    out[..., Q] = quat_mul(quat_exp_map(delta[..., 7:10]), x[..., Q])
    out[..., W] = x[..., W] + delta[..., 10:13]
    out[..., A] = x[..., A] + delta[..., 13:17]
    return out


def state_diff_vec(xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
    """Tangent-space difference xa (-) xb; the spare slot is always zero."""
    xa = np.asarray(xa, dtype=float)
    xb = np.asarray(xb, dtype=float)
    shape = np.broadcast_shapes(xa.shape[:-1], xb.shape[:-1])
    out = np.zeros(shape + (NT,))
    out[..., 0:3] = xa[..., P] - xb[..., P]
    out[..., 3:6] = xa[..., V] - xb[..., V]
    out[..., 7:10] = quat_log_map(quat_mul(xa[..., Q], quat_conj(xb[..., Q])))
    out[..., 10:13] = xa[..., W] - xb[..., W]
    out[..., 13:17] = xa[..., A] - xb[..., A]
    return out


def tracking_error(x: State, ref: ReferencePoint) -> np.ndarray:
    """17-entry error ref (-) state, matching the weight layout."""
    return state_diff_vec(ref.x_ref.as_vector(), x.as_vector())


# ----------------------------------------------------------------- dynamics

def discrete_dynamics_vec(model: DynamicsModel, x: np.ndarray, u: np.ndarray,
                          dt: float, params: PhysicalParams) -> np.ndarray:
    """One shooting step, batched; neural residual held constant over stages."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if model.mode == "neural":
        a_tilde = residual_accel(model, xi_from_state_input(x, u))

        def deriv(xv, uv):
            d = state_deriv_vec(xv, uv, params)
            d[..., V] += a_tilde
            return d
    else:
        def deriv(xv, uv):
            return state_deriv_vec(xv, uv, params)

    # a diverging model (badly trained residual) overflows here; the
    # isfinite check turns that into an exception, so keep it quiet
    with np.errstate(over="ignore", invalid="ignore"):
        out = rk4_raw(deriv, x, u, dt)
        out[..., Q] = quat_normalize(out[..., Q])
    if not np.all(np.isfinite(out)):
        raise NonFiniteStateError("non-finite state after prediction step")
    return out


def discrete_dynamics(model: DynamicsModel, x: State, u: ControlInput,
                      dt: float, params: PhysicalParams) -> State:
    return State.from_vector(
        discrete_dynamics_vec(model, x.as_vector(), u.as_vector(), dt, params)
    )


def linearize(model: DynamicsModel, x: State, u: ControlInput, dt: float,
              params: PhysicalParams, h: float = FD_STEP):
    """Tangent-space Jacobians (A 17x17, B 17x8) by central differences."""
    amat, bmat = linearize_trajectory(
        model, x.as_vector()[None, :], u.as_vector()[None, :], dt, params, h
    )
    return amat[0], bmat[0]


def linearize_trajectory(model: DynamicsModel, xs: np.ndarray, us: np.ndarray,
                         dt: float, params: PhysicalParams, h: float = FD_STEP):
    """Jacobians for every node at once through one batched dynamics call."""
    n = xs.shape[0]
    eye_t = h * np.eye(NT)
    eye_u = h * np.eye(NU)
    xp = apply_tangent_vec(xs[:, None, :], eye_t[None, :, :])     # (n,17,17)
    xm = apply_tangent_vec(xs[:, None, :], -eye_t[None, :, :])
    x_rep = np.broadcast_to(xs[:, None, :], (n, NU, NX))
    u_rep = np.broadcast_to(us[:, None, :], (n, NT, NU))
    up = us[:, None, :] + eye_u[None, :, :]                       # (n,8,8)
    um = us[:, None, :] - eye_u[None, :, :]

    big_x = np.concatenate([xp, xm, x_rep, x_rep], axis=1)
    big_u = np.concatenate([u_rep, u_rep, up, um], axis=1)
    out = discrete_dynamics_vec(model, big_x, big_u, dt, params)

    fxp, fxm = out[:, :NT], out[:, NT:2 * NT]
    fup, fum = out[:, 2 * NT:2 * NT + NU], out[:, 2 * NT + NU:]
    amat = np.swapaxes(state_diff_vec(fxp, fxm), -2, -1) / (2.0 * h)
    bmat = np.swapaxes(state_diff_vec(fup, fum), -2, -1) / (2.0 * h)
    # the spare coordinate is inert by definition; zero its column instead
    # of keeping the ~1e-11 quaternion round-trip noise the FD picks up
    amat[..., :, SPARE] = 0.0
    if not (np.all(np.isfinite(amat)) and np.all(np.isfinite(bmat))):
        raise NonFiniteStateError("non-finite Jacobian")
    return amat, bmat


# --------------------------------------------------------------------- cost

def _ref_arrays(refs, n_horizon):
    if len(refs) != n_horizon + 1:
        raise ConfigError(f"need {n_horizon + 1} reference points, got {len(refs)}")
    x_refs = np.stack([r.x_ref.as_vector() for r in refs])
    u_refs = np.stack([r.u_ref.as_vector() for r in refs[:-1]])
    return x_refs, u_refs


def ocp_cost(states: np.ndarray, inputs: np.ndarray, refs, cfg: OcpConfig) -> float:
    """Tracking cost of a stored trajectory against the reference sequence."""
    x_refs, u_refs = _ref_arrays(refs, cfg.horizon_n)
    err = state_diff_vec(x_refs, states)            # (N+1, 17)
    w = u_refs - inputs                              # (N, 8)
    stage = np.sum(err[:-1] ** 2 * cfg.q_diag, axis=1) + np.sum(w ** 2 * cfg.r_diag, axis=1)
    terminal = float(np.sum(err[-1] ** 2 * cfg.qn_diag))
    return float(np.sum(stage)) + terminal


def input_bounds(params: PhysicalParams, n_horizon: int):
    lo = np.concatenate([np.full(4, params.f_min), np.full(4, -params.servo_limit_rad)])
    hi = np.concatenate([np.full(4, params.f_max), np.full(4, params.servo_limit_rad)])
    return np.tile(lo, n_horizon), np.tile(hi, n_horizon)


# -------------------------------------------------------------------- solver

def _rollout(model: DynamicsModel, x0_vec: np.ndarray, inputs: np.ndarray,
             dt: float, params: PhysicalParams) -> np.ndarray:
    """Propagate input sequences from node 0; defect-free by construction.

    inputs (..., N, 8) gives states (..., N+1, 17); candidate sequences
    ride one batched dynamics call per step.
    """
    inputs = np.asarray(inputs, dtype=float)
    n = inputs.shape[-2]
    states = np.empty(inputs.shape[:-2] + (n + 1, NX))
    states[..., 0, :] = x0_vec
    for k in range(n):
        states[..., k + 1, :] = discrete_dynamics_vec(
            model, states[..., k, :], inputs[..., k, :], dt, params)
    return states


def build_condensed_qp(mem: SolverMemory, refs, cfg: OcpConfig,
                       model: DynamicsModel, params: PhysicalParams):
    """Linearize and condense the OCP onto the stacked input update.

    Returns (hess, grad, du_lo, du_hi) of the box QP in the (N*8,) input
    tangent; grad is the half-gradient matching qp_objective's convention.
    """
    n = cfg.horizon_n
    x_refs, u_refs = _ref_arrays(refs, n)
    amats, bmats = linearize_trajectory(model, mem.states[:-1], mem.inputs,
                                        cfg.t_step, params)
    pred = discrete_dynamics_vec(model, mem.states[:-1], mem.inputs, cfg.t_step, params)
    defects = state_diff_vec(pred, mem.states[1:])   # (N, 17)

    # condense: dx_{k+1} = A_k dx_k + B_k du_k + d_k with dx_0 = 0
    smat = np.zeros((n + 1, NT, n * NU))
    phi = np.zeros((n + 1, NT))
    for k in range(n):
        phi[k + 1] = amats[k] @ phi[k] + defects[k]
        smat[k + 1] = amats[k] @ smat[k]
        smat[k + 1][:, k * NU:(k + 1) * NU] += bmats[k]

    err = state_diff_vec(x_refs, mem.states)         # (N+1, 17)
    w = (u_refs - mem.inputs).ravel()                # (N*8,)
    q_all = np.vstack([np.tile(cfg.q_diag, (n, 1)), cfg.qn_diag[None, :]])  # (N+1,17)
    # node 0 is pinned (dx_0 = 0): its stage cost is constant in du
    s_flat = smat[1:].reshape(n * NT, n * NU)
    q_flat = q_all[1:].ravel()
    r_flat = np.tile(cfg.r_diag, n)
    resid = (err[1:] - phi[1:]).ravel()              # target for S du

    hess = (s_flat * q_flat[:, None]).T @ s_flat
    hess[np.diag_indices_from(hess)] += r_flat
    grad = -(s_flat * q_flat[:, None]).T @ resid - r_flat * w

    lo, hi = input_bounds(params, n)
    return hess, grad, lo - mem.inputs.ravel(), hi - mem.inputs.ravel()


def sqp_iteration(mem: SolverMemory, refs, cfg: OcpConfig, model: DynamicsModel,
                  params: PhysicalParams):
    """One Gauss-Newton step on the condensed QP; mutates mem in place.

    The QP step is backtracked against the rolled-out trajectory cost: full
    Gauss-Newton steps overshoot once the tilt channel gets aggressive, and
    accepting only cost-non-increasing steps keeps the iteration a descent.
    Returns the max-norm of the applied input update (zero at a stationary
    point, or when no fraction of the step decreases the cost).
    """
    n = cfg.horizon_n
    hess, grad, du_lo, du_hi = build_condensed_qp(mem, refs, cfg, model, params)
    sol = solve_box_qp(hess, grad, du_lo, du_hi, tol=cfg.kkt_tol)

    lo, hi = input_bounds(params, n)
    du = sol.x.reshape(n, NU)
    mem.last_kkt = sol.kkt_residual
    mem.qp_converged = sol.converged

    # reference cost = what the current inputs actually achieve from the
    # embedded measurement; evaluated together with the full step in one
    # batched rollout, backtracking (rare) rolls out further scales singly
    lo_n, hi_n = lo.reshape(n, NU), hi.reshape(n, NU)
    full_inputs = np.clip(mem.inputs + du, lo_n, hi_n)
    pair = _rollout(model, mem.states[0],
                    np.stack([mem.inputs, full_inputs]), cfg.t_step, params)
    base_states, trial_states = pair[0], pair[1]
    base_cost = ocp_cost(base_states, mem.inputs, refs, cfg)
    trial_inputs = full_inputs
    scale = 1.0
    for _ in range(12):
        if ocp_cost(trial_states, trial_inputs, refs, cfg) <= base_cost:
            mem.inputs = trial_inputs
            mem.states = trial_states
            return float(scale * np.max(np.abs(du))) if du.size else 0.0
        scale *= 0.5
        trial_inputs = np.clip(mem.inputs + scale * du, lo_n, hi_n)
        trial_states = _rollout(model, mem.states[0], trial_inputs, cfg.t_step, params)
    mem.states = base_states
    return 0.0


def solve_rti(mem: SolverMemory, x_hat: State, refs, cfg: OcpConfig,
              model: DynamicsModel, params: PhysicalParams) -> ControlInput:
    """SQP real-time iteration: embed, iterate, record, shift.

    Mutates mem (trajectories shifted for the next call) and returns the
    first optimized input.
    """
    if mem.states.shape != (cfg.horizon_n + 1, NX) or mem.inputs.shape != (cfg.horizon_n, NU):
        raise ConfigError("solver memory does not match the configured horizon")
    mem.states[0] = x_hat.as_vector()    # embed the measurement at node 0
    for _ in range(cfg.max_sqp_iters):
        step = sqp_iteration(mem, refs, cfg, model, params)
        if step < 1e-12:
            break
    mem.last_cost = ocp_cost(mem.states, mem.inputs, refs, cfg)
    u_star_0 = ControlInput.from_vector(mem.inputs[0].copy())

    # shift one step for the next call's warm start
    last = discrete_dynamics_vec(model, mem.states[-1], mem.inputs[-1],
                                 cfg.t_step, params)
    mem.states[:-1] = mem.states[1:]
    mem.states[-1] = last
    mem.inputs[:-1] = mem.inputs[1:]
    return u_star_0
