"""Closed-loop experiment harness: run a scenario, log at the model step.

The loop runs at the sampling period: measure, solve one real-time
iteration, hold the first input over the sample. Rows are logged on the
model-step grid (every t_step), which is the spacing the label builder
expects. Safety guards and solver-side numerical blowups convert runaway
runs into a crashed-but-valid log instead of an exception.
"""

import numpy as np

from .dynamics import ControlInput, State
from .errors import ConfigError, GroundContactError, NonFiniteStateError
from .logs import TrajectoryLog
from .network import xi_from_state_input
from .ocp import V, DynamicsModel, OcpConfig, init_memory, residual_accel, solve_rti
from .params import PhysicalParams
from .plant import DisturbanceConfig, PlantState, measure, plant_step
from .quat import quat_conj, quat_log_map, quat_mul
from .scenarios import Scenario, data_collection_scenario

LOW_ALTITUDE_M = 0.02
TRACKING_LIMIT_M = 2.0
ATTITUDE_LIMIT_RAD = np.pi / 2.0


def predicted_accel(model: DynamicsModel, x_vec: np.ndarray, u_vec: np.ndarray,
                    params: PhysicalParams) -> np.ndarray:
    """Controller-side linear acceleration at (state, input), world frame.

    This is the trace the smoothness metric runs on: the analytical
    acceleration plus the network residual when one is attached.
    """
    from .dynamics import state_deriv_vec
    a = state_deriv_vec(x_vec, u_vec, params)[..., V]
    if model.mode == "neural":
        a = a + residual_accel(model, xi_from_state_input(x_vec, u_vec))
    return a


def _attitude_angle(qa: np.ndarray, qb: np.ndarray) -> float:
    return float(np.linalg.norm(quat_log_map(quat_mul(qa, quat_conj(qb)))))


def _crash_reason(ps: PlantState, ref, t: float, grace_s: float) -> str | None:
    if ps.state.p[2] < LOW_ALTITUDE_M and t > grace_s:
        return "low altitude"
    if np.linalg.norm(ps.state.p - ref.x_ref.p) > TRACKING_LIMIT_M:
        return "tracking diverged"
    if _attitude_angle(ps.state.q, ref.x_ref.q) > ATTITUDE_LIMIT_RAD:
        return "attitude diverged"
    return None


def run_scenario(scenario: Scenario, model: DynamicsModel, params: PhysicalParams,
                 dist: DisturbanceConfig, ocp_cfg: OcpConfig | None = None) -> TrajectoryLog:
    """Track the scenario reference in closed loop and log the run.

    Deterministic for a fixed DisturbanceConfig seed. Returns a crashed
    (truncated) log when a safety guard trips or the controller's model
    rollout goes non-finite.
    """
    cfg = OcpConfig() if ocp_cfg is None else ocp_cfg
    ratio = cfg.t_step / cfg.t_samp
    n_sub = int(round(ratio))
    if abs(ratio - n_sub) > 1e-9 or n_sub < 1:
        raise ConfigError("t_step must be an integer multiple of t_samp")
    n_samples = int(round(scenario.duration / cfg.t_samp))

    mem = init_memory(scenario.initial_state, cfg, params)
    ps = PlantState(scenario.initial_state.copy())
    rows_t, rows_x, rows_u, rows_am, rows_ref = [], [], [], [], []
    crashed = False
    crash_reason = ""

    for k in range(n_samples + 1):
        t = k * cfg.t_samp
        refs = [scenario.reference_fn(t + j * cfg.t_step) for j in range(cfg.horizon_n + 1)]
        x_hat = measure(ps, dist)
        try:
            u = solve_rti(mem, x_hat, refs, cfg, model, params)
        except NonFiniteStateError:
            # a bad residual model can blow up the solver's internal
            # rollout; the vehicle is lost either way, so end the episode
            # as a crash rather than aborting the whole experiment
            crashed, crash_reason = True, "model diverged"
            break
        if k % n_sub == 0:
            rows_t.append(t)
            rows_x.append(x_hat.as_vector())
            rows_u.append(u.as_vector())
            rows_am.append(predicted_accel(model, x_hat.as_vector(), u.as_vector(), params))
            rows_ref.append(refs[0].x_ref.p.copy())
        if k == n_samples:
            break
        try:
            ps = plant_step(ps, u, cfg.t_samp, dist, params)
        except GroundContactError:
            crashed, crash_reason = True, "ground contact"
            break
        reason = _crash_reason(ps, scenario.reference_fn(t + cfg.t_samp),
                               t + cfg.t_samp, scenario.crash_grace_s)
        if reason is not None:
            crashed, crash_reason = True, reason
            break

    return TrajectoryLog(
        t=np.array(rows_t),
        states=np.array(rows_x),
        inputs=np.array(rows_u),
        accel_model=np.array(rows_am),
        ref_pos=np.array(rows_ref),
        crashed=crashed,
        crash_reason=crash_reason,
    )


def collect_data(minutes: float, params: PhysicalParams, dist: DisturbanceConfig,
                 ocp_cfg: OcpConfig | None = None) -> TrajectoryLog:
    """Excitation flight under the analytical controller on the given plant."""
    scenario = data_collection_scenario(params, minutes)
    return run_scenario(scenario, DynamicsModel(), params, dist, ocp_cfg)
