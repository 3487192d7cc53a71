"""Simulated "true" plant: the analytical model plus injected mismatch.

Disturbances: multiplicative thrust gain error, additive per-rotor thrust
bias, linear world-frame drag, and a near-ground thrust amplification
(factor 1/(1-(R/4z)^2), clamped to [1,2], applied per rotor at the center
of gravity height whenever z is below a cutoff).  Measurement adds seeded
Gaussian noise to position and velocity only; the noise stream is indexed
by the plant's step counter, so stepping and measuring are pure functions
of (state, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import A, P, Q, V, State, state_deriv_vec
from .errors import ConfigError, GroundContactError, NonFiniteStateError
from .integrator import rk4_raw
from .params import PhysicalParams
from .quat import quat_normalize

PLANT_SUBSTEPS = 10


@dataclass(frozen=True)
class DisturbanceConfig:
    thrust_gain_error: float = 1.0
    thrust_bias: float = 0.0                 # N, added to every rotor thrust
    drag_coeff: np.ndarray = field(default_factory=lambda: np.zeros(3))  # N*s/m
    ground_effect_rotor_radius: float = 0.1  # m
    ground_effect_cutoff_height: float = 0.0  # m; 0 disables the effect
    noise_std_pos: float = 0.0
    noise_std_vel: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "drag_coeff", np.asarray(self.drag_coeff, dtype=float))
        if not 0.5 <= self.thrust_gain_error <= 1.5:
            raise ConfigError("thrust_gain_error must lie in [0.5, 1.5]")
        if self.drag_coeff.shape != (3,) or np.any(self.drag_coeff < 0):
            raise ConfigError("drag_coeff must be 3 non-negative entries")
        if not self.ground_effect_rotor_radius > 0:
            raise ConfigError("ground_effect_rotor_radius must be positive")
        if self.ground_effect_cutoff_height < 0:
            raise ConfigError("ground_effect_cutoff_height must be >= 0")
        if self.ground_effect_cutoff_height > 0 and not (
            self.ground_effect_cutoff_height > self.ground_effect_rotor_radius / 2
        ):
            raise ConfigError("cutoff height must exceed half the rotor radius")
        if self.noise_std_pos < 0 or self.noise_std_vel < 0:
            raise ConfigError("noise stds must be >= 0")


def identity_disturbance() -> DisturbanceConfig:
    return DisturbanceConfig()


def default_disturbance(seed: int = 0) -> DisturbanceConfig:
    """The mismatched plant used by the shipped experiments."""
    return DisturbanceConfig(
        thrust_gain_error=0.95,
        thrust_bias=0.0,
        drag_coeff=np.array([0.3, 0.3, 0.3]),
        ground_effect_rotor_radius=0.1,
        ground_effect_cutoff_height=0.6,
        noise_std_pos=0.001,
        noise_std_vel=0.002,
        rng_seed=seed,
    )


@dataclass(frozen=True)
class PlantState:
    state: State
    time: float = 0.0
    step_count: int = 0   # indexes the measurement-noise stream


def ground_effect_factor(z: float | np.ndarray, rotor_radius: float):
    """Thrust amplification near the ground, clamped to [1, 2].

    Monotone non-increasing in height and -> 1 far from the ground; below
    z = R/4 the raw expression diverges, so the clamp takes over.
    """
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_sq = np.square(rotor_radius / (4.0 * z))
        raw = 1.0 / (1.0 - ratio_sq)
    factor = np.where((z <= 0) | (ratio_sq >= 1.0) | (raw > 2.0), 2.0, raw)
    return np.maximum(factor, 1.0)


def _plant_deriv(x: np.ndarray, u: np.ndarray, dist: DisturbanceConfig,
                 params: PhysicalParams) -> np.ndarray:
    ue = u.copy()
    f = dist.thrust_gain_error * ue[..., 0:4] + dist.thrust_bias
    z = x[..., 2]
    if dist.ground_effect_cutoff_height > 0.0:
        factor = np.where(
            z < dist.ground_effect_cutoff_height,
            ground_effect_factor(z, dist.ground_effect_rotor_radius),
            1.0,
        )
        f = f * factor[..., None]
    ue[..., 0:4] = f
    d = state_deriv_vec(x, ue, params)
    d[..., V] = d[..., V] - dist.drag_coeff * x[..., V] / params.mass_kg
    return d


def plant_step(ps: PlantState, u, dt: float, dist: DisturbanceConfig,
               params: PhysicalParams) -> PlantState:
    """Advance the true plant by dt using RK4 at 10 substeps.

    Servo angles are clamped to their mechanical limit after every substep.
    Raises GroundContactError when the center of gravity reaches z <= 0.
    """
    uv = u.as_vector() if hasattr(u, "as_vector") else np.asarray(u, dtype=float)
    x = ps.state.as_vector()
    sub = dt / PLANT_SUBSTEPS
    for _ in range(PLANT_SUBSTEPS):
        x = rk4_raw(lambda xv, up: _plant_deriv(xv, up, dist, params), x, uv, sub)
        x[Q] = quat_normalize(x[Q])
        x[A] = np.clip(x[A], -params.servo_limit_rad, params.servo_limit_rad)
        if x[2] <= 0.0:
            raise GroundContactError(ps.time + dt)
    if not np.all(np.isfinite(x)):
        raise NonFiniteStateError("non-finite plant state")
    return PlantState(State.from_vector(x), ps.time + dt, ps.step_count + 1)


def measure(ps: PlantState, dist: DisturbanceConfig) -> State:
    """Noisy measurement of the full state (noise on p and v only).

    Deterministic: the draw depends only on (rng_seed, step_count), so a
    rerun with the same seed reproduces every measurement bit for bit.
    """
    x = ps.state.as_vector()
    if dist.noise_std_pos > 0.0 or dist.noise_std_vel > 0.0:
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=dist.rng_seed, spawn_key=(ps.step_count,))
        )
        noise = rng.normal(size=6)
        x[P] = x[P] + dist.noise_std_pos * noise[0:3]
        x[V] = x[V] + dist.noise_std_vel * noise[3:6]
    return State.from_vector(x)


def make_plant_state(state: State, time: float = 0.0) -> PlantState:
    return PlantState(state=state, time=time, step_count=0)
