"""Physical parameters of the tiltable-rotor platform.

The platform has four arms in the body x-y plane.  Each arm carries a
rotor that tilts about the arm axis through a servo with first-order lag.
Arm frames are rotated about body z so their x axis points outward along
the arm; the tilt angle alpha rotates the rotor frame about that x axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .quat import rotation_about_z

GRAVITY = 9.81


def _default_rotor_positions() -> np.ndarray:
    # arms at 45/135/225/315 deg; built from one shared constant so the
    # symmetric layout cancels exactly in floating point
    c = 0.2 * np.cos(np.pi / 4)
    return np.array(
        [[c, c, 0.0], [-c, c, 0.0], [-c, -c, 0.0], [c, -c, 0.0]]
    )


def arm_frames_from_positions(rotor_pos_body: np.ndarray) -> np.ndarray:
    """Body->arm-frame rotation per rotor: x axis outward along the arm."""
    frames = np.empty((rotor_pos_body.shape[0], 3, 3))
    for r, p in enumerate(rotor_pos_body):
        frames[r] = rotation_about_z(np.arctan2(p[1], p[0]))
    return frames


@dataclass(frozen=True)
class PhysicalParams:
    """Rigid-body and actuation constants (synthetic default platform)."""

    mass_kg: float = 2.0
    inertia_diag: np.ndarray = field(default_factory=lambda: np.array([0.02, 0.02, 0.04]))
    thrust_coeff: float = 1.3e-5      # N per (rad/s)^2
    drag_torque_coeff: float = 2.1e-7  # N*m per (rad/s)^2
    rotor_pos_body: np.ndarray = field(default_factory=_default_rotor_positions)
    rotor_dir: np.ndarray = field(default_factory=lambda: np.array([1.0, -1.0, 1.0, -1.0]))
    arm_rot_body: np.ndarray | None = None
    f_min: float = 0.0
    f_max: float = 15.0
    servo_limit_rad: float = np.pi / 2
    t_servo: float = 0.048
    gravity: float = GRAVITY

    def __post_init__(self):
        object.__setattr__(self, "inertia_diag", np.asarray(self.inertia_diag, dtype=float))
        object.__setattr__(self, "rotor_pos_body", np.asarray(self.rotor_pos_body, dtype=float))
        object.__setattr__(self, "rotor_dir", np.asarray(self.rotor_dir, dtype=float))
        if self.arm_rot_body is None:
            object.__setattr__(self, "arm_rot_body", arm_frames_from_positions(self.rotor_pos_body))
        else:
            object.__setattr__(self, "arm_rot_body", np.asarray(self.arm_rot_body, dtype=float))
        self._validate()

    def _validate(self):
        if not self.mass_kg > 0:
            raise ConfigError("mass_kg must be positive")
        if self.inertia_diag.shape != (3,) or not np.all(self.inertia_diag > 0):
            raise ConfigError("inertia_diag must be 3 positive entries")
        if not (self.thrust_coeff > 0 and self.drag_torque_coeff > 0):
            raise ConfigError("thrust_coeff and drag_torque_coeff must be positive")
        if self.rotor_pos_body.shape != (4, 3):
            raise ConfigError("rotor_pos_body must have shape (4, 3)")
        if self.rotor_dir.shape != (4,) or not np.all(np.abs(self.rotor_dir) == 1.0):
            raise ConfigError("rotor_dir must be four entries of +-1")
        if abs(float(np.sum(self.rotor_dir))) > 0.0:
            raise ConfigError("rotor_dir must sum to zero (balanced yaw authority)")
        if self.arm_rot_body.shape != (4, 3, 3):
            raise ConfigError("arm_rot_body must have shape (4, 3, 3)")
        if not (0.0 <= self.f_min < self.f_max):
            raise ConfigError("need 0 <= f_min < f_max")
        if not self.servo_limit_rad > 0:
            raise ConfigError("servo_limit_rad must be positive")
        if not self.t_servo > 0:
            raise ConfigError("t_servo must be positive")
        if not self.gravity > 0:
            raise ConfigError("gravity must be positive")

    # rotor speed <-> thrust conversion (steady-state aerodynamic model)
    def rotor_speed_for_thrust(self, f):
        return np.sqrt(np.asarray(f, dtype=float) / self.thrust_coeff)

    def thrust_for_rotor_speed(self, omega):
        return self.thrust_coeff * np.square(np.asarray(omega, dtype=float))


def default_params() -> PhysicalParams:
    return PhysicalParams()
