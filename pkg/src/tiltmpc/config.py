"""Experiment configuration from INI-style files.

Sections [params], [disturbance], [ocp], [train], and [scenario.<name>]
map one-to-one onto the corresponding dataclasses; keys are the field
names, vectors are comma-separated floats. Unknown sections or keys are
errors rather than silently ignored.
"""

import configparser
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .ocp import OcpConfig
from .params import PhysicalParams
from .plant import DisturbanceConfig, default_disturbance
from .scenarios import SCENARIO_BUILDERS
from .training import TrainConfig


def _float(text: str) -> float:
    return float(text)


def _int(text: str) -> int:
    return int(text)


def _str(text: str) -> str:
    return text.strip()


def _vec(n: int, shape=None):
    def convert(text: str) -> np.ndarray:
        parts = [p for p in text.replace(",", " ").split() if p]
        if len(parts) != n:
            raise ValueError(f"expected {n} numbers, got {len(parts)}")
        arr = np.array([float(p) for p in parts])
        return arr.reshape(shape) if shape is not None else arr
    return convert


_PARAMS_FIELDS = {
    "mass_kg": _float,
    "inertia_diag": _vec(3),
    "thrust_coeff": _float,
    "drag_torque_coeff": _float,
    "rotor_pos_body": _vec(12, (4, 3)),
    "rotor_dir": _vec(4),
    "arm_rot_body": _vec(36, (4, 3, 3)),
    "f_min": _float,
    "f_max": _float,
    "servo_limit_rad": _float,
    "t_servo": _float,
    "gravity": _float,
}

_DISTURBANCE_FIELDS = {
    "thrust_gain_error": _float,
    "thrust_bias": _float,
    "drag_coeff": _vec(3),
    "ground_effect_rotor_radius": _float,
    "ground_effect_cutoff_height": _float,
    "noise_std_pos": _float,
    "noise_std_vel": _float,
    "rng_seed": _int,
}

_OCP_FIELDS = {
    "horizon_n": _int,
    "t_step": _float,
    "t_samp": _float,
    "q_diag": _vec(17),
    "r_diag": _vec(8),
    "qn_diag": _vec(17),
    "max_sqp_iters": _int,
    "kkt_tol": _float,
}

_TRAIN_FIELDS = {
    "lambda_e": _float,
    "epochs": _int,
    "batch_size": _int,
    "seed": _int,
    "weight_decay": _float,
    "energy_variant": _str,
    "val_fraction": _float,
}

_SCENARIO_FIELDS = {
    "duration": _float,
}


@dataclass
class ExperimentConfig:
    params: PhysicalParams = field(default_factory=PhysicalParams)
    disturbance: DisturbanceConfig = field(default_factory=default_disturbance)
    ocp: OcpConfig = field(default_factory=OcpConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    scenario_durations: dict = field(default_factory=dict)


def _section_kwargs(parser, section: str, converters: dict) -> dict:
    out = {}
    for key, raw in parser.items(section):
        if key not in converters:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        try:
            out[key] = converters[key](raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r} in [{section}]: {exc}") from exc
    return out


def load_config(path) -> ExperimentConfig:
    """Parse an experiment config file; absent keys keep their defaults."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str       # keys are case-sensitive field names
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc

    if parser.defaults():
        raise ConfigError("[DEFAULT] section is not supported")

    cfg = ExperimentConfig()
    for section in parser.sections():
        if section == "params":
            cfg.params = PhysicalParams(**_section_kwargs(parser, section, _PARAMS_FIELDS))
        elif section == "disturbance":
            kwargs = _section_kwargs(parser, section, _DISTURBANCE_FIELDS)
            cfg.disturbance = DisturbanceConfig(**{
                **_as_kwargs(default_disturbance()), **kwargs})
        elif section == "ocp":
            cfg.ocp = OcpConfig(**_section_kwargs(parser, section, _OCP_FIELDS))
        elif section == "train":
            cfg.train = TrainConfig(**_section_kwargs(parser, section, _TRAIN_FIELDS))
        elif section.startswith("scenario."):
            name = section[len("scenario."):]
            if name not in SCENARIO_BUILDERS:
                raise ConfigError(f"unknown scenario section [{section}]")
            kwargs = _section_kwargs(parser, section, _SCENARIO_FIELDS)
            if "duration" in kwargs:
                cfg.scenario_durations[name] = kwargs["duration"]
        else:
            raise ConfigError(f"unknown config section [{section}]")
    return cfg


def _as_kwargs(dist: DisturbanceConfig) -> dict:
    return {name: getattr(dist, name) for name in _DISTURBANCE_FIELDS}
