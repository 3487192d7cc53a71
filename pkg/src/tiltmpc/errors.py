"""Exception types shared across the package."""


class TiltMpcError(Exception):
    """Base class for package errors."""


class ConfigError(TiltMpcError, ValueError):
    """Invalid configuration value or unknown config key."""


class HoverInfeasibleError(TiltMpcError, ValueError):
    """Required hover thrust lies outside the per-rotor thrust bounds."""


class NonFiniteStateError(TiltMpcError, ArithmeticError):
    """Integration or optimization produced NaN/Inf."""


class GroundContactError(TiltMpcError, RuntimeError):
    """Plant center of gravity reached z <= 0; simulation halts."""

    def __init__(self, time: float):
        self.time = time
        super().__init__(f"ground contact at t={time:.3f} s")


class CrashError(TiltMpcError, RuntimeError):
    """Closed-loop safety guard tripped (near-ground or runaway error)."""

    def __init__(self, time: float, reason: str):
        self.time = time
        self.reason = reason
        super().__init__(f"crash at t={time:.3f} s: {reason}")


class LogFormatError(TiltMpcError, ValueError):
    """Trajectory log file does not match the documented CSV schema."""


class GapError(TiltMpcError, ValueError):
    """Trajectory log has a time gap incompatible with label propagation."""


class CheckpointFormatError(TiltMpcError, ValueError):
    """Checkpoint file does not match the documented binary layout."""
