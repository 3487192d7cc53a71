"""Energy-regularized residual-dynamics NMPC for a tiltable quadrotor."""

__version__ = "0.1.0"
