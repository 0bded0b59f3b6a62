"""fbf-tools — stochastic inertial forward-backward-forward splitting and experiments."""

__version__ = "0.1.0"
