"""Bootstrapped adversarial curriculum learning for small DQN and PPO agents."""
from .errors import (BclError, ConfigError, IntegrityError, NumericError, ProtocolError,
                     ShapeError, TrainingAborted)

__version__ = "0.1.0"

__all__ = ["BclError", "ConfigError", "IntegrityError", "NumericError", "ProtocolError",
           "ShapeError", "TrainingAborted", "__version__"]
