"""Numerical laboratory for first-order Coulomb particle systems and their mean-field limit."""

__version__ = "0.1.0"

from .errors import (ConfigError, EvaluationError, IntegrationAbort, MflabError,  # noqa: F401
                     ParameterError, SingularityError)
from .nbody import ParticleConfig, RotationMatrix, Trajectory  # noqa: F401
from .profiles import RadialProfile, UniformBall  # noqa: F401
