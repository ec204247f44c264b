"""Vortex dynamics of the complex Ginzburg-Landau equation on the flat torus."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BadCutoff,
    CollisionError,
    ConfigError,
    CoreUnresolved,
    InconsistentCirculation,
    NoConvergence,
    SingularPoint,
    StepFailure,
    StepTooLarge,
    TorusVortexError,
)
from .torus import VortexConfiguration  # noqa: E402

__all__ = [
    "BadCutoff",
    "CollisionError",
    "ConfigError",
    "CoreUnresolved",
    "InconsistentCirculation",
    "NoConvergence",
    "SingularPoint",
    "StepFailure",
    "StepTooLarge",
    "TorusVortexError",
    "VortexConfiguration",
    "__version__",
]
