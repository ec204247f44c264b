"""Exception hierarchy shared by all modules."""


class TorusVortexError(Exception):
    """Base class for every error raised by this package."""


class StepTooLarge(TorusVortexError):
    """A single step moved a point by a quarter period or more."""


class SingularPoint(TorusVortexError):
    """The Green's function was evaluated on a lattice point."""


class BadCutoff(TorusVortexError):
    pass


class CollisionError(TorusVortexError):
    """Two vortices coincide (torus distance below 1e-10)."""


class StepFailure(TorusVortexError):
    """RK4 step could not be made safe by repeated halving."""


class InconsistentCirculation(TorusVortexError):
    pass


class CoreUnresolved(TorusVortexError):
    """Core size is smaller than two grid spacings."""


class NoConvergence(TorusVortexError):
    pass


class ConfigError(TorusVortexError):
    """Invalid run configuration; ``path`` locates the offending key."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
