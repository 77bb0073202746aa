"""Exception types raised across the package."""


class StructuralError(ValueError):
    """Arrays with inconsistent shapes or invalid probability tables."""


class InvalidSpecError(ValueError):
    """An instance specification that cannot be constructed."""


class AssumptionError(ValueError):
    """An instance that violates the structural assumption a solver needs."""


class SolverError(RuntimeError):
    """A numerical solver that failed to converge."""


class ConfigError(ValueError):
    """A malformed experiment or learner configuration."""
