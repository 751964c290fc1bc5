"""Exception types shared across factors."""


class InvalidEvaluation(ValueError):
    """A factor cannot be evaluated at the current state (skip it this iteration)."""


class ConfigError(ValueError):
    pass
