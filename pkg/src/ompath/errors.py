"""Exception types shared across the package."""


class OmpathError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(OmpathError, ValueError):
    """Operands declare incompatible space dimensions."""


class InvalidMeasure(OmpathError, ValueError):
    """A measure violates its invariants (weights, finiteness, shape)."""


class InvalidDrift(OmpathError, ValueError):
    """A drift specification violates its invariants."""


class InvalidPath(OmpathError, ValueError):
    """A discretized path violates its invariants."""


class SimulationBlowup(OmpathError, FloatingPointError):
    """A simulated state became non-finite.

    Attributes
    ----------
    step : int
        Time-step index at which the blow-up was detected.
    particle : int or None
        Particle / trajectory index, when identifiable.
    """

    def __init__(self, message, step, particle=None):
        super().__init__(message)
        self.step = step
        self.particle = particle


class NonConvergence(OmpathError, RuntimeError):
    """An iterative solver exhausted its budget.

    Carries the best iterate found so that callers can inspect or persist
    partial results.
    """

    def __init__(self, message, best_path=None, residual_norm=None, initial_velocity=None):
        super().__init__(message)
        self.best_path = best_path
        self.residual_norm = residual_norm
        self.initial_velocity = initial_velocity


class ConfigError(OmpathError, ValueError):
    """A run configuration could not be parsed or validated.

    Attributes
    ----------
    field : str or None
        Offending configuration key, when known.
    line : int or None
        1-based line number in the config file, when known.
    """

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line
