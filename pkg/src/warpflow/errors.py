class WarpflowError(Exception):
    """Base class for errors raised by warpflow."""


class DomainError(WarpflowError, ValueError):
    """A radius at or below the space's domain floor."""


class ConfigurationError(WarpflowError, ValueError):
    pass


class IntegrationError(WarpflowError, RuntimeError):
    """The radial integrator could not continue; carries the last valid state."""

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class RangeError(WarpflowError, ValueError):
    def __init__(self, message, limit=None):
        super().__init__(message)
        self.limit = limit


class DiscretizationError(WarpflowError, ValueError):
    pass


class StepError(WarpflowError, ValueError):
    def __init__(self, message, bound=None):
        super().__init__(message)
        self.bound = bound


class GeometryError(WarpflowError, ValueError):
    pass


class ConstructionError(WarpflowError, ValueError):
    pass


class UsageError(WarpflowError, RuntimeError):
    pass
