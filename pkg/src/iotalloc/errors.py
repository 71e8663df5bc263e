"""Exception types shared across the package."""


class IotAllocError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(IotAllocError):
    """Invalid or unsatisfiable configuration (bad parameter, AP placement, ...)."""


class SingularInstanceError(IotAllocError):
    """A device has zero direct channel gain; the power system is degenerate."""


class DivergenceError(IotAllocError):
    """Fixed-point power iteration did not converge; the pinned rate targets are
    jointly unattainable under the current association."""

    def __init__(self, message, power=None, sweeps=None):
        super().__init__(message)
        self.power = power
        self.sweeps = sweeps


class IterationStallError(IotAllocError):
    """Outer surrogate loop stopped improving beyond tolerance."""
