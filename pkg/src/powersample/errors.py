"""Exception hierarchy shared across the package."""


class PowerSampleError(Exception):
    """Base class for all package errors."""


class InputError(PowerSampleError, ValueError):
    """An argument violates a documented precondition."""


class ModelError(PowerSampleError):
    """A token model produced an invalid next-token distribution."""


class BudgetExceeded(PowerSampleError):
    """An exact computation would exceed its enumeration budget."""

    def __init__(self, message, required=None, budget=None):
        super().__init__(message)
        self.required = required
        self.budget = budget


class DegeneracyError(PowerSampleError):
    """Every particle or candidate carries zero weight."""


class ValidationError(PowerSampleError):
    """A numerical object failed an invariant check (e.g. a non-stationary kernel)."""


class UnsupportedError(PowerSampleError):
    """The operation is not defined for this kind of object."""


class ConfigError(PowerSampleError):
    """An experiment configuration is malformed."""


class BackendError(PowerSampleError):
    """Base class for remote model failures."""


class TransportError(BackendError):
    """The logprob service could not be reached after all retries."""


class ProtocolError(BackendError):
    """The logprob service returned a malformed or inconsistent payload."""


class CapabilityError(BackendError):
    """The backend cannot serve the request (prefix too long, approximate logprobs, ...)."""
