"""Exception hierarchy shared by all modules."""


class NehariLabError(Exception):
    """Base class for errors raised by this package."""


class DomainError(NehariLabError, ValueError):
    """An argument lies outside the admissible region."""


class DegenerateInputError(NehariLabError, ValueError):
    """The pair is zero or has vanishing coupling where coupling is required."""


class NoProjectionError(NehariLabError):
    """The ray through a pair does not meet the Nehari set at the requested lambda."""

    def __init__(self, message, lambda_n=None):
        super().__init__(message)
        self.lambda_n = lambda_n


class SamplerError(NehariLabError):
    """No sampled direction landed in the coupling cone."""


class BranchFailureError(NehariLabError):
    """A constrained descent lost coupling or could not stay on its Nehari branch."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(NehariLabError, ValueError):
    """An experiment configuration violates the standing assumptions."""
