class AerokinError(Exception):
    """Base class for package errors."""


class ContractError(AerokinError, ValueError):
    """An input violates an operation's precondition."""


class SamplingError(AerokinError, RuntimeError):
    """A rejection sampler exceeded its iteration cap."""


class ConvergenceError(AerokinError, RuntimeError):
    """An iterative solve or quadrature refinement did not converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InconsistencyError(AerokinError, RuntimeError):
    """Two routes to the same quantity disagree beyond tolerance."""


class CFLError(AerokinError, ValueError):
    """Time step exceeds the configured stability bound."""


class SimulationError(AerokinError, RuntimeError):
    """Non-finite state encountered during time stepping."""

    def __init__(self, message, dump_path=None):
        super().__init__(message)
        self.dump_path = dump_path


class ConfigError(AerokinError, ValueError):
    """Invalid configuration key or value."""
