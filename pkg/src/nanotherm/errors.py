"""Exception types shared by the simulator modules."""


class ConfigurationError(ValueError):
    """Invalid mesh, parameters, network or scenario configuration."""


class DataError(ValueError):
    """Malformed or physically inconsistent input data file."""


class NumericalError(RuntimeError):
    """Linear solver breakdown, singular system or failed convergence."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class VerificationError(RuntimeError):
    """A verification case could not produce a meaningful measurement."""
