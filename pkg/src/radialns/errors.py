"""Exception hierarchy shared by the library and the command-line front end."""


class DomainError(ValueError):
    """Evaluation requested outside the region where a field or profile is defined."""


class AfterBlowupError(DomainError):
    """Time at or past the detected vanishing of the scale factor."""


class SupportBoundaryError(DomainError):
    """A finite-difference stencil straddles the edge of a compactly supported density."""


class ConfigError(ValueError):
    """Invalid parameters or configuration document."""


class IntegrationError(RuntimeError):
    """The ODE integrator could not make progress."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested accuracy."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error
