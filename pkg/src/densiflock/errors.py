"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A run description is malformed or violates a parameter constraint."""


class IntegrationFault(RuntimeError):
    """The integrator produced non-finite state; carries the failing step index."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite state produced at step {step}")
