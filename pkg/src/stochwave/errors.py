"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A parameter or config file entry violates the published constraints.

    ``key_path`` identifies the offending entry (e.g. ``"scheme.tau"``) when
    the error originates from a config file.
    """

    def __init__(self, message, key_path=None):
        self.key_path = key_path
        if key_path:
            message = f"{key_path}: {message}"
        super().__init__(message)


class ShapeError(ValueError):
    """Structural mismatch between operands (e.g. differing mode counts)."""


class AliasingError(ValueError):
    """Grid too small for the requested number of spectral modes."""


class SolverError(RuntimeError):
    """Implicit solver failed to converge.

    Carries the last residual and, when raised from a time loop, the step
    index at which the failure occurred.
    """

    def __init__(self, message, residual=None, step_index=None):
        super().__init__(message)
        self.residual = residual
        self.step_index = step_index
