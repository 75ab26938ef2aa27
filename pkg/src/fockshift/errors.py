"""Error and warning types shared across the package."""


class SpaceSizeError(ValueError):
    """Requested Hilbert space exceeds the configured dimension cap."""


class TruncationWarning(UserWarning):
    """A constructed state leaks noticeable probability past the truncation."""


class ValidityWarning(UserWarning):
    """Operating point is outside the dispersive-regime validity bounds."""


class SchedulingError(ValueError):
    """Requested rotation targets cannot be met with the given detunings."""


class CalibrationError(RuntimeError):
    """A calibration scan did not produce a usable dip."""


class FitError(RuntimeError):
    """A least-squares fit failed to converge or is degenerate."""


class RegressionError(ValueError):
    """Linear regression design matrix is rank deficient."""


class ConfigError(ValueError):
    """Experiment configuration failed schema validation."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"config error at '{path}': {message}")
