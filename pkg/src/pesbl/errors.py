"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration, malformed inputs, or inconsistent shapes."""


class SolverInstability(RuntimeError):
    """Time integration produced non-finite or runaway values."""


class DegenerateDataError(ValueError):
    """Input carries no usable signal (zero variance or zero norm)."""


class TrainingError(RuntimeError):
    """Denoiser training diverged (non-finite loss)."""
