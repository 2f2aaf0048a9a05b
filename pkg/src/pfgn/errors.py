"""Exception hierarchy. Each error carries a category used for CLI exit codes."""


class PfgnError(Exception):
    category = "internal"


class ConfigError(PfgnError, ValueError):
    category = "config"


class DimensionError(ConfigError):
    """Tensor shapes do not line up."""


class DomainError(PfgnError, ValueError):
    """A point was evaluated inside the body."""

    category = "config"


class PersistenceError(PfgnError, OSError):
    category = "io"


class DivergedError(PfgnError, FloatingPointError):
    """Non-finite values during training or sampling. ``step`` is the index where it happened."""

    category = "diverged"

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class MetricError(PfgnError, ArithmeticError):
    category = "metric"


class AutodiffError(PfgnError, RuntimeError):
    category = "internal"


EXIT_CODES = {"config": 2, "io": 3, "diverged": 4, "metric": 5, "internal": 70}
