"""Exception types shared across the package."""


class GsgiError(Exception):
    """Base class for all package errors."""


class ConfigError(GsgiError):
    """Invalid configuration value or mismatched dimensions."""


class UsageError(GsgiError):
    """Operation called in a state or with arguments it does not accept."""


class KernelError(GsgiError):
    """Tensor kernel invoked with inconsistent shapes."""


class WeightFormatError(GsgiError):
    """Weight file is corrupt, truncated, or does not match the network."""


class TrainingDiverged(GsgiError):
    """Training produced a non-finite loss; carries a diagnostic dump path."""

    def __init__(self, message, dump_path=None):
        super().__init__(message)
        self.dump_path = dump_path
