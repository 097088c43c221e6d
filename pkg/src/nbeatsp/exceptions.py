"""Exception hierarchy shared by every module of the package."""


class NBeatsError(Exception):
    """Base class for all errors raised by nbeatsp."""


class DimensionError(NBeatsError, ValueError):
    """Operand shapes are incompatible."""


class DataError(NBeatsError, ValueError):
    """Malformed or inconsistent dataset input."""


class MetricError(NBeatsError, ValueError):
    """A metric is undefined for the given inputs."""


class TrainingError(NBeatsError, RuntimeError):
    """Training diverged or could not run."""


class EnsembleError(NBeatsError, RuntimeError):
    """Ensemble construction, routing or combination failed."""


class SerializationError(NBeatsError, ValueError):
    """A model or ensemble container could not be read back."""


class ConfigError(NBeatsError, ValueError):
    """Run configuration is invalid."""
