"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all pipeline failures."""


class SchemaError(PipelineError):
    """A CSV table is missing required columns or a row is unreadable."""


class DataError(PipelineError):
    """A record violates an invariant the pipeline depends on."""


class ConfigError(PipelineError):
    """Invalid configuration or an unusable combination of inputs."""


class DimensionError(PipelineError):
    """Operands have inconsistent shapes."""


class TrainingError(PipelineError):
    """Training produced a non-finite quantity or cannot proceed."""
