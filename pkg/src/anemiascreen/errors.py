"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A config value, flag, or environment variable is unusable."""


class EmptyDatasetError(RuntimeError):
    """A dataset root contained no decodable images."""


class CheckpointError(RuntimeError):
    """A model checkpoint is missing, corrupt, or incompatible."""


class PretrainedWeightsUnavailable(RuntimeError):
    """Pretrained backbone weights were requested but cannot be obtained."""


class TrainingDiverged(RuntimeError):
    """Loss or gradients became non-finite during training."""


class UndefinedMetricError(ValueError):
    """A metric is mathematically undefined for the given inputs."""


class MigrationError(RuntimeError):
    """The database backend could not be migrated or reached."""
