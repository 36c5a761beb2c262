"""Exception types shared across the package."""


class OutfitKitError(Exception):
    """Base class for all package errors."""


class ShapeError(OutfitKitError):
    """Tensor dimensions do not match what an operation requires."""


class ConfigError(OutfitKitError):
    """Invalid model or training configuration."""


class InputError(OutfitKitError):
    """Malformed or out-of-contract input data."""


class NumericError(OutfitKitError):
    """NaN/Inf detected, or a computation left the finite range."""


class DataError(OutfitKitError):
    """Dataset files are missing, malformed, or violate split invariants."""


class MetricError(OutfitKitError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""


class CheckpointError(OutfitKitError):
    """Checkpoint or index file is corrupt, or incompatible with the model."""


class TrainingDiverged(OutfitKitError):
    """Loss became non-finite during training."""
