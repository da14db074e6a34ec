"""Exception types shared across the package."""


class FedTabError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(FedTabError):
    """Invalid model spec, train config, or service configuration."""


class ShapeError(FedTabError):
    """Dimension mismatch between weights, layouts, or feature rows."""


class IngestionError(FedTabError):
    """CSV parse failure; message names the offending row and column."""


class ImputationError(FedTabError):
    """Imputation cannot be fitted; message names the feature."""


class GenerationError(FedTabError):
    """Synthetic cohort targets are infeasible under the ground truth."""


class AggregationError(FedTabError):
    """Model updates with incompatible layouts cannot be averaged."""


class MetricError(FedTabError):
    """Metric undefined for the given inputs (e.g. one-class AUC)."""


class ProtocolError(FedTabError):
    """Message violates the wire schema whitelist."""


class ExperimentError(FedTabError):
    """A sub-run of an experiment plan failed; message names the setting."""
