"""Exception types raised across the package."""


class SptopoError(Exception):
    """Base class; ``stage`` names the pipeline stage when known."""

    stage = "unknown"


class DimensionError(SptopoError, ValueError):
    stage = "numkit"


class DomainError(SptopoError, ValueError):
    stage = "numkit"


class TrainingError(SptopoError, RuntimeError):
    stage = "train"


class IngestionError(SptopoError, ValueError):
    stage = "load"


class ParseError(IngestionError):
    pass


class PreprocessingError(SptopoError, ValueError):
    stage = "preprocess"


class ConfigError(SptopoError, ValueError):
    stage = "config"


class GraphError(SptopoError, ValueError):
    stage = "graph"


class OracleError(SptopoError, ValueError):
    stage = "topology"


class ImageError(SptopoError, ValueError):
    stage = "topology"


class TopologyError(SptopoError, RuntimeError):
    stage = "topology"


class DataError(SptopoError, ValueError):
    stage = "model"


class ContractError(SptopoError, ValueError):
    stage = "model"


class MetricError(SptopoError, ValueError):
    stage = "metrics"
