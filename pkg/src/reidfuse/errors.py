"""Exception hierarchy shared by all engine modules.

Every error carries a stable ``category`` string so the CLI can report
machine-readable failure categories.
"""


class EngineError(Exception):
    """Base class for all errors raised by this package."""

    category = "internal"


class ManifestError(EngineError):
    """Malformed or constraint-violating manifest content."""

    category = "manifest"


class VectorFormatError(EngineError):
    """Corrupt, truncated, or mismatched vector file."""

    category = "vector-format"


class ShapeError(EngineError):
    """Dimension or count mismatch between paired inputs."""

    category = "shape"


class NormalizationError(EngineError):
    """Zero-norm rows, or an operation that requires normalized input."""

    category = "normalization"


class ParameterError(EngineError):
    """Out-of-range or inconsistent operation parameters."""

    category = "parameter"


class ConfigError(EngineError):
    """Experiment configuration that fails schema validation."""

    category = "config"


class PipelineError(EngineError):
    """Stage ordering or stage/input combinations that cannot execute."""

    category = "pipeline"


class EvaluationError(EngineError):
    """Evaluation preconditions violated (e.g. no query has a positive)."""

    category = "evaluation"
