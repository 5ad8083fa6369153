"""Retrieval, fusion, and evaluation engine for object re-identification."""

from .errors import (
    ConfigError,
    EngineError,
    EvaluationError,
    ManifestError,
    NormalizationError,
    ParameterError,
    PipelineError,
    ShapeError,
    VectorFormatError,
)
from .manifest import (
    ClassLabel,
    Condition,
    ItemRecord,
    Kind,
    Split,
    load_manifest,
    save_manifest,
    validate_records,
)
from .vectors import EmbeddingSet, load_vectors, read_vector_file, save_vectors, write_vector_file
from .distances import (
    DistanceMatrix,
    Metric,
    cosine_distance_matrix,
    l2_normalize,
    ranked_indices,
    top_k,
)
from .fusion import (
    FusionSpec,
    fuse_average,
    fuse_concat,
    fuse_conditional_percentile,
    fuse_dual_channel,
)
from .expansion import expand_queries
from .rerank import RerankParams, k_reciprocal_rerank
from .evaluation import (
    EvalReport,
    Protocol,
    average_precision,
    format_delta,
    mean_ap,
    relative_delta,
)
from .simulator import SimSpec, generate, identity_centroids, write_dataset
from .harness import (
    Experiment,
    RunSpec,
    execute_run,
    load_config,
    load_dataset,
    print_table,
    run_experiment,
    write_outputs,
)

__version__ = "0.1.0"
