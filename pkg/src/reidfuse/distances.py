"""Normalization and distance kernels.

Everything downstream consumes *distances* (d = 1 - cosine similarity);
the conversion is monotone, so rankings match similarity-based ones.
Dot products accumulate in float64 and are stored as float32. Ties are
always broken by ascending gallery index so runs are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NormalizationError, ParameterError, ShapeError
from .vectors import EmbeddingSet


class Metric(str, Enum):
    COSINE_DISTANCE = "cosine_distance"
    EUCLIDEAN = "euclidean"


@dataclass(frozen=True)
class DistanceMatrix:
    """Query x gallery dissimilarities under a declared metric."""

    values: np.ndarray
    metric: Metric = Metric.COSINE_DISTANCE

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise ShapeError(f"distance values must be 2-D, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ShapeError("distance values must all be finite")
        object.__setattr__(self, "values", values)

    @property
    def n_query(self) -> int:
        return self.values.shape[0]

    @property
    def n_gallery(self) -> int:
        return self.values.shape[1]


def l2_normalize(emb: EmbeddingSet) -> EmbeddingSet:
    """Scale every row to unit L2 norm; direction is preserved.

    Raises NormalizationError naming the first zero-norm row.
    """
    data = emb.data.astype(np.float64)
    norms = np.linalg.norm(data, axis=1)
    zero = norms == 0.0
    if zero.any():
        idx = int(np.argmax(zero))
        raise NormalizationError(
            f"row {idx} ('{emb.item_order[idx]}') has zero norm and cannot "
            "be normalized"
        )
    out = (data / norms[:, None]).astype(np.float32)
    return EmbeddingSet(data=out, item_order=list(emb.item_order), normalized=True)


def cosine_distance_matrix(queries: EmbeddingSet, gallery: EmbeddingSet) -> DistanceMatrix:
    """values[i][j] = 1 - dot(q_i, g_j) for unit-norm inputs."""
    if not queries.normalized or not gallery.normalized:
        raise NormalizationError(
            "cosine_distance_matrix requires both inputs normalized "
            "(call l2_normalize first)"
        )
    if queries.dim != gallery.dim:
        raise ShapeError(
            f"dimension mismatch: queries dim {queries.dim} vs gallery dim "
            f"{gallery.dim}"
        )
    sims = queries.data.astype(np.float64) @ gallery.data.astype(np.float64).T
    values = (1.0 - sims).astype(np.float32)
    return DistanceMatrix(values=values, metric=Metric.COSINE_DISTANCE)


def ranked_indices(values: np.ndarray) -> np.ndarray:
    """Per-row ranking by nondecreasing value, ties by ascending index."""
    return np.argsort(values, axis=1, kind="stable")


def top_k(dist: DistanceMatrix, k: int) -> np.ndarray:
    """First k gallery indices per query under the deterministic ranking."""
    if k < 1 or k > dist.n_gallery:
        raise ParameterError(
            f"k={k} out of range for gallery of size {dist.n_gallery}"
        )
    return ranked_indices(dist.values)[:, :k]
