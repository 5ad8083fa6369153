"""Neighborhood-based query refinement.

Each query vector is replaced by a normalized blend of itself and the
mean of its k nearest gallery vectors under cosine distance:

    q' = normalize(alpha * q + (1 - alpha) * mean(top-k neighbors))

alpha=1 is an exact identity. Gallery rows flagged in ``exclude`` never
enter the neighbor mean (low-quality-sample opt-out).
"""

from __future__ import annotations

import numpy as np

from .distances import ranked_indices
from .errors import NormalizationError, ParameterError, ShapeError
from .vectors import EmbeddingSet

DEFAULT_K = 5
DEFAULT_ALPHA = 0.5


def expand_queries(
    queries: EmbeddingSet,
    gallery: EmbeddingSet,
    k: int = DEFAULT_K,
    alpha: float = DEFAULT_ALPHA,
    exclude: np.ndarray | None = None,
) -> EmbeddingSet:
    if not queries.normalized or not gallery.normalized:
        raise NormalizationError("expand_queries requires normalized inputs")
    if queries.dim != gallery.dim:
        raise ShapeError(
            f"dimension mismatch: queries dim {queries.dim} vs gallery dim "
            f"{gallery.dim}"
        )
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha {alpha} outside [0, 1]")
    if alpha == 1.0:
        # exact identity regardless of k
        return queries.with_rows(queries.data.copy())

    if exclude is not None:
        exclude = np.asarray(exclude, dtype=bool)
        if exclude.shape != (gallery.count,):
            raise ShapeError(
                f"exclude mask shape {exclude.shape} does not match gallery "
                f"count {gallery.count}"
            )
        eligible = int((~exclude).sum())
    else:
        eligible = gallery.count
    if k < 1 or k > eligible:
        raise ParameterError(
            f"k={k} out of range for {eligible} eligible gallery rows"
        )

    q64 = queries.data.astype(np.float64)
    g64 = gallery.data.astype(np.float64)
    dvals = 1.0 - q64 @ g64.T
    if exclude is not None:
        dvals[:, exclude] = np.inf
    neighbors = ranked_indices(dvals)[:, :k]
    neighbor_mean = g64[neighbors].mean(axis=1)
    blended = alpha * q64 + (1.0 - alpha) * neighbor_mean

    norms = np.linalg.norm(blended, axis=1)
    zero = norms == 0.0
    if zero.any():
        idx = int(np.argmax(zero))
        raise NormalizationError(
            f"expanded query {idx} ('{queries.item_order[idx]}') cancelled to "
            "zero (antipodal neighbor mean)"
        )
    out = (blended / norms[:, None]).astype(np.float32)
    return EmbeddingSet(
        data=out, item_order=list(queries.item_order), normalized=True
    )
