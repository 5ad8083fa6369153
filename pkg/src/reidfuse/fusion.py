"""Fusion strategies for multi-source embeddings and distance matrices.

Two families: vector-level fusion (average/concat, optionally weighted)
producing a new EmbeddingSet, and distance-level fusion (percentile
gating, dual-channel blending) producing a new DistanceMatrix. Sources
must be row-aligned: same count and identical item_order, which callers
establish by resolving refinement rows onto their base items first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distances import DistanceMatrix
from .errors import NormalizationError, ParameterError, ShapeError
from .vectors import EmbeddingSet

FUSION_METHODS = (
    "average",
    "weighted_average",
    "concat",
    "weighted_concat",
    "conditional_percentile",
    "dual_channel",
    "none",
)

VECTOR_METHODS = ("average", "weighted_average", "concat", "weighted_concat")
DISTANCE_METHODS = ("conditional_percentile", "dual_channel")

DEFAULT_PERCENTILE = 20.0
DEFAULT_MIX = 0.5

# how the percentile threshold population is formed
SCOPE_BEST_PER_QUERY = "best_per_query"
SCOPE_ALL_PAIRS = "all_pairs"


@dataclass
class FusionSpec:
    """Declarative description of one fusion strategy."""

    method: str = "none"
    sources: list[str] = field(default_factory=list)
    weights: list[float] | None = None
    percentile: float | None = None
    mix: float = DEFAULT_MIX
    percentile_scope: str = SCOPE_BEST_PER_QUERY

    def __post_init__(self):
        if self.method not in FUSION_METHODS:
            raise ParameterError(
                f"unknown fusion method {self.method!r} "
                f"(allowed: {', '.join(FUSION_METHODS)})"
            )
        if self.method in ("weighted_average", "weighted_concat"):
            if self.weights is None:
                raise ParameterError(f"method {self.method} requires weights")
        if self.weights is not None:
            if self.sources and len(self.weights) != len(self.sources):
                raise ParameterError(
                    f"{len(self.weights)} weights for {len(self.sources)} sources"
                )
            if any(w < 0 for w in self.weights):
                raise ParameterError("weights must be nonnegative")
            if sum(self.weights) <= 0:
                raise ParameterError("weights must sum to a positive value")
        if self.method == "conditional_percentile":
            if self.percentile is None:
                self.percentile = DEFAULT_PERCENTILE
            if not 0.0 <= self.percentile <= 100.0:
                raise ParameterError(
                    f"percentile {self.percentile} outside [0, 100]"
                )
        if self.percentile_scope not in (SCOPE_BEST_PER_QUERY, SCOPE_ALL_PAIRS):
            raise ParameterError(
                f"unknown percentile_scope {self.percentile_scope!r}"
            )
        if not 0.0 <= self.mix <= 1.0:
            raise ParameterError(f"mix {self.mix} outside [0, 1]")


def _check_aligned(sources, require_same_dim):
    if not sources:
        raise ParameterError("at least one source required")
    first = sources[0]
    for k, src in enumerate(sources[1:], start=1):
        if src.count != first.count:
            raise ShapeError(
                f"source {k} has {src.count} rows, source 0 has {first.count}"
            )
        if src.item_order != first.item_order:
            raise ShapeError(
                f"source {k} is not row-aligned with source 0 "
                "(item_order differs)"
            )
        if require_same_dim and src.dim != first.dim:
            raise ShapeError(
                f"source {k} has dim {src.dim}, source 0 has dim {first.dim}; "
                "average fusion requires equal dims (use concat for mixed dims)"
            )


def _resolve_weights(weights, m):
    if weights is None:
        return np.ones(m, dtype=np.float64)
    if len(weights) != m:
        raise ParameterError(f"{len(weights)} weights for {m} sources")
    w = np.asarray(weights, dtype=np.float64)
    if (w < 0).any() or w.sum() <= 0:
        raise ParameterError("weights must be nonnegative and sum to > 0")
    return w


def fuse_average(sources: list[EmbeddingSet], weights=None) -> EmbeddingSet:
    """Weighted elementwise mean of aligned sources, then L2-normalized."""
    _check_aligned(sources, require_same_dim=True)
    w = _resolve_weights(weights, len(sources))
    acc = np.zeros((sources[0].count, sources[0].dim), dtype=np.float64)
    for wk, src in zip(w, sources):
        acc += wk * src.data.astype(np.float64)
    acc /= w.sum()
    norms = np.linalg.norm(acc, axis=1)
    zero = norms == 0.0
    if zero.any():
        idx = int(np.argmax(zero))
        raise NormalizationError(
            f"fused row {idx} ('{sources[0].item_order[idx]}') is all-zero"
        )
    out = (acc / norms[:, None]).astype(np.float32)
    return EmbeddingSet(
        data=out, item_order=list(sources[0].item_order), normalized=True
    )


def fuse_concat(sources: list[EmbeddingSet], weights=None) -> EmbeddingSet:
    """Concatenate per-source normalized rows scaled by their weights.

    Output dim is the sum of source dims; the result is L2-normalized.
    With uniform weights, cosine similarity on the output equals the mean
    of the per-source cosine similarities.
    """
    _check_aligned(sources, require_same_dim=False)
    w = _resolve_weights(weights, len(sources))
    blocks = []
    for k, (wk, src) in enumerate(zip(w, sources)):
        data = src.data.astype(np.float64)
        norms = np.linalg.norm(data, axis=1)
        zero = norms == 0.0
        if zero.any():
            idx = int(np.argmax(zero))
            raise NormalizationError(
                f"source {k} row {idx} ('{src.item_order[idx]}') has zero norm"
            )
        blocks.append(wk * data / norms[:, None])
    fused = np.concatenate(blocks, axis=1)
    norms = np.linalg.norm(fused, axis=1)
    zero = norms == 0.0
    if zero.any():
        idx = int(np.argmax(zero))
        raise NormalizationError(
            f"fused row {idx} ('{sources[0].item_order[idx]}') is all-zero"
        )
    out = (fused / norms[:, None]).astype(np.float32)
    return EmbeddingSet(
        data=out, item_order=list(sources[0].item_order), normalized=True
    )


def _check_same_shape(a: DistanceMatrix, b: DistanceMatrix):
    if a.values.shape != b.values.shape:
        raise ShapeError(
            f"distance shape mismatch: {a.values.shape} vs {b.values.shape}"
        )
    if a.metric is not b.metric:
        raise ShapeError(f"metric mismatch: {a.metric.value} vs {b.metric.value}")


def fuse_conditional_percentile(
    base_dist: DistanceMatrix,
    fused_dist: DistanceMatrix,
    percentile: float = DEFAULT_PERCENTILE,
    scope: str = SCOPE_BEST_PER_QUERY,
) -> DistanceMatrix:
    """Use the fused row only for queries whose best base similarity is low.

    The per-query score is the top-1 base similarity s_i = 1 - min_j d_ij.
    The threshold is the given percentile of those scores (scope
    'best_per_query'), or of all base similarities (scope 'all_pairs').
    Rows with s_i below the threshold come from fused_dist, the rest from
    base_dist, each copied bit-for-bit.
    """
    _check_same_shape(base_dist, fused_dist)
    if base_dist.n_query == 0:
        raise ParameterError("empty query set")
    if not 0.0 <= percentile <= 100.0:
        raise ParameterError(f"percentile {percentile} outside [0, 100]")
    base64 = base_dist.values.astype(np.float64)
    best_sims = 1.0 - base64.min(axis=1)
    if scope == SCOPE_BEST_PER_QUERY:
        threshold = float(np.percentile(best_sims, percentile, method="linear"))
    elif scope == SCOPE_ALL_PAIRS:
        threshold = float(
            np.percentile((1.0 - base64).ravel(), percentile, method="linear")
        )
    else:
        raise ParameterError(f"unknown scope {scope!r}")
    take_fused = best_sims < threshold
    out = np.where(take_fused[:, None], fused_dist.values, base_dist.values)
    return DistanceMatrix(values=out, metric=base_dist.metric)


def fuse_dual_channel(
    base_dist: DistanceMatrix,
    refinement_dist: DistanceMatrix,
    mix: float = DEFAULT_MIX,
) -> DistanceMatrix:
    """Elementwise blend: mix * base + (1 - mix) * refinement."""
    _check_same_shape(base_dist, refinement_dist)
    if not 0.0 <= mix <= 1.0:
        raise ParameterError(f"mix {mix} outside [0, 1]")
    if mix == 1.0:
        return DistanceMatrix(values=base_dist.values.copy(), metric=base_dist.metric)
    if mix == 0.0:
        return DistanceMatrix(
            values=refinement_dist.values.copy(), metric=base_dist.metric
        )
    blended = mix * base_dist.values.astype(np.float64) + (1.0 - mix) * (
        refinement_dist.values.astype(np.float64)
    )
    return DistanceMatrix(values=blended.astype(np.float32), metric=base_dist.metric)
