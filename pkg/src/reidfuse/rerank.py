"""Re-ranking with k-reciprocal neighbor encodings.

Inputs are three distance matrices over the same metric: query-gallery
(the one being re-ranked), query-query, and gallery-gallery. The joint
query+gallery population is ranked, reciprocal neighbor sets are built
and expanded, each item is encoded as a sparse exp(-d) weight vector over
its expanded set, encodings are locally smoothed by averaging the k2
nearest, and a generalized Jaccard distance between encodings is blended
with the original query-gallery distances:

    out = (1 - lambda) * jaccard + lambda * qg

lambda=1 returns qg bit-for-bit. exp(-d) is applied to the input metric's
distances as-is (no rescaling). Ties rank by ascending index throughout,
so results are reproducible.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .distances import DistanceMatrix
from .errors import ParameterError, ShapeError

DIAG_TOLERANCE = 1e-5
SYMMETRY_TOLERANCE = 1e-5


@dataclass(frozen=True)
class RerankParams:
    k1: int = 20  # reciprocal neighborhood size
    k2: int = 6   # local expansion size
    lambda_value: float = 0.3  # blend of original vs Jaccard distance

    def __post_init__(self):
        if self.k1 < 1:
            raise ParameterError(f"k1 must be positive, got {self.k1}")
        if self.k2 < 1:
            raise ParameterError(f"k2 must be positive, got {self.k2}")
        if self.k2 > self.k1:
            raise ParameterError(f"k2={self.k2} must not exceed k1={self.k1}")
        if not 0.0 <= self.lambda_value <= 1.0:
            raise ParameterError(
                f"lambda_value {self.lambda_value} outside [0, 1]"
            )

    def clamped_to(self, n_total: int) -> "RerankParams":
        """Shrink k1 (and k2 if needed) when the population is small."""
        if self.k1 < n_total:
            return self
        k1 = n_total - 1
        if k1 < 1:
            raise ParameterError(
                f"population of {n_total} items is too small to re-rank"
            )
        k2 = min(self.k2, k1)
        warnings.warn(
            f"rerank k1={self.k1} clamped to {k1} (k2={k2}) for a population "
            f"of {n_total} items",
            stacklevel=3,
        )
        return RerankParams(k1=k1, k2=k2, lambda_value=self.lambda_value)


def _check_square(name: str, mat: DistanceMatrix):
    values = mat.values
    if values.shape[0] != values.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {values.shape}")
    if values.shape[0] and np.abs(np.diagonal(values)).max() > DIAG_TOLERANCE:
        raise ShapeError(f"{name} must have a zero diagonal")
    if values.shape[0] and np.abs(values - values.T).max() > SYMMETRY_TOLERANCE:
        raise ShapeError(f"{name} must be symmetric within {SYMMETRY_TOLERANCE}")


def _reciprocal_sets(rank: np.ndarray, k: int) -> list[np.ndarray]:
    """R(p, k) = {q in N(p, k) : p in N(q, k)}, N = self plus k nearest."""
    forward = rank[:, : k + 1]
    sets = []
    for i in range(rank.shape[0]):
        candidates = forward[i]
        backward = forward[candidates]
        mutual = (backward == i).any(axis=1)
        sets.append(candidates[mutual])
    return sets


def k_reciprocal_rerank(
    qg: DistanceMatrix,
    qq: DistanceMatrix,
    gg: DistanceMatrix,
    params: RerankParams | None = None,
) -> DistanceMatrix:
    if params is None:
        params = RerankParams()
    if qq.metric is not qg.metric or gg.metric is not qg.metric:
        raise ShapeError(
            f"metric mismatch: qg={qg.metric.value}, qq={qq.metric.value}, "
            f"gg={gg.metric.value}"
        )
    nq, ng = qg.values.shape
    if qq.values.shape != (nq, nq):
        raise ShapeError(
            f"qq shape {qq.values.shape} does not match {nq} queries"
        )
    if gg.values.shape != (ng, ng):
        raise ShapeError(
            f"gg shape {gg.values.shape} does not match {ng} gallery items"
        )
    _check_square("qq", qq)
    _check_square("gg", gg)

    if params.lambda_value == 1.0:
        return DistanceMatrix(values=qg.values.copy(), metric=qg.metric)

    n = nq + ng
    params = params.clamped_to(n)
    k1, k2 = params.k1, params.k2
    lam = params.lambda_value

    dist = np.empty((n, n), dtype=np.float64)
    dist[:nq, :nq] = qq.values
    dist[:nq, nq:] = qg.values
    dist[nq:, :nq] = qg.values.T
    dist[nq:, nq:] = gg.values

    rank = np.argsort(dist, axis=1, kind="stable")

    r_full = _reciprocal_sets(rank, k1)
    r_half = _reciprocal_sets(rank, math.ceil(k1 / 2))

    # sparse encodings: exp(-d) over the expanded reciprocal set, row-normalized
    enc = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        expanded = r_full[i]
        for candidate in r_full[i]:
            overlap = np.intersect1d(r_half[candidate], r_full[i], assume_unique=True)
            if len(overlap) >= (2.0 / 3.0) * len(r_half[candidate]):
                expanded = np.union1d(expanded, r_half[candidate])
        weights = np.exp(-dist[i, expanded])
        total = weights.sum()
        if total > 0.0:
            enc[i, expanded] = weights / total

    if k2 > 1:
        enc = enc[rank[:, :k2]].mean(axis=1)

    row_sums = enc.sum(axis=1)

    # inverted index over encoding columns: which rows touch each item
    touching = [np.nonzero(enc[:, col])[0] for col in range(n)]

    jaccard = np.empty((nq, ng), dtype=np.float64)
    for i in range(nq):
        min_sums = np.zeros(n, dtype=np.float64)
        support = np.nonzero(enc[i])[0]
        for col in support:
            rows = touching[col]
            min_sums[rows] += np.minimum(enc[i, col], enc[rows, col])
        min_gal = min_sums[nq:]
        denom = row_sums[i] + row_sums[nq:] - min_gal
        with np.errstate(invalid="ignore", divide="ignore"):
            row = 1.0 - min_gal / denom
        row[denom <= 0.0] = 1.0
        jaccard[i] = row

    blended = (1.0 - lam) * jaccard + lam * qg.values.astype(np.float64)
    return DistanceMatrix(values=blended.astype(np.float32), metric=qg.metric)
