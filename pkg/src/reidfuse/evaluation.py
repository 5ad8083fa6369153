"""Retrieval metrics: per-query AP, mAP, CMC, and baseline-relative deltas.

Queries rank the gallery by ascending distance (ties by ascending index).
Under the ``cross_camera`` protocol, gallery items sharing both identity
and camera with the query are junk: removed from the ranking before
scoring. Queries with no valid positive are excluded from the mean and
counted in ``skipped_queries`` unless ``include_no_positive_as_zero`` is
set, in which case they score 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .distances import DistanceMatrix, ranked_indices
from .errors import EvaluationError
from .manifest import ItemRecord


class Protocol(str, Enum):
    PLAIN = "plain"
    CROSS_CAMERA = "cross_camera"


@dataclass(frozen=True)
class EvalReport:
    map: float
    cmc: list[float]
    per_query_ap: list[float | None]
    run_label: str
    delta_vs_baseline: float | None = None  # signed percentage vs baseline
    skipped_queries: int = 0
    meta: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def to_json_obj(self) -> dict:
        obj = {
            "run_label": self.run_label,
            "map": self.map,
            "cmc": list(self.cmc),
            "per_query_ap": list(self.per_query_ap),
            "skipped_queries": self.skipped_queries,
        }
        if self.delta_vs_baseline is not None:
            obj["delta_vs_baseline"] = round(self.delta_vs_baseline, 3)
        if self.meta:
            obj["meta"] = self.meta
        if self.notes:
            obj["notes"] = list(self.notes)
        return obj


def _is_junk(query: ItemRecord, item: ItemRecord) -> bool:
    return (
        item.identity_id == query.identity_id
        and query.camera_id is not None
        and item.camera_id is not None
        and item.camera_id == query.camera_id
    )


def _match_flags(
    query: ItemRecord,
    ranked_gallery: list[ItemRecord],
    protocol: Protocol,
) -> list[bool]:
    """Positive/negative flags down the ranked list, junk removed."""
    flags = []
    for item in ranked_gallery:
        if protocol is Protocol.CROSS_CAMERA and _is_junk(query, item):
            continue
        flags.append(item.identity_id == query.identity_id)
    return flags


def _ap_from_flags(flags: list[bool]) -> float | None:
    precisions = []
    seen = 0
    for rank, flag in enumerate(flags, start=1):
        if flag:
            seen += 1
            precisions.append(seen / rank)
    if not precisions:
        return None
    return math.fsum(precisions) / len(precisions)


def average_precision(
    ranked_gallery: list[ItemRecord],
    query: ItemRecord,
    protocol: Protocol = Protocol.PLAIN,
) -> float | None:
    """AP over an already-ranked gallery; None when no valid positive."""
    if not ranked_gallery:
        raise EvaluationError("cannot evaluate against an empty gallery")
    return _ap_from_flags(_match_flags(query, ranked_gallery, protocol))


def mean_ap(
    dist: DistanceMatrix,
    query_records: list[ItemRecord],
    gallery_records: list[ItemRecord],
    protocol: Protocol = Protocol.PLAIN,
    run_label: str = "",
    include_no_positive_as_zero: bool = False,
) -> EvalReport:
    if dist.n_query != len(query_records):
        raise EvaluationError(
            f"distance matrix has {dist.n_query} rows but "
            f"{len(query_records)} query records"
        )
    if dist.n_gallery != len(gallery_records):
        raise EvaluationError(
            f"distance matrix has {dist.n_gallery} columns but "
            f"{len(gallery_records)} gallery records"
        )
    if not gallery_records:
        raise EvaluationError("cannot evaluate against an empty gallery")

    order = ranked_indices(dist.values)
    per_query: list[float | None] = []
    first_hit: list[int] = []  # rank of first positive per valid query
    kept_lengths: list[int] = []
    for qi, query in enumerate(query_records):
        ranked = [gallery_records[j] for j in order[qi]]
        flags = _match_flags(query, ranked, protocol)
        ap = _ap_from_flags(flags)
        per_query.append(ap)
        if ap is not None:
            first_hit.append(flags.index(True))
            kept_lengths.append(len(flags))

    if not first_hit:
        raise EvaluationError("no query has a valid positive in the gallery")

    valid = [ap for ap in per_query if ap is not None]
    if include_no_positive_as_zero:
        mean = math.fsum(valid) / len(per_query)
        skipped = 0
    else:
        mean = math.fsum(valid) / len(valid)
        skipped = len(per_query) - len(valid)

    depth = min(kept_lengths)
    counts = np.zeros(depth, dtype=np.float64)
    for hit in first_hit:
        if hit < depth:
            counts[hit] += 1.0
    cmc = np.clip(np.cumsum(counts) / len(first_hit), 0.0, 1.0)

    return EvalReport(
        map=float(mean),
        cmc=[float(v) for v in cmc],
        per_query_ap=per_query,
        run_label=run_label,
        skipped_queries=skipped,
    )


def relative_delta(run: EvalReport, baseline: EvalReport) -> float:
    """Signed percentage change of run.map relative to baseline.map."""
    if baseline.map <= 0.0:
        raise EvaluationError(
            f"baseline mAP must be positive to compute a relative delta, "
            f"got {baseline.map}"
        )
    return 100.0 * (run.map - baseline.map) / baseline.map


def format_delta(delta: float) -> str:
    """Table formatting: the no-change row prints '-0.0%'."""
    if delta == 0.0:
        return "-0.0%"
    return f"{delta:+.3f}%"
