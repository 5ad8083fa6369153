"""Config-driven experiment runner.

An experiment file (YAML) names a dataset — either a simulator spec or a
manifest plus vector files — and a list of runs. Each run picks a base
channel, optional refinement/text channels, a fusion method, and optional
query expansion and re-ranking, executed in a declared stage order
(default: fuse, expand, rerank, then evaluation). The first run is the
baseline; every report carries its mAP delta relative to it.

Stage semantics: while the run is in vector space the state holds one
(query, gallery) pair per source channel. Vector fusion collapses the
channels into one; distance-level fusion (conditional_percentile,
dual_channel) produces the final distance matrix directly; re-ranking
turns each channel's vectors into distances. Stages that need vectors
after a distance-producing stage raise PipelineError with a reordering
hint rather than guessing.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .distances import DistanceMatrix, cosine_distance_matrix, l2_normalize
from .errors import ConfigError, PipelineError
from .evaluation import (
    EvalReport,
    Protocol,
    format_delta,
    mean_ap,
    relative_delta,
)
from .expansion import DEFAULT_ALPHA, DEFAULT_K, expand_queries
from .fusion import (
    FusionSpec,
    fuse_average,
    fuse_concat,
    fuse_conditional_percentile,
    fuse_dual_channel,
)
from .manifest import Condition, ItemRecord, Kind, Split, load_manifest
from .rerank import RerankParams, k_reciprocal_rerank
from .simulator import SimSpec, generate
from .vectors import EmbeddingSet, load_vectors

PIPELINE_STAGES = ("fuse", "expand", "rerank")
DEFAULT_PIPELINE = ["fuse", "expand", "rerank"]

TABLE_COLUMNS = ("Embedding Base", "Embedding Refinements", "Fusion", "Delta")

_FUSION_TITLES = {
    "none": "None",
    "average": "Average",
    "weighted_average": "Weighted Average",
    "concat": "Concat",
    "weighted_concat": "Weighted Concat",
    "conditional_percentile": "Conditional Percentile",
    "dual_channel": "Dual Channel",
}


@dataclass(frozen=True)
class SourceRef:
    """A vector channel plus the model label recorded verbatim in reports."""

    channel: str
    label: str


@dataclass(frozen=True)
class RefinementRef:
    condition: Condition
    channel: str
    label: str


@dataclass(frozen=True)
class ExpansionParams:
    k: int = DEFAULT_K
    alpha: float = DEFAULT_ALPHA


@dataclass
class RunSpec:
    label: str
    base: SourceRef
    refinements: list[RefinementRef] = field(default_factory=list)
    text: SourceRef | None = None
    fusion: FusionSpec = field(default_factory=FusionSpec)
    expansion: ExpansionParams | None = None
    rerank: RerankParams | None = None
    protocol: Protocol | None = None  # None = experiment default
    pipeline_order: list[str] = field(default_factory=lambda: list(DEFAULT_PIPELINE))
    include_no_positive_as_zero: bool = False
    notes: list[str] = field(default_factory=list)


@dataclass
class DataSource:
    simulate: SimSpec | None = None
    manifest_path: Path | None = None
    channel_paths: dict[str, Path] = field(default_factory=dict)


@dataclass
class Experiment:
    name: str
    data: DataSource
    runs: list[RunSpec]
    protocol: Protocol = Protocol.PLAIN
    normalize_before_fuse: bool = True


@dataclass
class Dataset:
    records: list[ItemRecord]
    channels: dict[str, EmbeddingSet]


# ---------------------------------------------------------------------------
# config parsing


def _expect_mapping(value, where: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{where} must be a mapping, got {type(value).__name__}")
    return value


def _expect_str(value, where: str) -> str:
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{where} must be a non-empty string")
    return value


def _reject_unknown(mapping: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"{where} has unknown keys: {', '.join(unknown)}")


def _parse_source(obj, where: str) -> SourceRef:
    mapping = _expect_mapping(obj, where)
    _reject_unknown(mapping, {"channel", "label"}, where)
    channel = _expect_str(mapping.get("channel"), f"{where}.channel")
    label = _expect_str(mapping.get("label", channel), f"{where}.label")
    return SourceRef(channel=channel, label=label)


def _parse_refinement(obj, where: str) -> RefinementRef:
    mapping = _expect_mapping(obj, where)
    _reject_unknown(mapping, {"condition", "channel", "label"}, where)
    raw = _expect_str(mapping.get("condition"), f"{where}.condition")
    try:
        condition = Condition(raw)
    except ValueError:
        raise ConfigError(f"{where}.condition must be one of A, B, C, got {raw!r}")
    if condition is Condition.NONE:
        raise ConfigError(f"{where}.condition must be one of A, B, C")
    channel = _expect_str(mapping.get("channel"), f"{where}.channel")
    label = _expect_str(mapping.get("label", channel), f"{where}.label")
    return RefinementRef(condition=condition, channel=channel, label=label)


def _default_weights(n_sources: int) -> list[float]:
    # base takes 0.7, the remainder is split evenly over the other sources
    if n_sources == 1:
        return [1.0]
    rest = 0.3 / (n_sources - 1)
    return [0.7] + [rest] * (n_sources - 1)


def _parse_fusion(obj, source_tags: list[str], where: str) -> FusionSpec:
    mapping = _expect_mapping(obj, where)
    _reject_unknown(
        mapping, {"method", "weights", "percentile", "scope", "mix"}, where
    )
    method = _expect_str(mapping.get("method", "none"), f"{where}.method")
    weights = mapping.get("weights")
    if weights is not None:
        if not isinstance(weights, list) or not all(
            isinstance(w, (int, float)) for w in weights
        ):
            raise ConfigError(f"{where}.weights must be a list of numbers")
        weights = [float(w) for w in weights]
    elif method in ("weighted_average", "weighted_concat"):
        weights = _default_weights(len(source_tags))
    kwargs = {"method": method, "sources": source_tags, "weights": weights}
    if "percentile" in mapping:
        kwargs["percentile"] = float(mapping["percentile"])
    if "scope" in mapping:
        kwargs["percentile_scope"] = _expect_str(mapping["scope"], f"{where}.scope")
    if "mix" in mapping:
        kwargs["mix"] = float(mapping["mix"])
    try:
        return FusionSpec(**kwargs)
    except Exception as exc:
        raise ConfigError(f"{where}: {exc}")


def _parse_protocol(value, where: str) -> Protocol:
    raw = _expect_str(value, where)
    try:
        return Protocol(raw)
    except ValueError:
        raise ConfigError(
            f"{where} must be 'plain' or 'cross_camera', got {raw!r}"
        )


def _parse_run(obj, index: int, default_protocol: Protocol) -> RunSpec:
    where = f"runs[{index}]"
    mapping = _expect_mapping(obj, where)
    _reject_unknown(
        mapping,
        {
            "label", "base", "refinements", "text", "fusion", "expansion",
            "rerank", "protocol", "pipeline_order",
            "include_no_positive_as_zero", "notes",
        },
        where,
    )
    label = _expect_str(mapping.get("label"), f"{where}.label")
    if "base" not in mapping:
        raise ConfigError(f"{where}.base is required")
    base = _parse_source(mapping["base"], f"{where}.base")

    refinements = []
    seen_conditions = set()
    for j, entry in enumerate(mapping.get("refinements") or []):
        ref = _parse_refinement(entry, f"{where}.refinements[{j}]")
        if ref.condition in seen_conditions:
            raise ConfigError(
                f"{where}.refinements has two entries for condition "
                f"{ref.condition.value}"
            )
        seen_conditions.add(ref.condition)
        refinements.append(ref)

    text = None
    if mapping.get("text") is not None:
        text = _parse_source(mapping["text"], f"{where}.text")

    tags = ["base"]
    tags += [f"refinement_{r.condition.value}" for r in refinements]
    if text is not None:
        tags.append("text")

    fusion = _parse_fusion(mapping.get("fusion") or {}, tags, f"{where}.fusion")
    if fusion.method == "none" and len(tags) > 1:
        raise ConfigError(
            f"{where}: fusion method 'none' cannot consume refinement/text "
            "sources; drop them or pick a fusion method"
        )
    if fusion.method == "dual_channel" and len(tags) != 2:
        raise ConfigError(
            f"{where}: dual_channel needs exactly two sources "
            f"(base plus one refinement or text), got {len(tags)}"
        )

    expansion = None
    if mapping.get("expansion") is not None:
        sub = _expect_mapping(mapping["expansion"], f"{where}.expansion")
        _reject_unknown(sub, {"k", "alpha"}, f"{where}.expansion")
        try:
            expansion = ExpansionParams(
                k=int(sub.get("k", DEFAULT_K)),
                alpha=float(sub.get("alpha", DEFAULT_ALPHA)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}.expansion: {exc}")

    rerank = None
    if mapping.get("rerank") is not None:
        sub = _expect_mapping(mapping["rerank"], f"{where}.rerank")
        _reject_unknown(sub, {"k1", "k2", "lambda"}, f"{where}.rerank")
        try:
            rerank = RerankParams(
                k1=int(sub.get("k1", RerankParams.k1)),
                k2=int(sub.get("k2", RerankParams.k2)),
                lambda_value=float(sub.get("lambda", RerankParams.lambda_value)),
            )
        except Exception as exc:
            raise ConfigError(f"{where}.rerank: {exc}")

    protocol = default_protocol
    if "protocol" in mapping:
        protocol = _parse_protocol(mapping["protocol"], f"{where}.protocol")

    order = mapping.get("pipeline_order")
    if order is None:
        order = list(DEFAULT_PIPELINE)
    else:
        if not isinstance(order, list) or not all(isinstance(s, str) for s in order):
            raise ConfigError(f"{where}.pipeline_order must be a list of stage names")
        for stage in order:
            if stage not in PIPELINE_STAGES:
                raise ConfigError(
                    f"{where}.pipeline_order: unknown stage {stage!r} "
                    f"(allowed: {', '.join(PIPELINE_STAGES)})"
                )
        if len(set(order)) != len(order):
            raise ConfigError(f"{where}.pipeline_order lists a stage twice")
    if expansion is not None and "expand" not in order:
        raise ConfigError(
            f"{where}: expansion is configured but pipeline_order omits 'expand'"
        )
    if rerank is not None and "rerank" not in order:
        raise ConfigError(
            f"{where}: rerank is configured but pipeline_order omits 'rerank'"
        )
    if "fuse" not in order and len(tags) > 1:
        raise ConfigError(
            f"{where}: multiple sources but pipeline_order omits 'fuse'"
        )

    notes = mapping.get("notes") or []
    if not isinstance(notes, list) or not all(isinstance(n, str) for n in notes):
        raise ConfigError(f"{where}.notes must be a list of strings")

    return RunSpec(
        label=label,
        base=base,
        refinements=refinements,
        text=text,
        fusion=fusion,
        expansion=expansion,
        rerank=rerank,
        protocol=protocol,
        pipeline_order=order,
        include_no_positive_as_zero=bool(
            mapping.get("include_no_positive_as_zero", False)
        ),
        notes=list(notes),
    )


def parse_simspec(obj, where: str) -> SimSpec:
    mapping = _expect_mapping(obj, where)
    allowed = {
        "n_identities", "items_per_identity", "dim", "sigma_base", "rho",
        "shift_magnitude", "sigma_refinement", "seed", "text_dim", "text_rho",
        "sigma_text", "alt_base_sigma", "alt_refinement_rho",
    }
    _reject_unknown(mapping, allowed, where)
    try:
        return SimSpec(**mapping)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}")


def _parse_data(obj, config_dir: Path, where: str) -> DataSource:
    mapping = _expect_mapping(obj, where)
    _reject_unknown(mapping, {"simulate", "manifest", "channels"}, where)
    if "simulate" in mapping:
        if "manifest" in mapping or "channels" in mapping:
            raise ConfigError(
                f"{where}: 'simulate' and file sources are mutually exclusive"
            )
        return DataSource(simulate=parse_simspec(mapping["simulate"], f"{where}.simulate"))
    if "manifest" not in mapping or "channels" not in mapping:
        raise ConfigError(
            f"{where} needs either 'simulate' or both 'manifest' and 'channels'"
        )
    manifest_path = config_dir / _expect_str(mapping["manifest"], f"{where}.manifest")
    channels_map = _expect_mapping(mapping["channels"], f"{where}.channels")
    channel_paths = {}
    for name, rel in channels_map.items():
        channel_paths[str(name)] = config_dir / _expect_str(
            rel, f"{where}.channels.{name}"
        )
    if not channel_paths:
        raise ConfigError(f"{where}.channels must name at least one vector file")
    return DataSource(manifest_path=manifest_path, channel_paths=channel_paths)


def load_config(path: str | Path) -> Experiment:
    """Parse and validate an experiment file; raises ConfigError with context."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}")
    mapping = _expect_mapping(raw, "config")
    _reject_unknown(
        mapping,
        {"experiment", "protocol", "normalize_before_fuse", "data", "runs"},
        "config",
    )
    name = _expect_str(mapping.get("experiment"), "config.experiment")
    protocol = Protocol.PLAIN
    if "protocol" in mapping:
        protocol = _parse_protocol(mapping["protocol"], "config.protocol")
    if "data" not in mapping:
        raise ConfigError("config.data is required")
    data = _parse_data(mapping["data"], path.parent, "config.data")
    raw_runs = mapping.get("runs")
    if not isinstance(raw_runs, list) or not raw_runs:
        raise ConfigError("config.runs must be a non-empty list")
    runs = [_parse_run(obj, i, protocol) for i, obj in enumerate(raw_runs)]
    labels = [run.label for run in runs]
    if len(set(labels)) != len(labels):
        dup = next(l for l in labels if labels.count(l) > 1)
        raise ConfigError(f"run label {dup!r} appears more than once")
    return Experiment(
        name=name,
        data=data,
        runs=runs,
        protocol=protocol,
        normalize_before_fuse=bool(mapping.get("normalize_before_fuse", True)),
    )


# ---------------------------------------------------------------------------
# dataset loading and channel alignment


def select_channel_records(records: list[ItemRecord], channel: str) -> list[ItemRecord]:
    """The manifest rows a channel's vector file covers, in manifest order.

    Channel names map to record subsets: 'base' → base rows, 'refinement_X'
    → refinement rows under condition X, 'text' → text rows. An '_alt'
    suffix selects the same rows (an alternative embedding model over the
    same items).
    """
    stem = channel[: -len("_alt")] if channel.endswith("_alt") else channel
    if stem == "base":
        return [r for r in records if r.kind is Kind.BASE]
    if stem == "text":
        return [r for r in records if r.kind is Kind.TEXT]
    if stem.startswith("refinement_"):
        raw = stem[len("refinement_"):]
        try:
            condition = Condition(raw)
        except ValueError:
            condition = None
        if condition in (Condition.A, Condition.B, Condition.C):
            return [
                r
                for r in records
                if r.kind is Kind.REFINEMENT and r.condition is condition
            ]
    raise ConfigError(
        f"channel name {channel!r} does not map to a manifest subset "
        "(expected base, refinement_A/B/C, or text, optionally with an "
        "'_alt' suffix)"
    )


def load_dataset(source: DataSource) -> Dataset:
    if source.simulate is not None:
        records, channels = generate(source.simulate)
        return Dataset(records=records, channels=channels)
    records = load_manifest(source.manifest_path)
    channels = {}
    for name, path in source.channel_paths.items():
        subset = select_channel_records(records, name)
        if not subset:
            raise ConfigError(
                f"channel {name!r}: the manifest has no matching records"
            )
        channels[name] = load_vectors(path, subset)
    return Dataset(records=records, channels=channels)


def _base_id_positions(dataset: Dataset, channel: str) -> tuple[EmbeddingSet, dict]:
    try:
        emb = dataset.channels[channel]
    except KeyError:
        raise ConfigError(
            f"unknown channel {channel!r} "
            f"(available: {', '.join(sorted(dataset.channels))})"
        )
    by_id = {r.item_id: r for r in dataset.records}
    positions: dict[str, int] = {}
    for pos, item_id in enumerate(emb.item_order):
        record = by_id.get(item_id)
        if record is None:
            raise ConfigError(
                f"channel {channel!r} covers item {item_id!r} which is not "
                "in the manifest"
            )
        base_id = record.item_id if record.kind is Kind.BASE else record.base_item_id
        if base_id in positions:
            raise ConfigError(
                f"channel {channel!r} has two rows resolving to base item "
                f"{base_id!r}"
            )
        positions[base_id] = pos
    return emb, positions


def _channel_split(
    dataset: Dataset,
    channel: str,
    query_ids: list[str],
    gallery_ids: list[str],
    normalize: bool,
) -> tuple[EmbeddingSet, EmbeddingSet]:
    """(query, gallery) EmbeddingSets for a channel, rows keyed by base ids."""
    emb, positions = _base_id_positions(dataset, channel)

    def take(ids: list[str]) -> EmbeddingSet:
        missing = [i for i in ids if i not in positions]
        if missing:
            raise ConfigError(
                f"channel {channel!r} has no row for base item "
                f"{missing[0]!r} ({len(missing)} missing in total)"
            )
        rows = emb.data[[positions[i] for i in ids]]
        subset = EmbeddingSet(
            data=rows, item_order=list(ids), normalized=emb.normalized
        )
        if subset.normalized:
            return subset
        if normalize:
            return l2_normalize(subset)
        # caller vouches for unit norms; the constructor checks the claim
        return EmbeddingSet(data=rows, item_order=list(ids), normalized=True)

    return take(query_ids), take(gallery_ids)


# ---------------------------------------------------------------------------
# pipeline execution


@dataclass
class _RunState:
    """Either per-channel vectors or per-channel distances, never both."""

    vectors: dict[str, tuple[EmbeddingSet, EmbeddingSet]] | None = None
    distances: dict[str, DistanceMatrix] | None = None


def _vector_state(state: _RunState, stage: str, hint: str) -> dict:
    if state.vectors is None:
        raise PipelineError(
            f"stage '{stage}' needs vector sources, but an earlier stage "
            f"already produced distances; {hint}"
        )
    return state.vectors


def _apply_expansion(
    state: _RunState, params: ExpansionParams, exclude: np.ndarray | None
) -> _RunState:
    vectors = _vector_state(
        state, "expand", "put 'expand' before 'rerank' and distance-level fusion"
    )
    expanded = {}
    for tag, (queries, gallery) in vectors.items():
        new_queries = expand_queries(
            queries, gallery, k=params.k, alpha=params.alpha, exclude=exclude
        )
        expanded[tag] = (new_queries, gallery)
    return _RunState(vectors=expanded)


def _apply_rerank(state: _RunState, params: RerankParams) -> _RunState:
    if state.vectors is None:
        raise PipelineError(
            "re-ranking needs query-query and gallery-gallery structure, "
            "which distance-level fusion has already discarded; use "
            "pipeline_order [rerank, fuse] to re-rank each channel first"
        )
    distances = {}
    for tag, (queries, gallery) in state.vectors.items():
        qg = cosine_distance_matrix(queries, gallery)
        qq = cosine_distance_matrix(queries, queries)
        gg = cosine_distance_matrix(gallery, gallery)
        distances[tag] = k_reciprocal_rerank(qg, qq, gg, params)
    return _RunState(distances=distances)


def _apply_fusion(state: _RunState, spec: FusionSpec) -> _RunState:
    method = spec.method
    if method == "none":
        return state
    tags = spec.sources

    if method in ("average", "weighted_average", "concat", "weighted_concat"):
        vectors = _vector_state(
            state,
            "fuse",
            "vector fusion cannot follow re-ranking; use a distance-level "
            "method (conditional_percentile, dual_channel) or put 'fuse' first",
        )
        q_sets = [vectors[t][0] for t in tags]
        g_sets = [vectors[t][1] for t in tags]
        fuse = fuse_average if method.endswith("average") else fuse_concat
        fused_q = fuse(q_sets, spec.weights)
        fused_g = fuse(g_sets, spec.weights)
        return _RunState(vectors={"fused": (fused_q, fused_g)})

    if method == "conditional_percentile":
        vectors = _vector_state(
            state,
            "fuse",
            "conditional_percentile builds its fused channel from vectors; "
            "run 'fuse' before 'rerank'",
        )
        base_q, base_g = vectors["base"]
        inner_q = fuse_average([vectors[t][0] for t in tags], spec.weights)
        inner_g = fuse_average([vectors[t][1] for t in tags], spec.weights)
        fused = fuse_conditional_percentile(
            cosine_distance_matrix(base_q, base_g),
            cosine_distance_matrix(inner_q, inner_g),
            percentile=spec.percentile,
            scope=spec.percentile_scope,
        )
        return _RunState(distances={"fused": fused})

    if method == "dual_channel":
        first, second = tags
        if state.vectors is not None:
            pairs = [
                cosine_distance_matrix(*state.vectors[first]),
                cosine_distance_matrix(*state.vectors[second]),
            ]
        else:
            pairs = [state.distances[first], state.distances[second]]
        fused = fuse_dual_channel(pairs[0], pairs[1], mix=spec.mix)
        return _RunState(distances={"fused": fused})

    raise PipelineError(f"unhandled fusion method {method!r}")


def _final_distance(state: _RunState) -> DistanceMatrix:
    if state.distances is not None:
        if len(state.distances) != 1:
            raise PipelineError(
                f"run ended with {len(state.distances)} distance channels; "
                "add a distance-level fusion to combine them"
            )
        return next(iter(state.distances.values()))
    if len(state.vectors) != 1:
        raise PipelineError(
            f"run ended with {len(state.vectors)} vector channels; "
            "add a fusion method to combine them"
        )
    queries, gallery = next(iter(state.vectors.values()))
    return cosine_distance_matrix(queries, gallery)


def _table_cells(run: RunSpec) -> dict:
    base_labels = [run.base.label]
    if run.text is not None:
        base_labels.append(run.text.label)
    ref_labels = []
    for ref in run.refinements:
        if ref.label not in ref_labels:
            ref_labels.append(ref.label)
    return {
        "base": ", ".join(dict.fromkeys(base_labels)),
        "refinements": ", ".join(ref_labels) if ref_labels else "None",
        "fusion": _FUSION_TITLES[run.fusion.method],
    }


def _run_meta(experiment: Experiment, run: RunSpec, protocol: Protocol) -> dict:
    fusion: dict = {"method": run.fusion.method, "sources": list(run.fusion.sources)}
    if run.fusion.weights is not None:
        fusion["weights"] = [float(w) for w in run.fusion.weights]
    if run.fusion.method == "conditional_percentile":
        fusion["percentile"] = run.fusion.percentile
        fusion["scope"] = run.fusion.percentile_scope
        fusion["inner"] = (
            "weighted_average" if run.fusion.weights is not None else "average"
        )
    if run.fusion.method == "dual_channel":
        fusion["mix"] = run.fusion.mix
    meta = {
        "experiment": experiment.name,
        "base": {"channel": run.base.channel, "label": run.base.label},
        "refinements": [
            {"condition": r.condition.value, "channel": r.channel, "label": r.label}
            for r in run.refinements
        ],
        "fusion": fusion,
        "pipeline_order": list(run.pipeline_order),
        "protocol": protocol.value,
        "table": _table_cells(run),
    }
    if run.text is not None:
        meta["text"] = {"channel": run.text.channel, "label": run.text.label}
    if run.expansion is not None:
        meta["expansion"] = {"k": run.expansion.k, "alpha": run.expansion.alpha}
    if run.rerank is not None:
        meta["rerank"] = {
            "k1": run.rerank.k1,
            "k2": run.rerank.k2,
            "lambda": run.rerank.lambda_value,
        }
    return meta


def execute_run(
    experiment: Experiment, dataset: Dataset, run: RunSpec
) -> EvalReport:
    """One run: align channels, apply pipeline stages, evaluate."""
    base_records = [r for r in dataset.records if r.kind is Kind.BASE]
    query_records = [r for r in base_records if r.split is Split.QUERY]
    gallery_records = [r for r in base_records if r.split is Split.GALLERY]
    query_ids = [r.item_id for r in query_records]
    gallery_ids = [r.item_id for r in gallery_records]

    channel_by_tag = {"base": run.base.channel}
    for ref in run.refinements:
        channel_by_tag[f"refinement_{ref.condition.value}"] = ref.channel
    if run.text is not None:
        channel_by_tag["text"] = run.text.channel

    vectors = {}
    for tag, channel in channel_by_tag.items():
        vectors[tag] = _channel_split(
            dataset, channel, query_ids, gallery_ids,
            normalize=experiment.normalize_before_fuse,
        )
    state = _RunState(vectors=vectors)

    exclude = None
    if any(r.excluded for r in gallery_records):
        exclude = np.array([r.excluded for r in gallery_records], dtype=bool)

    for stage in run.pipeline_order:
        if stage == "fuse":
            state = _apply_fusion(state, run.fusion)
        elif stage == "expand" and run.expansion is not None:
            state = _apply_expansion(state, run.expansion, exclude)
        elif stage == "rerank" and run.rerank is not None:
            state = _apply_rerank(state, run.rerank)

    protocol = run.protocol or experiment.protocol
    report = mean_ap(
        _final_distance(state),
        query_records,
        gallery_records,
        protocol=protocol,
        run_label=run.label,
        include_no_positive_as_zero=run.include_no_positive_as_zero,
    )
    return replace(
        report,
        meta=_run_meta(experiment, run, protocol),
        notes=list(run.notes),
    )


def run_experiment(experiment: Experiment) -> list[EvalReport]:
    """Execute all runs; the first is the baseline for every delta."""
    dataset = load_dataset(experiment.data)
    reports = [execute_run(experiment, dataset, run) for run in experiment.runs]
    baseline = reports[0]
    out = [replace(baseline, delta_vs_baseline=0.0)]
    for report in reports[1:]:
        out.append(
            replace(report, delta_vs_baseline=relative_delta(report, baseline))
        )
    return out


# ---------------------------------------------------------------------------
# report output


def print_table(reports: list[EvalReport]) -> str:
    """Aligned four-column table; baseline row first, deltas signed."""
    if not reports:
        raise ConfigError("no reports to print")
    rows = []
    for report in reports:
        cells = report.meta.get("table", {})
        delta = report.delta_vs_baseline
        rows.append(
            (
                cells.get("base", report.run_label),
                cells.get("refinements", "None"),
                cells.get("fusion", "None"),
                format_delta(0.0 if delta is None else delta),
            )
        )
    widths = [
        max(len(TABLE_COLUMNS[c]), max(len(row[c]) for row in rows))
        for c in range(4)
    ]
    lines = [
        "  ".join(TABLE_COLUMNS[c].ljust(widths[c]) for c in range(4)).rstrip(),
        "  ".join("-" * widths[c] for c in range(4)),
    ]
    for row in rows:
        cells = [row[c].ljust(widths[c]) for c in range(3)]
        cells.append(row[3].rjust(widths[3]))
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def reports_json(experiment_name: str, reports: list[EvalReport]) -> str:
    payload = {
        "experiment": experiment_name,
        "reports": [report.to_json_obj() for report in reports],
    }
    return json.dumps(payload, indent=2) + "\n"


def reports_csv(reports: list[EvalReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "run_label", "embedding_base", "embedding_refinements", "fusion",
            "map", "delta_pct", "skipped_queries",
        ]
    )
    for report in reports:
        cells = report.meta.get("table", {})
        delta = report.delta_vs_baseline
        writer.writerow(
            [
                report.run_label,
                cells.get("base", ""),
                cells.get("refinements", ""),
                cells.get("fusion", ""),
                repr(report.map),
                "" if delta is None else f"{delta:.3f}",
                report.skipped_queries,
            ]
        )
    return buf.getvalue()


def write_outputs(
    experiment_name: str, reports: list[EvalReport], out_dir: str | Path
) -> list[Path]:
    """Write reports.json, table.txt, reports.csv, and the two figures."""
    from .plots import save_cmc_figure, save_delta_figure

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def emit(name: str, text: str) -> None:
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(path)

    emit("reports.json", reports_json(experiment_name, reports))
    emit("table.txt", print_table(reports))
    emit("reports.csv", reports_csv(reports))
    cmc_path = out / "cmc_curves.png"
    save_cmc_figure(reports, cmc_path)
    written.append(cmc_path)
    delta_path = out / "map_deltas.png"
    save_delta_figure(reports, delta_path)
    written.append(delta_path)
    return written
