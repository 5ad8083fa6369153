"""Synthetic embedding datasets with controllable identity fidelity.

Each identity gets a unit centroid on the sphere. Base vectors scatter
around their centroid with ``sigma_base`` noise. Refined variants blend
the true centroid with a wrong-identity centroid (``rho`` controls how
much identity survives), add a per-condition shared shift vector scaled
by ``shift_magnitude`` (a systematic style common to every item generated
under that condition), and their own noise. Everything is unit-normalized
and fully determined by ``seed``, and the output uses the same manifest +
vector-file formats as real data, so the whole pipeline runs on it
unmodified.

Optional extra channels:
- ``text``: caption-style vectors in their own ``text_dim`` space, tied
  to per-identity text centroids with fidelity ``text_rho``.
- ``base_alt`` / ``refinement_*_alt``: a second synthetic "model" over
  the same items, enabled by ``alt_base_sigma`` / ``alt_refinement_rho``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .manifest import Condition, ItemRecord, Kind, Split, save_manifest
from .vectors import EmbeddingSet, save_vectors

CONDITIONS = (Condition.A, Condition.B, Condition.C)


@dataclass(frozen=True)
class SimSpec:
    n_identities: int
    items_per_identity: int
    dim: int
    sigma_base: float = 0.15
    rho: float = 1.0  # refinement identity preservation, 1 = faithful
    shift_magnitude: float = 0.0
    sigma_refinement: float = 0.15
    seed: int = 0
    text_dim: int | None = None  # enables the text channel
    text_rho: float = 0.6
    sigma_text: float = 0.1
    alt_base_sigma: float | None = None  # enables base_alt
    alt_refinement_rho: float | None = None  # enables refinement_*_alt

    def __post_init__(self):
        if self.n_identities < 1:
            raise ParameterError("n_identities must be positive")
        if self.items_per_identity < 2:
            raise ParameterError(
                "items_per_identity must be at least 2 so every identity "
                "appears in both query and gallery splits"
            )
        if self.dim < 1:
            raise ParameterError("dim must be positive")
        for name in ("sigma_base", "sigma_refinement", "shift_magnitude", "sigma_text"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0.0:
                raise ParameterError(f"{name} must be finite and nonnegative")
        if not 0.0 <= self.rho <= 1.0:
            raise ParameterError(f"rho {self.rho} outside [0, 1]")
        if not 0.0 <= self.text_rho <= 1.0:
            raise ParameterError(f"text_rho {self.text_rho} outside [0, 1]")
        if self.text_dim is not None and self.text_dim < 1:
            raise ParameterError("text_dim must be positive when set")
        if self.seed < 0:
            raise ParameterError("seed must be a nonnegative integer")


def _unit_rows(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    rows = rng.standard_normal((count, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def _normalize(rows: np.ndarray) -> np.ndarray:
    return (rows / np.linalg.norm(rows, axis=1, keepdims=True)).astype(np.float32)


def _wrong_identity(rng: np.random.Generator, own: int, n: int) -> int:
    if n == 1:
        return own  # no wrong identity exists to confuse with
    return int((own + 1 + rng.integers(n - 1)) % n)


def _refinement_channel(
    rng: np.random.Generator,
    centroids: np.ndarray,
    shift: np.ndarray,
    spec: SimSpec,
    rho: float,
) -> np.ndarray:
    """One vector per (identity, item): blended centroid + shift + noise."""
    n, items, dim = spec.n_identities, spec.items_per_identity, spec.dim
    out = np.empty((n * items, dim), dtype=np.float64)
    row = 0
    for ident in range(n):
        for _ in range(items):
            wrong = centroids[_wrong_identity(rng, ident, n)]
            vec = (
                rho * centroids[ident]
                + (1.0 - rho) * wrong
                + spec.shift_magnitude * shift
                + spec.sigma_refinement * rng.standard_normal(dim)
            )
            out[row] = vec
            row += 1
    return _normalize(out)


def queries_per_identity(items_per_identity: int) -> int:
    """A third of each identity's items (at least one) become queries."""
    return max(1, items_per_identity // 3)


def identity_centroids(spec: SimSpec) -> np.ndarray:
    """The unit centroids generate() draws for this spec, for diagnostics."""
    streams = np.random.SeedSequence(spec.seed).spawn(11)
    return _unit_rows(np.random.default_rng(streams[0]), spec.n_identities, spec.dim)


def generate(spec: SimSpec) -> tuple[list[ItemRecord], dict[str, EmbeddingSet]]:
    """Build manifest records plus one EmbeddingSet per channel.

    Channels always include ``base`` and ``refinement_A/B/C``; the text
    and alt channels appear when enabled in ``spec``. The random streams
    are spawned in a fixed order, so enabling an optional channel never
    changes the vectors of the others.
    """
    streams = np.random.SeedSequence(spec.seed).spawn(11)
    rng_shift = np.random.default_rng(streams[1])
    rng_base = np.random.default_rng(streams[2])
    rng_refine = [np.random.default_rng(streams[3 + k]) for k in range(3)]
    rng_text = np.random.default_rng(streams[6])
    rng_base_alt = np.random.default_rng(streams[7])
    rng_refine_alt = [np.random.default_rng(streams[8 + k]) for k in range(3)]

    n, items, dim = spec.n_identities, spec.items_per_identity, spec.dim
    centroids = identity_centroids(spec)
    shifts = _unit_rows(rng_shift, len(CONDITIONS), dim)

    base_ids: list[str] = []
    base_records: list[ItemRecord] = []
    n_query = queries_per_identity(items)
    for ident in range(n):
        for item in range(items):
            split = Split.QUERY if item < n_query else Split.GALLERY
            item_id = f"id{ident:03d}_item{item}"
            base_ids.append(item_id)
            base_records.append(
                ItemRecord(
                    item_id=item_id,
                    identity_id=f"id{ident:03d}",
                    split=split,
                    kind=Kind.BASE,
                )
            )

    noise = rng_base.standard_normal((n * items, dim))
    base_data = _normalize(np.repeat(centroids, items, axis=0) + spec.sigma_base * noise)
    channels = {
        "base": EmbeddingSet(data=base_data, item_order=list(base_ids), normalized=True)
    }

    records = list(base_records)
    for k, condition in enumerate(CONDITIONS):
        suffix = f"_ref{condition.value}"
        ref_ids = [item_id + suffix for item_id in base_ids]
        for base_rec, ref_id in zip(base_records, ref_ids):
            records.append(
                ItemRecord(
                    item_id=ref_id,
                    identity_id=base_rec.identity_id,
                    split=base_rec.split,
                    kind=Kind.REFINEMENT,
                    condition=condition,
                    base_item_id=base_rec.item_id,
                )
            )
        data = _refinement_channel(rng_refine[k], centroids, shifts[k], spec, spec.rho)
        channels[f"refinement_{condition.value}"] = EmbeddingSet(
            data=data, item_order=ref_ids, normalized=True
        )

    if spec.text_dim is not None:
        text_centroids = _unit_rows(rng_text, n, spec.text_dim)
        text_ids = [item_id + "_txt" for item_id in base_ids]
        rows = np.empty((n * items, spec.text_dim), dtype=np.float64)
        row = 0
        for ident in range(n):
            for _ in range(items):
                wrong = text_centroids[_wrong_identity(rng_text, ident, n)]
                rows[row] = (
                    spec.text_rho * text_centroids[ident]
                    + (1.0 - spec.text_rho) * wrong
                    + spec.sigma_text * rng_text.standard_normal(spec.text_dim)
                )
                row += 1
        for base_rec, text_id in zip(base_records, text_ids):
            records.append(
                ItemRecord(
                    item_id=text_id,
                    identity_id=base_rec.identity_id,
                    split=base_rec.split,
                    kind=Kind.TEXT,
                    base_item_id=base_rec.item_id,
                )
            )
        channels["text"] = EmbeddingSet(
            data=_normalize(rows), item_order=text_ids, normalized=True
        )

    if spec.alt_base_sigma is not None:
        noise = rng_base_alt.standard_normal((n * items, dim))
        alt = _normalize(
            np.repeat(centroids, items, axis=0) + spec.alt_base_sigma * noise
        )
        channels["base_alt"] = EmbeddingSet(
            data=alt, item_order=list(base_ids), normalized=True
        )

    if spec.alt_refinement_rho is not None:
        for k, condition in enumerate(CONDITIONS):
            data = _refinement_channel(
                rng_refine_alt[k], centroids, shifts[k], spec, spec.alt_refinement_rho
            )
            channels[f"refinement_{condition.value}_alt"] = EmbeddingSet(
                data=data,
                item_order=[item_id + f"_ref{condition.value}" for item_id in base_ids],
                normalized=True,
            )

    return records, channels


def write_dataset(
    records: list[ItemRecord],
    channels: dict[str, EmbeddingSet],
    out_dir: str | Path,
) -> Path:
    """Emit manifest.jsonl plus one <channel>.vec file per channel."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_manifest(records, out / "manifest.jsonl")
    for name, emb in channels.items():
        save_vectors(emb, out / f"{name}.vec")
    return out
