"""Dataset manifest: one JSON object per line, one line per item.

A manifest row describes a single image-derived vector: which object
instance it shows (``identity_id``), which retrieval split it belongs to,
and whether it is an original photo (``base``), a generated variant of one
(``refinement`` under condition A/B/C), or a caption embedding (``text``).
Non-base rows point at their base row through ``base_item_id``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

from .errors import ManifestError


class Split(str, Enum):
    QUERY = "query"
    GALLERY = "gallery"
    TRAIN = "train"


class Kind(str, Enum):
    BASE = "base"
    REFINEMENT = "refinement"
    TEXT = "text"


class Condition(str, Enum):
    NONE = "none"
    A = "A"
    B = "B"
    C = "C"


class ClassLabel(str, Enum):
    TRASH_BIN = "trash_bin"
    WASTE_CONTAINER = "waste_container"
    CROSSWALK = "crosswalk"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class ItemRecord:
    """Metadata for one vector-producing item."""

    item_id: str
    identity_id: str
    split: Split
    kind: Kind = Kind.BASE
    condition: Condition = Condition.NONE
    class_label: ClassLabel = ClassLabel.UNKNOWN
    camera_id: str | None = None
    caption: str | None = None
    base_item_id: str | None = None
    excluded: bool = False  # opt-out flag for neighbor-based query expansion

    def to_json_obj(self) -> dict:
        obj = {
            "item_id": self.item_id,
            "identity_id": self.identity_id,
            "split": self.split.value,
            "kind": self.kind.value,
            "condition": self.condition.value,
            "class_label": self.class_label.value,
        }
        if self.camera_id is not None:
            obj["camera_id"] = self.camera_id
        if self.caption is not None:
            obj["caption"] = self.caption
        if self.base_item_id is not None:
            obj["base_item_id"] = self.base_item_id
        if self.excluded:
            obj["excluded"] = True
        return obj


_REQUIRED_FIELDS = ("item_id", "identity_id", "split", "kind")

_STRING_FIELDS = ("item_id", "identity_id", "camera_id", "caption", "base_item_id")


def _record_from_obj(obj: dict, where: str) -> ItemRecord:
    if not isinstance(obj, dict):
        raise ManifestError(f"{where}: expected a JSON object, got {type(obj).__name__}")
    for name in _REQUIRED_FIELDS:
        if name not in obj:
            raise ManifestError(f"{where}: missing required field '{name}'")
    for name in _STRING_FIELDS:
        if name in obj and obj[name] is not None and not isinstance(obj[name], str):
            raise ManifestError(f"{where}: field '{name}' must be a string")

    def enum_field(cls, name, default=None):
        raw = obj.get(name, default)
        if raw is None:
            raise ManifestError(f"{where}: missing required field '{name}'")
        try:
            return cls(raw)
        except ValueError:
            allowed = ", ".join(e.value for e in cls)
            raise ManifestError(
                f"{where}: invalid {name} {raw!r} (allowed: {allowed})"
            ) from None

    excluded = obj.get("excluded", False)
    if not isinstance(excluded, bool):
        raise ManifestError(f"{where}: field 'excluded' must be a boolean")

    return ItemRecord(
        item_id=obj["item_id"],
        identity_id=obj["identity_id"],
        split=enum_field(Split, "split"),
        kind=enum_field(Kind, "kind"),
        condition=enum_field(Condition, "condition", "none"),
        class_label=enum_field(ClassLabel, "class_label", "unknown"),
        camera_id=obj.get("camera_id"),
        caption=obj.get("caption"),
        base_item_id=obj.get("base_item_id"),
        excluded=excluded,
    )


def validate_records(records: list[ItemRecord]) -> None:
    """Check cross-record constraints; raises ManifestError on the first violation.

    Enforced rules:
      * item_id unique;
      * base rows have condition 'none' and no base_item_id;
      * refinement/text rows carry a base_item_id that resolves to a base
        row in the same split.
    """
    by_id: dict[str, ItemRecord] = {}
    for rec in records:
        if rec.item_id in by_id:
            raise ManifestError(f"duplicate item_id '{rec.item_id}'")
        by_id[rec.item_id] = rec

    for rec in records:
        if rec.kind is Kind.BASE:
            if rec.condition is not Condition.NONE:
                raise ManifestError(
                    f"item '{rec.item_id}': kind=base requires condition=none, "
                    f"got condition={rec.condition.value}"
                )
            if rec.base_item_id is not None:
                raise ManifestError(
                    f"item '{rec.item_id}': kind=base must not set base_item_id"
                )
        else:
            if rec.base_item_id is None:
                raise ManifestError(
                    f"item '{rec.item_id}': kind={rec.kind.value} requires base_item_id"
                )
            target = by_id.get(rec.base_item_id)
            if target is None:
                raise ManifestError(
                    f"item '{rec.item_id}': base_item_id '{rec.base_item_id}' "
                    "does not resolve to any record"
                )
            if target.kind is not Kind.BASE:
                raise ManifestError(
                    f"item '{rec.item_id}': base_item_id '{rec.base_item_id}' "
                    f"resolves to kind={target.kind.value}, expected base"
                )
            if target.split is not rec.split:
                raise ManifestError(
                    f"item '{rec.item_id}': base_item_id '{rec.base_item_id}' "
                    f"is in split {target.split.value}, expected {rec.split.value}"
                )


def load_manifest(path: str | Path) -> list[ItemRecord]:
    """Read and validate a JSON-Lines manifest.

    Returns records in file order. Raises ManifestError with the offending
    line number for parse failures, and a field-naming message for
    constraint violations.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    records: list[ItemRecord] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(
                    f"line {lineno}: malformed JSON ({exc.msg})"
                ) from None
            records.append(_record_from_obj(obj, f"line {lineno}"))
    validate_records(records)
    return records


def save_manifest(records: Iterable[ItemRecord], path: str | Path) -> None:
    """Write records as JSON-Lines, one object per line, UTF-8."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json_obj(), ensure_ascii=False))
            fh.write("\n")
