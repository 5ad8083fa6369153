"""REIDVEC1 vector files and the in-memory embedding matrix.

File layout (little-endian):

    bytes 0..7    magic, ASCII "REIDVEC1"
    bytes 8..11   uint32 count (number of rows)
    bytes 12..15  uint32 dim (row width)
    then          count * dim IEEE-754 float32, row-major
    then          optional uint32 CRC32 of the float payload; present iff
                  the file is exactly 4 bytes longer than header + payload

Rows are aligned to manifest order by position; the file itself stores no
ids. ``save_vectors`` always appends the CRC; ``load_vectors`` accepts
files with or without it and verifies it when present.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ShapeError, VectorFormatError
from .manifest import ItemRecord

MAGIC = b"REIDVEC1"
_HEADER = struct.Struct("<8sII")

NORM_TOLERANCE = 1e-4


@dataclass(frozen=True)
class EmbeddingSet:
    """A count x dim float32 matrix plus the item ids its rows belong to."""

    data: np.ndarray
    item_order: list[str]
    normalized: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise ShapeError(f"embedding data must be 2-D, got shape {data.shape}")
        if data.shape[1] < 1:
            raise ShapeError("embedding dim must be positive")
        object.__setattr__(self, "data", data)
        if len(self.item_order) != data.shape[0]:
            raise ShapeError(
                f"item_order length {len(self.item_order)} does not match "
                f"row count {data.shape[0]}"
            )
        if self.normalized and data.shape[0] > 0:
            norms = np.linalg.norm(data.astype(np.float64), axis=1)
            bad = np.abs(norms - 1.0) > NORM_TOLERANCE
            if bad.any():
                idx = int(np.argmax(bad))
                raise ShapeError(
                    f"normalized=True but row {idx} ('{self.item_order[idx]}') "
                    f"has L2 norm {norms[idx]:.6f}"
                )

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def with_rows(self, rows: np.ndarray, item_order: list[str] | None = None):
        return replace(
            self,
            data=rows,
            item_order=self.item_order if item_order is None else item_order,
        )


def write_vector_file(matrix: np.ndarray, path: str | Path) -> None:
    """Write a float32 matrix in REIDVEC1 layout (CRC32 trailer included)."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {matrix.shape}")
    count, dim = matrix.shape
    payload = matrix.tobytes()
    path = Path(path)
    try:
        with path.open("wb") as fh:
            fh.write(_HEADER.pack(MAGIC, count, dim))
            fh.write(payload)
            fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))
    except OSError as exc:
        raise VectorFormatError(f"cannot write vector file {path}: {exc}") from exc


def read_vector_file(path: str | Path) -> np.ndarray:
    """Read a REIDVEC1 file; returns the float32 matrix."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise VectorFormatError(f"cannot read vector file {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise VectorFormatError(f"{path}: file shorter than the 16-byte header")
    magic, count, dim = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise VectorFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    payload_len = 4 * count * dim
    base_len = _HEADER.size + payload_len
    if len(blob) == base_len:
        has_crc = False
    elif len(blob) == base_len + 4:
        has_crc = True
    elif len(blob) < base_len:
        raise VectorFormatError(
            f"{path}: truncated payload ({len(blob) - _HEADER.size} bytes, "
            f"header promises {payload_len})"
        )
    else:
        raise VectorFormatError(
            f"{path}: {len(blob) - base_len} trailing bytes beyond payload "
            "(expected none or a 4-byte CRC32)"
        )
    payload = blob[_HEADER.size : base_len]
    if has_crc:
        (stored,) = struct.unpack_from("<I", blob, base_len)
        actual = zlib.crc32(payload) & 0xFFFFFFFF
        if stored != actual:
            raise VectorFormatError(
                f"{path}: CRC32 mismatch (stored {stored:#010x}, "
                f"computed {actual:#010x})"
            )
    matrix = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
    return np.ascontiguousarray(matrix)


def load_vectors(path: str | Path, manifest: list[ItemRecord]) -> EmbeddingSet:
    """Read a vector file and pair its rows with manifest records by position."""
    matrix = read_vector_file(path)
    if matrix.shape[0] != len(manifest):
        raise VectorFormatError(
            f"{path}: file holds {matrix.shape[0]} rows but the paired "
            f"manifest has {len(manifest)} records"
        )
    return EmbeddingSet(
        data=matrix,
        item_order=[rec.item_id for rec in manifest],
        normalized=False,
    )


def save_vectors(emb: EmbeddingSet, path: str | Path) -> None:
    """Write an EmbeddingSet's matrix; round-trips bit-exactly."""
    write_vector_file(emb.data, path)
