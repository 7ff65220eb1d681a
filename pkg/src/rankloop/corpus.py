"""Candidate corpus: id list plus unit-normalized embedding matrix.

On-disk interchange is a small binary format -- header (magic ``RLVX``,
version, count, dimension; little-endian) followed by row-major float32 --
paired with a UTF-8 id file, one id per line, same order. A directory of
``<id>.vec`` text files is also accepted for hand-built fixtures.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import InvariantViolation

MAGIC = b"RLVX"
VERSION = 1
_HEADER = struct.Struct("<4sIQI")
NORM_TOL = 1e-6


class CorpusFormatError(ValueError):
    """The corpus files do not follow the documented layout."""


@dataclass
class CorpusIndex:
    """Immutable in-memory corpus used by the retrieval agent."""

    ids: tuple[str, ...]
    vectors: np.ndarray  # float32, shape (count, dimension), unit rows
    id_to_pos: dict[str, int] = field(repr=False, default_factory=dict)
    tie_rank: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if len(self.ids) == 0:
            raise InvariantViolation("corpus must be non-empty")
        vecs = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if vecs.ndim != 2 or vecs.shape[0] != len(self.ids) or vecs.shape[1] < 1:
            raise InvariantViolation("vector matrix shape does not match id count")
        norms = np.linalg.norm(vecs.astype(np.float64), axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOL)
        if bad.size:
            raise InvariantViolation(
                f"{bad.size} corpus vectors are not unit-normalized (first: {self.ids[bad[0]]})"
            )
        self.vectors = vecs
        if not self.id_to_pos:
            self.id_to_pos = {cid: i for i, cid in enumerate(self.ids)}
        if len(self.id_to_pos) != len(self.ids):
            raise InvariantViolation("candidate ids must be unique within a corpus")
        if self.tie_rank is None:
            order = np.argsort(np.array(self.ids, dtype=object), kind="stable")
            rank = np.empty(len(self.ids), dtype=np.int64)
            rank[order] = np.arange(len(self.ids), dtype=np.int64)
            self.tie_rank = rank

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def vector_of(self, cid: str) -> np.ndarray:
        return self.vectors[self.id_to_pos[cid]]

    @classmethod
    def from_arrays(
        cls, ids: Sequence[str], vectors: np.ndarray, normalize: bool = False
    ) -> "CorpusIndex":
        vecs = np.asarray(vectors, dtype=np.float64)
        if normalize:
            norms = np.linalg.norm(vecs, axis=1, keepdims=True)
            if np.any(norms == 0):
                raise InvariantViolation("cannot normalize a zero vector")
            vecs = vecs / norms
        return cls(tuple(str(i) for i in ids), vecs.astype(np.float32))


def write_index(index: CorpusIndex, matrix_path: str | Path, ids_path: str | Path) -> None:
    matrix_path = Path(matrix_path)
    ids_path = Path(ids_path)
    count, dim = index.vectors.shape
    with open(matrix_path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, count, dim))
        fh.write(np.ascontiguousarray(index.vectors, dtype="<f4").tobytes())
    ids_path.write_text("\n".join(index.ids) + "\n", encoding="utf-8")


def read_index(
    matrix_path: str | Path, ids_path: str | Path, normalize: bool = False
) -> CorpusIndex:
    matrix_path = Path(matrix_path)
    ids_path = Path(ids_path)
    raw = matrix_path.read_bytes()
    if len(raw) < _HEADER.size:
        raise CorpusFormatError(f"{matrix_path}: truncated header")
    magic, version, count, dim = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CorpusFormatError(f"{matrix_path}: bad magic {magic!r}")
    if version != VERSION:
        raise CorpusFormatError(f"{matrix_path}: unsupported version {version}")
    expected = _HEADER.size + count * dim * 4
    if len(raw) != expected:
        raise CorpusFormatError(
            f"{matrix_path}: payload is {len(raw) - _HEADER.size} bytes, expected {expected - _HEADER.size}"
        )
    vectors = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(count, dim)
    ids = ids_path.read_text(encoding="utf-8").splitlines()
    ids = [line for line in ids if line != ""]
    if len(ids) != count:
        raise CorpusFormatError(
            f"{ids_path}: {len(ids)} ids for {count} vectors in {matrix_path}"
        )
    return CorpusIndex.from_arrays(ids, np.array(vectors, dtype=np.float64), normalize=normalize)


def read_vector_dir(path: str | Path, normalize: bool = False) -> CorpusIndex:
    """Load a directory of ``<id>.vec`` text files (whitespace-separated floats)."""

    path = Path(path)
    files = sorted(path.glob("*.vec"))
    if not files:
        raise CorpusFormatError(f"{path}: no .vec files found")
    ids: list[str] = []
    rows: list[np.ndarray] = []
    dim: int | None = None
    for f in files:
        values = f.read_text(encoding="utf-8").split()
        try:
            row = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError as exc:
            raise CorpusFormatError(f"{f}: {exc}") from None
        if dim is None:
            dim = row.size
        elif row.size != dim:
            raise CorpusFormatError(f"{f}: dimension {row.size} != {dim}")
        ids.append(f.stem)
        rows.append(row)
    return CorpusIndex.from_arrays(ids, np.vstack(rows), normalize=normalize)
