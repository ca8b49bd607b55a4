"""Historical-chunk embedding index with exact cosine top-k retrieval.

History frames are grouped into contiguous chunks, each embedded as the
renormalized mean of its member-frame embeddings. Retrieval is an exact full
scan: desk-scale index sizes make exactness free, and ties are broken
deterministically toward the chunk that starts earlier.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .errors import (
    DegenerateEmbeddingError,
    IndexBuildError,
    InvalidConfigError,
    InvalidInputError,
)
from .stream_core import FrameRef

_MAGIC = b"SCIX"
_VERSION = 1

#: Norm slack accepted from embedding providers (float32 storage rounds
#: unit vectors by at most ~1e-7).
_PROVIDER_NORM_TOL = 1e-4


class FrameEmbedder(Protocol):
    """Provider of unit-norm frame embeddings in a shared space."""

    embedder_id: str

    def embed_frames(self, frames: Sequence[FrameRef]) -> np.ndarray:
        """Return a (len(frames), dim) array of unit-norm rows."""
        ...


@dataclass(frozen=True)
class Chunk:
    """A contiguous group of historical frames embedded as one retrieval unit."""

    chunk_id: int
    start_index: int
    end_index: int
    frames: tuple[FrameRef, ...] = ()
    embedding: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.start_index < 0 or self.end_index < self.start_index:
            raise InvalidInputError(
                f"chunk {self.chunk_id} has bad frame range [{self.start_index}, {self.end_index}]"
            )
        if self.frames:
            indices = [f.index for f in self.frames]
            if indices[0] != self.start_index or indices[-1] != self.end_index:
                raise InvalidInputError(f"chunk {self.chunk_id} frames do not match its range")
            for a, b in zip(indices, indices[1:]):
                if b != a + 1:
                    raise InvalidInputError(f"chunk {self.chunk_id} frames not contiguous")

    @property
    def span_s(self) -> tuple[float, float]:
        """Timestamp span covered by this chunk (requires member frames)."""
        if not self.frames:
            raise InvalidInputError(f"chunk {self.chunk_id} carries no frames")
        return (self.frames[0].timestamp_s, self.frames[-1].timestamp_s)


@dataclass(frozen=True)
class ChunkIndex:
    """Immutable embedding index over disjoint, chronologically ordered chunks."""

    chunks: tuple[Chunk, ...]
    dim: int
    embedder_id: str
    chunk_len: int | None = None

    def __post_init__(self) -> None:
        # Canonicalize: chunks sorted by start_index regardless of insertion order.
        ordered = tuple(sorted(self.chunks, key=lambda c: c.start_index))
        object.__setattr__(self, "chunks", ordered)
        ids = sorted(c.chunk_id for c in ordered)
        if ids != list(range(len(ordered))):
            raise IndexBuildError("chunk ids must be unique and dense from 0")
        prev_end = -1
        for chunk in ordered:
            if chunk.start_index <= prev_end:
                raise IndexBuildError(f"chunk {chunk.chunk_id} overlaps its predecessor")
            prev_end = chunk.end_index
            if chunk.embedding is None:
                raise IndexBuildError(f"chunk {chunk.chunk_id} has no embedding")
            if chunk.embedding.shape != (self.dim,):
                raise IndexBuildError(
                    f"chunk {chunk.chunk_id} embedding dim {chunk.embedding.shape} != {self.dim}"
                )

    def __len__(self) -> int:
        return len(self.chunks)


def chunk_frames(frames: Sequence[FrameRef], chunk_len: int) -> list[Chunk]:
    """Partition frames into consecutive groups of ``chunk_len``.

    The final chunk may be shorter; every input frame lands in exactly one
    chunk. Embeddings are left unset.
    """
    if chunk_len < 1:
        raise InvalidConfigError(f"chunk_len must be >= 1, got {chunk_len}")
    chunks: list[Chunk] = []
    for cid, lo in enumerate(range(0, len(frames), chunk_len)):
        group = tuple(frames[lo : lo + chunk_len])
        chunks.append(
            Chunk(
                chunk_id=cid,
                start_index=group[0].index,
                end_index=group[-1].index,
                frames=group,
            )
        )
    return chunks


def embed_one_chunk(chunk: Chunk, embedder: FrameEmbedder, expect_dim: int | None = None) -> Chunk:
    """Embed a single chunk as the renormalized mean of its member frames."""
    rows = np.asarray(embedder.embed_frames(chunk.frames), dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] != len(chunk.frames):
        raise IndexBuildError(f"embedder returned shape {rows.shape} for {len(chunk.frames)} frames")
    if expect_dim is not None and rows.shape[1] != expect_dim:
        raise IndexBuildError(f"embedder dim changed from {expect_dim} to {rows.shape[1]}")
    norms = np.linalg.norm(rows, axis=1)
    if np.any(np.abs(norms - 1.0) > _PROVIDER_NORM_TOL):
        raise IndexBuildError(f"embedder returned non-unit vectors for chunk {chunk.chunk_id}")
    mean = rows.mean(axis=0)
    mean_norm = float(np.linalg.norm(mean))
    if mean_norm < 1e-12:
        raise DegenerateEmbeddingError(
            f"chunk {chunk.chunk_id} has zero-norm mean embedding (antipodal frames)"
        )
    return Chunk(
        chunk_id=chunk.chunk_id,
        start_index=chunk.start_index,
        end_index=chunk.end_index,
        frames=chunk.frames,
        embedding=(mean / mean_norm).astype(np.float32),
    )


def embed_chunks(
    chunks: Sequence[Chunk],
    embedder: FrameEmbedder,
    chunk_len: int | None = None,
) -> ChunkIndex:
    """Embed every chunk and assemble the immutable index."""
    embedded: list[Chunk] = []
    dim: int | None = None
    for chunk in chunks:
        done = embed_one_chunk(chunk, embedder, expect_dim=dim)
        dim = int(done.embedding.shape[0])
        embedded.append(done)
    if dim is None:
        raise IndexBuildError("cannot build an index from zero chunks")
    return ChunkIndex(
        chunks=tuple(embedded), dim=dim, embedder_id=embedder.embedder_id, chunk_len=chunk_len
    )


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """dot(u, v) / (|u| |v|), in [-1, 1]; symmetric in its arguments."""
    ua = np.asarray(u, dtype=np.float64)
    va = np.asarray(v, dtype=np.float64)
    if ua.ndim != 1 or va.ndim != 1 or ua.shape != va.shape:
        raise InvalidInputError(f"cosine requires equal-dim vectors, got {ua.shape} and {va.shape}")
    nu = float(np.linalg.norm(ua))
    nv = float(np.linalg.norm(va))
    if nu == 0.0 or nv == 0.0:
        raise InvalidInputError("cosine similarity is undefined for zero vectors")
    sim = float(np.dot(ua, va)) / (nu * nv)
    return max(-1.0, min(1.0, sim))


def top_k(index: ChunkIndex, query_vec: np.ndarray, k: int) -> list[Chunk]:
    """The k most cosine-similar chunks, returned in chronological order.

    Ties break toward the smaller start_index. Asking for more chunks than
    the index holds returns them all. Selection is a heap over exact
    per-chunk cosine scores; the test suite checks it against a full-sort
    oracle.
    """
    if k < 0:
        raise InvalidInputError(f"k must be non-negative, got {k}")
    q = np.asarray(query_vec, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != index.dim:
        raise InvalidInputError(f"query dim {q.shape} does not match index dim {index.dim}")
    if k == 0:
        return []
    keyed = (
        (-cosine_similarity(chunk.embedding, q), chunk.start_index, pos)
        for pos, chunk in enumerate(index.chunks)
    )
    selected = heapq.nsmallest(k, keyed)
    positions = sorted(pos for _, _, pos in selected)
    return [index.chunks[pos] for pos in positions]


def save_index(index: ChunkIndex, path: str | Path) -> None:
    """Persist the index: fixed header, then per-chunk records with float32 LE embeddings."""
    parts = [_MAGIC, struct.pack("<HI", _VERSION, index.dim)]
    parts.append(struct.pack("<I", index.chunk_len or 0))
    eid = index.embedder_id.encode("utf-8")
    parts.append(struct.pack("<H", len(eid)))
    parts.append(eid)
    parts.append(struct.pack("<I", len(index.chunks)))
    for chunk in index.chunks:
        emb = np.ascontiguousarray(chunk.embedding, dtype="<f4")
        parts.append(struct.pack("<III", chunk.chunk_id, chunk.start_index, chunk.end_index))
        parts.append(emb.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_index(path: str | Path) -> ChunkIndex:
    """Load a persisted index. Loaded chunks carry frame ranges but no frame refs.

    save(load(path)) is bit-exact with the original file.
    """
    data = Path(path).read_bytes()
    view = memoryview(data)
    if bytes(view[:4]) != _MAGIC:
        raise InvalidInputError(f"{path} is not a chunk index file")
    off = 4
    version, dim = struct.unpack_from("<HI", view, off)
    off += 6
    if version != _VERSION:
        raise InvalidInputError(f"unsupported index version {version}")
    (chunk_len,) = struct.unpack_from("<I", view, off)
    off += 4
    (eid_len,) = struct.unpack_from("<H", view, off)
    off += 2
    embedder_id = bytes(view[off : off + eid_len]).decode("utf-8")
    off += eid_len
    (count,) = struct.unpack_from("<I", view, off)
    off += 4
    chunks: list[Chunk] = []
    vec_bytes = dim * 4
    for _ in range(count):
        cid, start, end = struct.unpack_from("<III", view, off)
        off += 12
        emb = np.frombuffer(view, dtype="<f4", count=dim, offset=off).copy()
        off += vec_bytes
        chunks.append(Chunk(chunk_id=cid, start_index=start, end_index=end, embedding=emb))
    if off != len(data):
        raise InvalidInputError(f"{path} has {len(data) - off} trailing bytes")
    return ChunkIndex(
        chunks=tuple(chunks),
        dim=dim,
        embedder_id=embedder_id,
        chunk_len=chunk_len or None,
    )
