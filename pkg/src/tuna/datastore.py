"""Embedding-keyed tag datastore with exact and IVF k-NN cosine retrieval.

Keys are unit vectors stored as float32; cosine is the float64 dot product of
key and query. Results are ordered by descending score with exact ties broken
by lower insertion index, so every query has a single correct answer.

Binary format (little-endian)::

    magic    b"TUNADS\\0\\0"
    version  u16   (1)
    kind     u8    (0 = flat, 1 = ivf)
    dim      u32
    count    u64
    reserved 16 bytes (ivf: train_seed u64, iters u32, 4 zero bytes; flat: zeros)
    keys     count * dim float32, row-major
    strings  u32 n, then n * (u32 byte length, UTF-8 bytes)
    entries  count * (id u32, tag_count u16, tag_count * u32, caption u32 | 0xFFFFFFFF)
    [ivf]    nlist u32, nlist * dim float32 centroids, nlist * (u32 len, len * u32)
    crc32    u32 over every preceding byte

String references are indices into the string table, which holds each distinct
string once in first-use order (id, tags, caption per entry).
"""
from __future__ import annotations

import math
import os
import struct
import zlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .embedder import SeededStream
from .errors import (
    BadMagicError,
    ChecksumMismatchError,
    CorruptStoreError,
    DimensionMismatchError,
    DuplicateIdError,
    EmptyIndexError,
    NonFiniteError,
    NonUnitKeyError,
    StoreIOError,
    VersionUnsupportedError,
)

MAGIC = b"TUNADS\x00\x00"
VERSION = 1
KIND_FLAT, KIND_IVF = 0, 1
NO_CAPTION = 0xFFFFFFFF
UNIT_TOL = 1e-6
DEFAULT_K = 5

_HEADER = struct.Struct("<8sHBIQ16s")


@dataclass(frozen=True)
class StoreEntry:
    image_id: str
    key: np.ndarray
    tags: tuple = ()
    caption: str | None = None


@dataclass(frozen=True)
class QueryHit:
    image_id: str
    score: float
    tags: tuple
    rank: int

    def to_dict(self) -> dict:
        return {"id": self.image_id, "rank": self.rank, "score": self.score, "tags": list(self.tags)}


class FlatIndex:
    """Sealed, insertion-ordered store with exact k-NN search."""

    kind = KIND_FLAT

    def __init__(self, dim: int, ids: Sequence[str], keys: np.ndarray,
                 tags: Sequence[tuple], captions: Sequence[str | None]):
        self.dim = dim
        self.ids = tuple(ids)
        self.keys = np.ascontiguousarray(keys, dtype=np.float32).reshape(len(self.ids), dim)
        self.keys.setflags(write=False)
        self._keys_t = np.ascontiguousarray(self.keys.T)
        self._keys_t.setflags(write=False)
        self.tags = tuple(tuple(t) for t in tags)
        self.captions = tuple(captions)
        self._pos = {image_id: i for i, image_id in enumerate(self.ids)}
        self.sealed = True

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def flat(self) -> "FlatIndex":
        return self

    def position(self, image_id: str) -> int | None:
        return self._pos.get(image_id)

    def entry(self, i: int) -> StoreEntry:
        return StoreEntry(self.ids[i], self.keys[i].astype(np.float64), self.tags[i], self.captions[i])

    def entries(self):
        return (self.entry(i) for i in range(len(self)))

    def vocabulary(self) -> list[str]:
        """Distinct tags in first-occurrence (insertion) order."""
        seen = {}
        for tags in self.tags:
            for t in tags:
                seen.setdefault(t, None)
        return list(seen)

    def has_captions(self) -> bool:
        return any(c is not None for c in self.captions)

    def _hits(self, idx, scores) -> list[QueryHit]:
        return [
            QueryHit(self.ids[i], min(1.0, max(-1.0, float(s))), self.tags[i], rank)
            for rank, (i, s) in enumerate(zip(idx.tolist(), scores.tolist()), 1)
        ]


def _check_query(query, dim: int) -> np.ndarray:
    q = np.ascontiguousarray(query, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != dim:
        raise DimensionMismatchError(f"query has shape {q.shape}, index dim is {dim}")
    if not np.all(np.isfinite(q)):
        raise NonFiniteError("query contains NaN or Inf")
    return q


def _exclude_pos(index: FlatIndex, exclude_id: str | None) -> int:
    if exclude_id is None:
        return -1
    pos = index.position(exclude_id)
    return -1 if pos is None else pos


def build_flat(entries: Iterable[StoreEntry], dim: int) -> FlatIndex:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    ids, keys, tags, captions, seen = [], [], [], [], set()
    for e in entries:
        key = np.asarray(e.key, dtype=np.float64)
        if key.shape != (dim,):
            raise DimensionMismatchError(f"{e.image_id!r}: key shape {key.shape}, expected ({dim},)")
        if not np.all(np.isfinite(key)):
            raise NonFiniteError(f"{e.image_id!r}: key contains NaN or Inf")
        if abs(math.sqrt(float(key @ key)) - 1.0) > UNIT_TOL:
            raise NonUnitKeyError(f"{e.image_id!r}: key norm is not 1")
        if e.image_id in seen:
            raise DuplicateIdError(f"duplicate image id {e.image_id!r}")
        seen.add(e.image_id)
        ids.append(e.image_id)
        keys.append(key)
        tags.append(tuple(e.tags))
        captions.append(e.caption)
    arr = np.array(keys, dtype=np.float32).reshape(len(ids), dim)
    return FlatIndex(dim, ids, arr, tags, captions)


def build_flat_arrays(ids: Sequence[str], keys: np.ndarray, tags: Sequence[Sequence[str]] | None = None,
                      captions: Sequence[str | None] | None = None) -> FlatIndex:
    """Vectorized :func:`build_flat` for large key matrices (same checks)."""
    keys = np.asarray(keys)
    if keys.ndim != 2 or keys.shape[0] != len(ids):
        raise DimensionMismatchError(f"keys shape {keys.shape} does not match {len(ids)} ids")
    if not np.all(np.isfinite(keys)):
        raise NonFiniteError("keys contain NaN or Inf")
    k64 = keys.astype(np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", k64, k64))
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        bad = int(np.argmax(np.abs(norms - 1.0) > UNIT_TOL))
        raise NonUnitKeyError(f"{ids[bad]!r}: key norm is not 1")
    if len(set(ids)) != len(ids):
        seen = set()
        dup = next(i for i in ids if i in seen or seen.add(i))
        raise DuplicateIdError(f"duplicate image id {dup!r}")
    n = len(ids)
    tags = [tuple(t) for t in tags] if tags is not None else [()] * n
    captions = list(captions) if captions is not None else [None] * n
    return FlatIndex(keys.shape[1], ids, keys, tags, captions)


def knn(index, query, k: int = DEFAULT_K, exclude_id: str | None = None) -> list[QueryHit]:
    """Exact top-``k`` by cosine; ``exclude_id`` drops that entry (e.g. the query image itself)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    flat = index.flat
    q = _check_query(query, flat.dim)
    if len(flat) == 0:
        return []
    idx, scores = _kernels.scan_topk(flat._keys_t, q, k, None, _exclude_pos(flat, exclude_id))
    return flat._hits(idx, scores)


class IvfIndex:
    """Inverted-file index over a :class:`FlatIndex` (spherical k-means partitions)."""

    kind = KIND_IVF

    def __init__(self, flat: FlatIndex, centroids: np.ndarray, postings: Sequence[np.ndarray],
                 train_seed: int = 0, iters: int = 0):
        self.flat = flat
        self.dim = flat.dim
        self.centroids = np.ascontiguousarray(centroids, dtype=np.float32)
        self.centroids.setflags(write=False)
        self._centroids_t = np.ascontiguousarray(self.centroids.T)
        self.postings = tuple(np.asarray(p, dtype=np.int64) for p in postings)
        self.train_seed = train_seed
        self.iters = iters
        self.sealed = True

    @property
    def nlist(self) -> int:
        return self.centroids.shape[0]

    def __len__(self) -> int:
        return len(self.flat)

    def __getattr__(self, name):
        # ids, tags, captions, vocabulary, ... come from the underlying flat index
        if name == "flat":
            raise AttributeError(name)
        return getattr(self.flat, name)


def _normalize_rows(m: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    return m / norms[:, None]


def train_ivf(index: FlatIndex, nlist: int, seed: int = 0, iters: int = 10) -> IvfIndex:
    """Spherical k-means partitioning.

    Centroids start at ``nlist`` distinct keys drawn with the seeded stream.
    Each iteration assigns every key to its max-cosine centroid (ties: lowest
    centroid index) and resets centroids to normalized member means. An empty
    cluster is reseeded with the key farthest from its current centroid.
    """
    flat = index.flat
    n = len(flat)
    if n == 0:
        raise EmptyIndexError("cannot train an IVF index on an empty store")
    if not 1 <= nlist <= n:
        raise ValueError(f"nlist must be in [1, {n}], got {nlist}")
    if iters < 0:
        raise ValueError("iters must be >= 0")

    picks = SeededStream(seed, "ivf-init").sample(n, nlist)
    centroids = flat.keys[picks].copy()
    keys64 = flat.keys.astype(np.float64)
    for _ in range(iters):
        labels, best = _kernels.assign_nearest(flat._keys_t, centroids)
        counts = np.bincount(labels, minlength=nlist)
        sums = np.zeros((nlist, flat.dim), dtype=np.float64)
        np.add.at(sums, labels, keys64)
        new = np.empty_like(sums)
        order = np.lexsort((np.arange(n), best))  # farthest first, ties by index
        used = 0
        for c in range(nlist):
            norm = math.sqrt(float(sums[c] @ sums[c])) if counts[c] else 0.0
            if norm > 1e-12:
                new[c] = sums[c] / norm
            else:
                new[c] = keys64[order[used]]
                used += 1
        centroids = _normalize_rows(new).astype(np.float32)
    labels, _ = _kernels.assign_nearest(flat._keys_t, centroids)
    members = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[members], np.arange(nlist + 1))
    postings = [members[bounds[c]:bounds[c + 1]] for c in range(nlist)]
    return IvfIndex(flat, centroids, postings, train_seed=seed, iters=iters)


def knn_ivf(index: IvfIndex, query, k: int = DEFAULT_K, nprobe: int = 1,
            exclude_id: str | None = None) -> list[QueryHit]:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 1 <= nprobe <= index.nlist:
        raise ValueError(f"nprobe must be in [1, {index.nlist}], got {nprobe}")
    flat = index.flat
    q = _check_query(query, flat.dim)
    probe, _ = _kernels.scan_topk(index._centroids_t, q, nprobe)
    rows = np.sort(np.concatenate([index.postings[c] for c in probe.tolist()]))
    if rows.size == 0:
        return []
    idx, scores = _kernels.scan_topk(flat._keys_t, q, k, rows, _exclude_pos(flat, exclude_id))
    return flat._hits(idx, scores)


def search(index, query, k: int = DEFAULT_K, nprobe: int | None = None,
           exclude_id: str | None = None) -> list[QueryHit]:
    """Dispatch to :func:`knn` or :func:`knn_ivf` (``nprobe`` defaults to ``nlist``)."""
    if isinstance(index, IvfIndex):
        return knn_ivf(index, query, k, nprobe or index.nlist, exclude_id)
    return knn(index, query, k, exclude_id)


# ---------------------------------------------------------------- persistence

def _u32_array(values) -> bytes:
    return np.asarray(values, dtype="<u4").tobytes()


def dumps(index) -> bytes:
    flat = index.flat
    kind = index.kind
    reserved = bytes(16)
    if kind == KIND_IVF:
        reserved = struct.pack("<QI4x", index.train_seed & 0xFFFFFFFFFFFFFFFF, index.iters)
    parts = [_HEADER.pack(MAGIC, VERSION, kind, flat.dim, len(flat), reserved)]
    parts.append(flat.keys.astype("<f4").tobytes())

    table: dict[str, int] = {}

    def ref(s: str) -> int:
        return table.setdefault(s, len(table))

    records = []
    for image_id, tags, caption in zip(flat.ids, flat.tags, flat.captions):
        rec = [struct.pack("<IH", ref(image_id), len(tags))]
        rec.append(_u32_array([ref(t) for t in tags]))
        rec.append(struct.pack("<I", NO_CAPTION if caption is None else ref(caption)))
        records.append(b"".join(rec))
    strings = [struct.pack("<I", len(table))]
    for s in table:
        raw = s.encode("utf-8")
        strings.append(struct.pack("<I", len(raw)) + raw)
    parts.extend(strings)
    parts.extend(records)
    if kind == KIND_IVF:
        parts.append(struct.pack("<I", index.nlist))
        parts.append(index.centroids.astype("<f4").tobytes())
        for p in index.postings:
            parts.append(struct.pack("<I", len(p)) + _u32_array(p))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def save(index, path) -> None:
    """Write atomically: a partial file never replaces a good one."""
    data = dumps(index)
    tmp = f"{os.fspath(path)}.tmp{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise StoreIOError(f"cannot write store {path}: {exc}") from exc


class _Reader:
    def __init__(self, buf: bytes, end: int):
        self.buf, self.pos, self.end = buf, 0, end

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > self.end:
            raise CorruptStoreError(f"store truncated at byte {self.pos} (wanted {n} more)")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def array(self, dtype: str, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(size * count), dtype=dtype)


def loads(data: bytes):
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise BadMagicError("not a TUNADS store (bad magic)")
    if len(data) < _HEADER.size + 4:
        raise ChecksumMismatchError("store truncated inside header")
    _, version, kind, dim, count, reserved = _HEADER.unpack_from(data)
    if version != VERSION:
        raise VersionUnsupportedError(f"store version {version} is not supported (expected {VERSION})")
    (stored_crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stored_crc:
        raise ChecksumMismatchError("store checksum mismatch (corrupt or truncated)")
    if kind not in (KIND_FLAT, KIND_IVF):
        raise CorruptStoreError(f"unknown store kind {kind}")

    r = _Reader(data, len(data) - 4)
    r.take(_HEADER.size)
    keys = r.array("<f4", count * dim).reshape(count, dim)
    (nstrings,) = r.unpack("<I")
    strings = []
    for _ in range(nstrings):
        (length,) = r.unpack("<I")
        try:
            strings.append(r.take(length).decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise CorruptStoreError(f"invalid UTF-8 in string table: {exc}") from exc

    def lookup(i: int) -> str:
        if i >= nstrings:
            raise CorruptStoreError(f"string reference {i} out of range")
        return strings[i]

    ids, tags, captions = [], [], []
    for _ in range(count):
        id_ref, ntags = r.unpack("<IH")
        ids.append(lookup(id_ref))
        tags.append(tuple(lookup(int(t)) for t in r.array("<u4", ntags)))
        (cap_ref,) = r.unpack("<I")
        captions.append(None if cap_ref == NO_CAPTION else lookup(cap_ref))
    if len(set(ids)) != len(ids):
        raise CorruptStoreError("duplicate image ids in store")
    flat = FlatIndex(dim, ids, keys, tags, captions)

    if kind == KIND_FLAT:
        index = flat
    else:
        train_seed, iters = struct.unpack("<QI4x", reserved)
        (nlist,) = r.unpack("<I")
        centroids = r.array("<f4", nlist * dim).reshape(nlist, dim)
        postings = []
        for _ in range(nlist):
            (length,) = r.unpack("<I")
            postings.append(r.array("<u4", length).astype(np.int64))
        covered = np.concatenate(postings) if postings else np.empty(0, dtype=np.int64)
        if covered.size != count or not np.array_equal(np.sort(covered), np.arange(count)):
            raise CorruptStoreError("posting lists do not partition the entries")
        index = IvfIndex(flat, centroids, postings, train_seed=train_seed, iters=iters)
    if r.pos != r.end:
        raise CorruptStoreError(f"{r.end - r.pos} trailing bytes after store payload")
    return index


def load(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise StoreIOError(f"cannot read store {path}: {exc}") from exc
    return loads(data)
