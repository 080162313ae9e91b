"""Key/value memory of (embedding, score) pairs with exact L2 search.

Binary layout (little-endian, no padding)::

    magic    8 bytes   b"RAMPDS01"
    version  u32       1
    dim      u32
    count    u64
    records  count x [dim x f32 key, f64 value, u32 id length, id UTF-8 bytes]
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import SampleSet

MAGIC = b"RAMPDS01"
VERSION = 1
_HEADER = struct.Struct("<8sIIQ")
HEADER_SIZE = _HEADER.size


class DatastoreFormatError(ValueError):
    pass


class NotADatastoreError(DatastoreFormatError):
    pass


class TruncatedDatastoreError(DatastoreFormatError):
    pass


class DatastoreVersionError(DatastoreFormatError):
    pass


@dataclass(frozen=True)
class NeighborHit:
    index: int
    distance: float
    value: float


class Datastore:
    """Immutable store; keys are float32, values float64."""

    def __init__(self, keys, values, ids):
        keys = np.array(keys, dtype=np.float32, ndmin=2)
        values = np.array(values, dtype=np.float64).reshape(-1)
        ids = list(ids)
        if keys.shape[0] != values.shape[0] or len(ids) != values.shape[0]:
            raise ValueError("keys, values and ids must have the same length")
        if keys.shape[0] == 0:
            raise ValueError("a datastore needs at least one entry")
        keys.setflags(write=False)
        values.setflags(write=False)
        self._keys = keys
        self._keys64 = keys.astype(np.float64)
        self._keys64.setflags(write=False)
        self._values = values
        self._ids = tuple(ids)
        self._id_index = {k: i for i, k in enumerate(self._ids)}

    keys = property(lambda self: self._keys)
    values = property(lambda self: self._values)
    ids = property(lambda self: self._ids)

    @property
    def dim(self) -> int:
        return self._keys.shape[1]

    def __len__(self):
        return self._keys.shape[0]

    def index_of(self, sample_id: str):
        return self._id_index.get(sample_id)

    def __eq__(self, other):
        if not isinstance(other, Datastore):
            return NotImplemented
        return (
            self._ids == other._ids
            and np.array_equal(self._keys, other._keys)
            and np.array_equal(self._values, other._values)
        )

    def distances(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        if q.ndim != 1 or q.shape[0] != self.dim:
            raise ValueError(f"query has shape {q.shape}, store dim is {self.dim}")
        diff = self._keys64 - q
        return np.sqrt(np.sum(diff * diff, axis=1))

    def search_indices(self, q, k: int, exclude: int | None = None):
        """Top-``k`` indices and distances, ascending, ties broken by lower index."""
        if k < 1:
            raise ValueError("k must be at least 1")
        d = self.distances(q)
        idx = np.arange(len(d))
        if exclude is not None:
            keep = idx != exclude
            d, idx = d[keep], idx[keep]
            if len(d) == 0:
                raise ValueError("no entries left after exclusion")
        k = min(k, len(d))
        if k < len(d):
            # argpartition does not respect ties; widen the candidate set to every
            # entry no farther than the k-th distance before the stable sort.
            kth = np.partition(d, k - 1)[k - 1]
            cand = np.flatnonzero(d <= kth)
        else:
            cand = np.arange(len(d))
        order = cand[np.argsort(d[cand], kind="stable")][:k]
        return idx[order], d[order]

    def search(self, q, k: int, exclude: int | None = None) -> list[NeighborHit]:
        idx, dist = self.search_indices(q, k, exclude)
        return [NeighborHit(int(i), float(x), float(self._values[i])) for i, x in zip(idx, dist)]

    def to_bytes(self) -> bytes:
        parts = [_HEADER.pack(MAGIC, VERSION, self.dim, len(self))]
        keys_le = self._keys.astype("<f4")
        for key, value, sid in zip(keys_le, self._values, self._ids):
            raw = sid.encode("utf-8")
            parts.append(key.tobytes())
            parts.append(struct.pack("<dI", value, len(raw)))
            parts.append(raw)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Datastore":
        if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
            raise NotADatastoreError("not a RAMP datastore (bad magic)")
        if len(data) < HEADER_SIZE:
            raise TruncatedDatastoreError("truncated datastore header")
        _, version, dim, count = _HEADER.unpack_from(data, 0)
        if version != VERSION:
            raise DatastoreVersionError(f"unsupported datastore version {version} (expected {VERSION})")
        pos = HEADER_SIZE
        keys = np.empty((count, dim), dtype=np.float32)
        values = np.empty(count, dtype=np.float64)
        ids = []
        key_bytes = 4 * dim
        for i in range(count):
            end = pos + key_bytes + 12
            if end > len(data):
                raise TruncatedDatastoreError(f"truncated datastore at record {i}")
            keys[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=pos)
            values[i], n = struct.unpack_from("<dI", data, pos + key_bytes)
            pos = end
            if pos + n > len(data):
                raise TruncatedDatastoreError(f"truncated datastore at record {i} id")
            ids.append(data[pos : pos + n].decode("utf-8"))
            pos += n
        if pos != len(data):
            raise DatastoreFormatError(f"{len(data) - pos} trailing bytes after {count} records")
        return cls(keys, values, ids)


def build(sset: SampleSet) -> Datastore:
    if len(sset) == 0:
        raise ValueError("cannot build a datastore from an empty sample set")
    if any(s.score is None for s in sset):
        raise ValueError("datastore samples need scores")
    return Datastore(sset.embeddings, sset.scores, sset.ids)


def save(store: Datastore, path) -> None:
    Path(path).write_bytes(store.to_bytes())


def load(path) -> Datastore:
    return Datastore.from_bytes(Path(path).read_bytes())


def record_size(dim: int, id_bytes: int) -> int:
    return 4 * dim + 8 + 4 + id_bytes
