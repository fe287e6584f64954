"""Data model and on-disk formats.

Activation store layout (all integers little-endian)::

    0..7    magic b"REPSTOR1"
    8..9    u16 format version (1)
    10..13  u32 record count
    14..15  u16 reserved, 0
    u32 length + UTF-8 JSON metadata {"model", "n_layers", "dim"}
    per record:
        u32 length + UTF-8 sample id
        u16 layer
        u32 token count T
        T*dim float32, token-major

A store without records and without metadata is the bare 16-byte header.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "TIE_POLICY",
    "TensorIOError",
    "StoreFormatError",
    "BadMagicError",
    "TruncatedStoreError",
    "DtypeMismatchError",
    "DuplicateRecordError",
    "ManifestError",
    "DanglingIdError",
    "DuplicatePairError",
    "PointCloud",
    "ActivationRecord",
    "ActivationStore",
    "PairManifest",
    "RankMatrix",
    "load_store",
    "write_store",
    "load_manifest",
    "write_manifest",
    "validate_manifest",
]

MAGIC = b"REPSTOR1"
FORMAT_VERSION = 1
TIE_POLICY = "distance-then-index"

_HEADER = struct.Struct("<8sHIH")
_U32 = struct.Struct("<I")
_U16 = struct.Struct("<H")
_F32 = np.dtype("<f4")


class TensorIOError(Exception):
    """Base class for store and manifest errors."""


class StoreFormatError(TensorIOError, ValueError):
    pass


class BadMagicError(StoreFormatError):
    pass


class TruncatedStoreError(StoreFormatError):
    pass


class DtypeMismatchError(TensorIOError, TypeError):
    pass


class DuplicateRecordError(TensorIOError, ValueError):
    pass


class ManifestError(TensorIOError, ValueError):
    pass


class DanglingIdError(ManifestError):
    pass


class DuplicatePairError(ManifestError):
    pass


@dataclass(frozen=True)
class PointCloud:
    """N x D sample representations with one identifier per row."""

    data: np.ndarray
    sample_ids: tuple[str, ...] = ()

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise ValueError(f"point cloud must be 2-D, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.number) or np.iscomplexobj(data):
            raise DtypeMismatchError(f"point cloud must be real-valued, got {data.dtype}")
        n = data.shape[0]
        if n < 3:
            raise ValueError(f"point cloud needs at least 3 samples, got {n}")
        if data.shape[1] < 1:
            raise ValueError("point cloud needs at least one feature")
        if not np.all(np.isfinite(data)):
            raise ValueError("point cloud contains NaN or Inf")
        ids = tuple(self.sample_ids) if len(self.sample_ids) else tuple(str(i) for i in range(n))
        if len(ids) != n:
            raise ValueError(f"{len(ids)} sample ids for {n} samples")
        if len(set(ids)) != n:
            raise ValueError("sample ids are not unique")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "sample_ids", ids)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def take(self, idx) -> PointCloud:
        idx = np.asarray(idx)
        return PointCloud(self.data[idx], tuple(self.sample_ids[i] for i in idx))


@dataclass(frozen=True)
class ActivationRecord:
    sample_id: str
    layer: int
    block: np.ndarray

    @property
    def tokens(self) -> int:
        return self.block.shape[0]

    @property
    def dim(self) -> int:
        return self.block.shape[1]


@dataclass
class RankMatrix:
    """Neighbor ranks of every sample with respect to every other sample.

    ``ranks[i, j]`` is the rank (1 = nearest) of sample ``j`` seen from
    sample ``i``; the diagonal holds 0.  ``order[i]`` lists the other
    samples from nearest to farthest, so ``ranks[i, order[i, r - 1]] == r``.
    """

    ranks: np.ndarray
    order: np.ndarray
    tie_policy: str = TIE_POLICY

    @property
    def n(self) -> int:
        return self.ranks.shape[0]

    def row(self, i: int) -> np.ndarray:
        """Ranks of the n - 1 samples other than ``i``, in sample order."""
        return np.delete(self.ranks[i], i)


def _as_f32_block(block, dim: int | None) -> np.ndarray:
    arr = np.asarray(block)
    if arr.dtype.kind != "f":
        raise DtypeMismatchError(f"activation block must be floating point, got {arr.dtype}")
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"activation block must be (tokens, dim), got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError("activation block needs at least one token")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"activation block has dim {arr.shape[1]}, store dim is {dim}")
    return np.ascontiguousarray(arr, dtype=_F32)


class ActivationStore:
    """Ragged per-sample, per-layer token activations.

    Records keep insertion (file) order. Blocks of a loaded store are
    read-only views into a memory map and are only touched on access.
    """

    def __init__(self, model: str | None = None, n_layers: int | None = None,
                 dim: int | None = None, extra_meta: dict | None = None):
        if model is None and n_layers is None and dim is None:
            self._meta = None
        else:
            if dim is None or n_layers is None:
                raise ValueError("n_layers and dim are required when metadata is given")
            if int(dim) < 1 or int(n_layers) < 0 or int(n_layers) > 0xFFFF:
                raise ValueError(f"invalid store metadata n_layers={n_layers} dim={dim}")
            self._meta = {"model": "" if model is None else str(model),
                          "n_layers": int(n_layers), "dim": int(dim)}
            if extra_meta:
                self._meta.update({k: v for k, v in extra_meta.items() if k not in self._meta})
        self._raw_meta: bytes | None = None
        self._keys: list[tuple[str, int]] = []
        # key -> ndarray, or (offset, tokens) into self._buffer for lazy records
        self._blocks: dict[tuple[str, int], object] = {}
        self._buffer = None

    # metadata ---------------------------------------------------------
    @property
    def meta(self) -> dict | None:
        return None if self._meta is None else dict(self._meta)

    @property
    def model(self) -> str:
        return self._meta["model"] if self._meta else ""

    @property
    def n_layers(self) -> int:
        return self._meta["n_layers"] if self._meta else 0

    @property
    def dim(self) -> int:
        return self._meta["dim"] if self._meta else 0

    # records ----------------------------------------------------------
    def add(self, sample_id: str, layer: int, block) -> None:
        if self._meta is None:
            raise ValueError("store has no metadata; pass model/n_layers/dim first")
        sample_id = str(sample_id)
        layer = int(layer)
        if not 0 <= layer <= self.n_layers:
            raise ValueError(f"layer {layer} outside 0..{self.n_layers}")
        key = (sample_id, layer)
        if key in self._blocks:
            raise DuplicateRecordError(f"duplicate record for sample {sample_id!r} layer {layer}")
        self._blocks[key] = _as_f32_block(block, self.dim)
        self._keys.append(key)

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, key) -> bool:
        return tuple(key) in self._blocks

    def keys(self) -> list[tuple[str, int]]:
        return list(self._keys)

    def block(self, sample_id: str, layer: int) -> np.ndarray:
        try:
            entry = self._blocks[(sample_id, int(layer))]
        except KeyError:
            raise KeyError(f"no record for sample {sample_id!r} at layer {layer}") from None
        if isinstance(entry, np.ndarray):
            return entry
        offset, tokens = entry
        nbytes = tokens * self.dim * 4
        raw = self._buffer[offset:offset + nbytes]
        return raw.view(_F32).reshape(tokens, self.dim)

    def tokens(self, sample_id: str, layer: int) -> int:
        entry = self._blocks[(sample_id, int(layer))]
        return entry.shape[0] if isinstance(entry, np.ndarray) else entry[1]

    def record(self, sample_id: str, layer: int) -> ActivationRecord:
        return ActivationRecord(sample_id, int(layer), self.block(sample_id, layer))

    def records(self) -> Iterator[ActivationRecord]:
        for sid, layer in self._keys:
            yield ActivationRecord(sid, layer, self.block(sid, layer))

    @property
    def sample_ids(self) -> list[str]:
        return list(dict.fromkeys(sid for sid, _ in self._keys))

    @property
    def layers(self) -> list[int]:
        return sorted({layer for _, layer in self._keys})

    def __eq__(self, other) -> bool:
        if not isinstance(other, ActivationStore):
            return NotImplemented
        if self._meta != other._meta or self._keys != other._keys:
            return False
        for sid, layer in self._keys:
            a, b = self.block(sid, layer), other.block(sid, layer)
            if a.shape != b.shape or a.tobytes() != b.tobytes():
                return False
        return True

    def __repr__(self) -> str:
        return (f"ActivationStore(model={self.model!r}, n_layers={self.n_layers}, "
                f"dim={self.dim}, records={len(self)})")


def _encode_meta(store: ActivationStore) -> bytes:
    if store._raw_meta is not None and json.loads(store._raw_meta) == store._meta:
        return store._raw_meta
    return json.dumps(store._meta, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def write_store(store: ActivationStore, path) -> None:
    """Write ``store`` to ``path`` in the binary store format."""
    if store._meta is None and len(store):
        raise ValueError("cannot write records without metadata")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        _write_store(store, tmp)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _write_store(store: ActivationStore, path: Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(store), 0))
        if store._meta is None:
            return
        meta = _encode_meta(store)
        fh.write(_U32.pack(len(meta)))
        fh.write(meta)
        for sid, layer in store._keys:
            bid = sid.encode("utf-8")
            block = store.block(sid, layer)
            fh.write(_U32.pack(len(bid)))
            fh.write(bid)
            fh.write(_U16.pack(layer))
            fh.write(_U32.pack(block.shape[0]))
            fh.write(np.ascontiguousarray(block, dtype=_F32).tobytes())


def load_store(path) -> ActivationStore:
    """Open a store file; record payloads are memory-mapped, not read."""
    path = Path(path)
    size = path.stat().st_size
    if size < _HEADER.size:
        raise TruncatedStoreError(f"{path}: {size} bytes is shorter than the 16-byte header")
    buf = np.memmap(path, dtype=np.uint8, mode="r") if size else np.empty(0, np.uint8)
    magic, version, count, reserved = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise StoreFormatError(f"{path}: unsupported format version {version}")
    if reserved != 0:
        raise StoreFormatError(f"{path}: reserved header field is {reserved}, expected 0")

    store = ActivationStore()
    store._buffer = buf
    pos = _HEADER.size
    if pos == size:
        if count:
            raise TruncatedStoreError(f"{path}: header announces {count} records but no metadata")
        return store

    def need(n, what):
        if pos + n > size:
            raise TruncatedStoreError(f"{path}: truncated while reading {what} at byte {pos}")

    need(4, "metadata length")
    (mlen,) = _U32.unpack_from(buf, pos)
    pos += 4
    need(mlen, "metadata")
    raw_meta = bytes(buf[pos:pos + mlen])
    pos += mlen
    try:
        meta = json.loads(raw_meta.decode("utf-8"))
        dim, n_layers = meta["dim"], meta["n_layers"]
        model = meta["model"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise StoreFormatError(f"{path}: invalid metadata block ({exc})") from None
    if not isinstance(dim, int) or not isinstance(n_layers, int) or not isinstance(model, str):
        raise StoreFormatError(f"{path}: metadata fields have wrong types: {meta}")
    if dim < 1 or n_layers < 0:
        raise StoreFormatError(f"{path}: invalid metadata values: {meta}")
    store._meta = dict(meta)
    store._raw_meta = raw_meta

    for r in range(count):
        need(4, f"record {r} id length")
        (idlen,) = _U32.unpack_from(buf, pos)
        pos += 4
        need(idlen + 6, f"record {r} header")
        try:
            sid = bytes(buf[pos:pos + idlen]).decode("utf-8")
        except UnicodeDecodeError:
            raise StoreFormatError(f"{path}: record {r} id is not UTF-8") from None
        pos += idlen
        (layer,) = _U16.unpack_from(buf, pos)
        (tokens,) = _U32.unpack_from(buf, pos + 2)
        pos += 6
        if layer > n_layers:
            raise StoreFormatError(f"{path}: record {r} layer {layer} exceeds n_layers={n_layers}")
        if tokens < 1:
            raise StoreFormatError(f"{path}: record {r} has zero tokens")
        nbytes = tokens * dim * 4
        need(nbytes, f"record {r} payload")
        key = (sid, layer)
        if key in store._blocks:
            raise DuplicateRecordError(f"{path}: duplicate record for sample {sid!r} layer {layer}")
        store._blocks[key] = (pos, tokens)
        store._keys.append(key)
        pos += nbytes
    if pos != size:
        raise StoreFormatError(f"{path}: {size - pos} trailing bytes after last record")
    return store


@dataclass
class PairManifest:
    left_source: str = ""
    right_source: str = ""
    pairs: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        self.pairs = [(str(a), str(b)) for a, b in self.pairs]

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def left_ids(self) -> list[str]:
        return [a for a, _ in self.pairs]

    @property
    def right_ids(self) -> list[str]:
        return [b for _, b in self.pairs]

    def swapped(self) -> PairManifest:
        return PairManifest(self.right_source, self.left_source, [(b, a) for a, b in self.pairs])

    @classmethod
    def identity(cls, ids: Sequence[str], source: str = "") -> PairManifest:
        return cls(source, source, [(i, i) for i in ids])

    def to_json(self) -> dict:
        return {"left_source": self.left_source, "right_source": self.right_source,
                "pairs": [list(p) for p in self.pairs]}


def load_manifest(path) -> PairManifest:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON ({exc})") from None
    try:
        pairs = obj["pairs"]
        if not all(isinstance(p, list) and len(p) == 2 for p in pairs):
            raise ManifestError(f"{path}: every pair must be a two-element list")
        return PairManifest(str(obj.get("left_source", "")), str(obj.get("right_source", "")),
                            [tuple(p) for p in pairs])
    except (KeyError, TypeError):
        raise ManifestError(f"{path}: expected an object with a 'pairs' list") from None


def write_manifest(manifest: PairManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_json(), fh, ensure_ascii=False)
        fh.write("\n")


def validate_manifest(manifest: PairManifest, left: ActivationStore, right: ActivationStore) -> None:
    """Raise unless every referenced id exists and no pair repeats."""
    seen = set()
    left_ids = set(left.sample_ids)
    right_ids = set(right.sample_ids)
    for a, b in manifest.pairs:
        if a not in left_ids:
            raise DanglingIdError(f"left id {a!r} not found in store {left.model!r}")
        if b not in right_ids:
            raise DanglingIdError(f"right id {b!r} not found in store {right.model!r}")
        if (a, b) in seen:
            raise DuplicatePairError(f"duplicate pair ({a!r}, {b!r})")
        seen.add((a, b))
