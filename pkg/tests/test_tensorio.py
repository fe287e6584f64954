import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infoimbalance.tensorio import (
    ActivationStore,
    BadMagicError,
    DanglingIdError,
    DtypeMismatchError,
    DuplicatePairError,
    DuplicateRecordError,
    PairManifest,
    PointCloud,
    StoreFormatError,
    TruncatedStoreError,
    load_manifest,
    load_store,
    validate_manifest,
    write_manifest,
    write_store,
)


def random_store(rng, max_samples=6, max_layers=4, max_dim=5, max_tokens=7):
    n_layers = int(rng.integers(0, max_layers + 1))
    dim = int(rng.integers(1, max_dim + 1))
    store = ActivationStore(f"model-{rng.integers(1000)}", n_layers, dim)
    for s in range(int(rng.integers(0, max_samples + 1))):
        sid = "".join(rng.choice(list("abcxyzé0123"), size=int(rng.integers(1, 6))))
        sid = f"{sid}-{s}"
        for layer in rng.permutation(n_layers + 1)[: int(rng.integers(1, n_layers + 2))]:
            t = int(rng.integers(1, max_tokens + 1))
            store.add(sid, int(layer), rng.standard_normal((t, dim)))
    return store


def test_metadata_round_trip(tmp_path):
    store = ActivationStore("m", 3, 4)
    for sid in ("s0", "s1"):
        for layer in range(3):
            store.add(sid, layer, np.ones((2, 4)))
    write_store(store, tmp_path / "a.bin")
    back = load_store(tmp_path / "a.bin")
    assert (back.n_layers, back.dim, back.model) == (3, 4, "m")
    assert back.sample_ids == ["s0", "s1"]
    assert back == store


def test_empty_store_is_header_only(tmp_path):
    write_store(ActivationStore(), tmp_path / "e.bin")
    raw = (tmp_path / "e.bin").read_bytes()
    assert len(raw) == 16
    assert raw == b"REPSTOR1" + struct.pack("<HIH", 1, 0, 0)
    assert len(load_store(tmp_path / "e.bin")) == 0


def test_single_record_size(tmp_path):
    store = ActivationStore("m", 0, 1)
    store.add("s0", 0, np.array([[0.5]]))
    path = tmp_path / "one.bin"
    write_store(store, path)
    raw = path.read_bytes()
    meta_len = struct.unpack_from("<I", raw, 16)[0]
    record = raw[16 + 4 + meta_len:]
    # u32 id length + "s0" + u16 layer + u32 T, then one float32
    assert len(record) == 12 + 4
    assert struct.unpack("<f", record[-4:])[0] == 0.5
    assert json.loads(raw[20:20 + meta_len]) == {"model": "m", "n_layers": 0, "dim": 1}


def test_header_fields(tmp_path):
    store = ActivationStore("m", 1, 2)
    store.add("a", 0, np.zeros((1, 2)))
    store.add("a", 1, np.zeros((3, 2)))
    write_store(store, tmp_path / "h.bin")
    magic, version, count, reserved = struct.unpack_from("<8sHIH", (tmp_path / "h.bin").read_bytes())
    assert (magic, version, count, reserved) == (b"REPSTOR1", 1, 2, 0)


def test_random_stores_round_trip_bytewise(tmp_path):
    rng = np.random.default_rng(123)
    for i in range(25):
        store = random_store(rng)
        p1, p2 = tmp_path / f"{i}a.bin", tmp_path / f"{i}b.bin"
        write_store(store, p1)
        loaded = load_store(p1)
        assert loaded == store
        write_store(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_round_trip_property(tmp_path_factory, seed):
    d = tmp_path_factory.mktemp("rt")
    store = random_store(np.random.default_rng(seed))
    write_store(store, d / "s.bin")
    write_store(load_store(d / "s.bin"), d / "t.bin")
    assert (d / "s.bin").read_bytes() == (d / "t.bin").read_bytes()
    assert load_store(d / "t.bin") == store


def test_ragged_blocks_are_independent(tmp_path):
    store = ActivationStore("m", 0, 3)
    store.add("short", 0, np.arange(3, dtype=np.float32)[None])
    store.add("long", 0, np.arange(30, dtype=np.float32).reshape(10, 3))
    write_store(store, tmp_path / "r.bin")
    back = load_store(tmp_path / "r.bin")
    assert back.tokens("short", 0) == 1 and back.tokens("long", 0) == 10
    np.testing.assert_array_equal(back.block("long", 0)[-1], [27, 28, 29])


def test_values_are_float32_little_endian(tmp_path):
    store = ActivationStore("m", 0, 2)
    store.add("a", 0, np.array([[1.0, -2.5]], dtype=np.float64))
    write_store(store, tmp_path / "f.bin")
    raw = (tmp_path / "f.bin").read_bytes()
    assert raw[-8:] == struct.pack("<2f", 1.0, -2.5)
    assert load_store(tmp_path / "f.bin").block("a", 0).dtype == np.dtype("<f4")


def test_bad_magic(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"XXXXXXXX" + bytes(8))
    with pytest.raises(BadMagicError):
        load_store(tmp_path / "x.bin")


def test_truncated_payload(tmp_path):
    store = ActivationStore("m", 0, 4)
    store.add("a", 0, np.ones((5, 4)))
    write_store(store, tmp_path / "t.bin")
    raw = (tmp_path / "t.bin").read_bytes()
    for cut in (3, 15, 25, len(raw) - 1):
        (tmp_path / "c.bin").write_bytes(raw[:cut])
        with pytest.raises(TruncatedStoreError):
            load_store(tmp_path / "c.bin")


def test_errors_are_distinct():
    kinds = {BadMagicError, TruncatedStoreError, DtypeMismatchError, DuplicateRecordError}
    assert len(kinds) == 4
    assert not issubclass(BadMagicError, TruncatedStoreError)
    assert not issubclass(TruncatedStoreError, BadMagicError)


def test_duplicate_record_in_file(tmp_path):
    store = ActivationStore("m", 0, 1)
    store.add("a", 0, np.ones((1, 1)))
    write_store(store, tmp_path / "d.bin")
    raw = bytearray((tmp_path / "d.bin").read_bytes())
    meta_len = struct.unpack_from("<I", raw, 16)[0]
    record = bytes(raw[20 + meta_len:])
    struct.pack_into("<I", raw, 10, 2)
    (tmp_path / "dd.bin").write_bytes(bytes(raw) + record)
    with pytest.raises(DuplicateRecordError):
        load_store(tmp_path / "dd.bin")


def test_duplicate_record_on_add():
    store = ActivationStore("m", 0, 1)
    store.add("a", 0, np.ones((1, 1)))
    with pytest.raises(DuplicateRecordError):
        store.add("a", 0, np.ones((2, 1)))


def test_integer_block_is_dtype_error():
    store = ActivationStore("m", 0, 2)
    with pytest.raises(DtypeMismatchError):
        store.add("a", 0, np.ones((1, 2), dtype=np.int32))


def test_other_format_errors(tmp_path):
    good = b"REPSTOR1" + struct.pack("<HIH", 1, 0, 0)
    cases = [
        b"REPSTOR1" + struct.pack("<HIH", 2, 0, 0),
        b"REPSTOR1" + struct.pack("<HIH", 1, 0, 7),
        good + b"junk",
    ]
    for raw in cases:
        (tmp_path / "b.bin").write_bytes(raw)
        with pytest.raises(StoreFormatError):
            load_store(tmp_path / "b.bin")


def test_write_is_exclusive_and_atomic(tmp_path):
    store = ActivationStore("m", 0, 1)
    store.add("a", 0, np.ones((1, 1)))
    write_store(store, tmp_path / "w.bin")
    assert [p.name for p in tmp_path.iterdir()] == ["w.bin"]


def test_manifest_round_trip_and_validation(tmp_path):
    left = ActivationStore("l", 0, 1)
    right = ActivationStore("r", 0, 1)
    for i in range(3):
        left.add(f"a{i}", 0, np.ones((1, 1)))
        right.add(f"b{i}", 0, np.ones((1, 1)))
    m = PairManifest("en", "it", [(f"a{i}", f"b{i}") for i in range(3)])
    write_manifest(m, tmp_path / "m.json")
    back = load_manifest(tmp_path / "m.json")
    assert back == m
    validate_manifest(back, left, right)
    validate_manifest(PairManifest(), left, right)
    with pytest.raises(DanglingIdError):
        validate_manifest(PairManifest("", "", [("a0", "zz")]), left, right)
    with pytest.raises(DuplicatePairError):
        validate_manifest(PairManifest("", "", [("a0", "b0"), ("a0", "b0")]), left, right)


def test_large_generated_manifest_is_valid():
    from infoimbalance.synthstore import make_paired_stores
    left, right, m = make_paired_stores(1000, n_layers=0, dim=2, min_tokens=1, max_tokens=1)
    validate_manifest(m, left, right)


def test_point_cloud_invariants():
    PointCloud(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        PointCloud(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        PointCloud(np.array([[0.0], [np.nan], [1.0]]))
    with pytest.raises(ValueError):
        PointCloud(np.zeros((3, 1)), ("a", "a", "b"))
    c = PointCloud(np.arange(4.0))
    assert c.data.shape == (4, 1) and c.sample_ids == ("0", "1", "2", "3")
