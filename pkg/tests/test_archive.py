import hashlib
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planecycle.archive import parse_archive, read_archive, serialize_archive, write_archive
from planecycle.errors import (
    ArchiveError,
    DuplicateName,
    MalformedHeader,
    MissingEntry,
    OverlappingRanges,
    TruncatedFile,
    UnsupportedDtype,
)
from planecycle.lifting import weights_checksum
from planecycle.weights import (
    Arch,
    load_weights,
    save_weights,
    seeded_normal,
    splitmix64,
    synth_weights,
    weights_to_tensors,
)
from planecycle.errors import InvalidArch

# sha256 of the archive written for synth_weights(42, Arch(depth=4, channels=64, heads=4))
GOLDEN_SEED42 = "c144acba4f6ba053e54e80c570392387d94ba085f13e8f7f7abb6ee2ec9c4f7e"


def raw_archive(header: dict, buffer: bytes = b"") -> bytes:
    text = json.dumps(header).encode()
    return struct.pack("<Q", len(text)) + text + buffer


def random_tensors(rng):
    out = {}
    for i in range(int(rng.integers(0, 6))):
        shape = tuple(int(s) for s in rng.integers(1, 5, size=int(rng.integers(0, 4))))
        out[f"t{i}.{rng.integers(1000)}"] = rng.standard_normal(shape).astype(np.float32)
    return out


def test_single_tensor_fixture(tmp_path):
    buf = np.array([1, 2, 3, 4], "<f4").tobytes()
    path = tmp_path / "one.safetensors"
    path.write_bytes(raw_archive({"x": {"dtype": "F32", "shape": [2, 2], "data_offsets": [0, 16]}}, buf))
    arc = read_archive(path)
    assert arc["x"].tolist() == [[1, 2], [3, 4]]
    assert arc.entries["x"].shape == (2, 2)


def test_truncated_header(tmp_path):
    with pytest.raises(TruncatedFile):
        parse_archive(struct.pack("<Q", 1000) + b"{}")
    with pytest.raises(TruncatedFile):
        parse_archive(b"abc")


def test_entry_errors():
    f32 = lambda offs, shape=(1,): {"dtype": "F32", "shape": list(shape), "data_offsets": offs}
    with pytest.raises(OverlappingRanges):
        parse_archive(raw_archive({"a": f32([0, 8], (2,)), "b": f32([4, 8])}, bytes(8)))
    with pytest.raises(TruncatedFile):
        parse_archive(raw_archive({"a": f32([0, 8], (2,))}, bytes(4)))
    with pytest.raises(UnsupportedDtype):
        parse_archive(raw_archive({"a": {"dtype": "F16", "shape": [1], "data_offsets": [0, 2]}}, bytes(2)))
    with pytest.raises(MalformedHeader):
        parse_archive(raw_archive({"a": f32([0, 8])}, bytes(8)))
    with pytest.raises(MalformedHeader):
        parse_archive(raw_archive([1, 2]))
    dup = b'{"a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},"a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]}}'
    with pytest.raises(MalformedHeader):
        parse_archive(struct.pack("<Q", len(dup)) + dup + bytes(4))


def test_empty_archive_and_canonical_bytes(tmp_path):
    empty = serialize_archive({})
    assert parse_archive(empty).tensors == {}
    rng = np.random.default_rng(0)
    tensors = random_tensors(rng)
    write_archive(tensors, tmp_path / "a")
    write_archive(dict(reversed(list(tensors.items()))), tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    blob = serialize_archive({"x": np.zeros(3)})
    assert struct.unpack("<Q", blob[:8])[0] % 8 == 0


def test_duplicate_and_reserved_names():
    class Dup(dict):
        def __iter__(self):
            return iter(["a", "a"])

    with pytest.raises(DuplicateName):
        serialize_archive(Dup(a=np.zeros(1)))
    with pytest.raises(DuplicateName):
        serialize_archive({"__metadata__": np.zeros(1)})


def test_round_trip_50_random_archives(tmp_path):
    rng = np.random.default_rng(7)
    for i in range(50):
        tensors = random_tensors(rng)
        meta = {"k": str(i)} if i % 2 else None
        path = tmp_path / f"{i}.safetensors"
        write_archive(tensors, path, meta)
        arc = read_archive(path)
        for name, t in tensors.items():
            assert arc[name].tobytes() == t.tobytes()
        assert serialize_archive(arc.tensors, arc.metadata) == path.read_bytes()


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.binary(min_size=1, max_size=4))
def test_mutated_headers_raise_structured_errors(seed, patch):
    rng = np.random.default_rng(seed)
    tensors = {"a": rng.standard_normal((2, 3)).astype(np.float32), "b": np.zeros(4, np.float32)}
    blob = bytearray(serialize_archive(tensors, {"m": "1"}))
    header_end = 8 + struct.unpack("<Q", bytes(blob[:8]))[0]
    pos = int(rng.integers(0, header_end))
    blob[pos : pos + len(patch)] = patch
    try:
        parse_archive(bytes(blob))
    except ArchiveError:
        pass


def test_splitmix64_reference_values():
    # published SplitMix64 outputs for state 0
    assert splitmix64(0, 3).tolist() == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_seeded_normal_statistics():
    z = seeded_normal(1, "x", (20000,))
    assert abs(z.mean()) < 0.03 and abs(z.std() - 1) < 0.03


def test_synth_weights_determinism(tmp_path):
    arch = Arch(depth=4, channels=64, heads=4)
    a = synth_weights(42, arch)
    b = synth_weights(42, arch)
    c = synth_weights(43, arch)
    assert weights_checksum(a) == weights_checksum(b) != weights_checksum(c)
    save_weights(a, tmp_path / "w.safetensors")
    digest = hashlib.sha256((tmp_path / "w.safetensors").read_bytes()).hexdigest()
    assert digest == GOLDEN_SEED42
    loaded = load_weights(tmp_path / "w.safetensors")
    assert weights_checksum(loaded) == weights_checksum(a)
    blk = a.blocks[0]
    assert np.all(blk.ln1_gamma == 1) and np.all(blk.ln1_beta == 0) and np.all(blk.ls2_gamma == 1)
    assert abs(blk.qkv_weight.std() - 0.02) < 0.002


@pytest.mark.parametrize("arch", [Arch(1, 6, 4), Arch(1, 6, 2), Arch(0, 8, 2)])
def test_invalid_arch(arch):
    with pytest.raises(InvalidArch):
        synth_weights(0, arch)


def test_missing_layer_scale_defaults_to_ones(tmp_path):
    w = synth_weights(1, Arch(depth=1, channels=8, heads=2, in_channels=1))
    tensors = weights_to_tensors(w)
    del tensors["blocks.0.ls1.gamma"]
    meta = {"depth": "1", "channels": "8", "heads": "2", "patch": "16", "registers": "4"}
    write_archive(tensors, tmp_path / "w", meta)
    assert np.all(load_weights(tmp_path / "w").blocks[0].ls1_gamma == 1)
    del tensors["blocks.0.attn.qkv.weight"]
    write_archive(tensors, tmp_path / "w2", meta)
    with pytest.raises(MissingEntry):
        load_weights(tmp_path / "w2")
