"""Single-file tensor archive (safetensors-compatible layout, F32 only).

Layout: 8-byte little-endian header length ``N``, ``N`` bytes of UTF-8 JSON
mapping each name to ``{"dtype", "shape", "data_offsets"}`` (offsets relative
to the start of the data buffer), then the raw little-endian buffer. An
optional ``"__metadata__"`` entry holds a string-to-string map.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import (
    DuplicateName,
    IoFailure,
    MalformedHeader,
    OverlappingRanges,
    TruncatedFile,
    UnsupportedDtype,
)

METADATA_KEY = "__metadata__"
_LE_F32 = np.dtype("<f4")


@dataclass(frozen=True)
class ArchiveEntry:
    dtype: str
    shape: tuple[int, ...]
    start: int
    end: int


@dataclass
class Archive:
    entries: dict[str, ArchiveEntry]
    tensors: dict[str, np.ndarray]
    metadata: dict[str, str] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise MalformedHeader(f"duplicate key {k!r} in header")
        out[k] = v
    return out


def _parse_entry(name: str, spec) -> tuple[str, tuple[int, ...], int, int]:
    if not isinstance(spec, dict) or set(spec) != {"dtype", "shape", "data_offsets"}:
        raise MalformedHeader(f"entry {name!r} must have exactly dtype, shape, data_offsets")
    dtype, shape, offsets = spec["dtype"], spec["shape"], spec["data_offsets"]
    if not isinstance(dtype, str):
        raise MalformedHeader(f"entry {name!r}: dtype must be a string")
    if dtype != "F32":
        raise UnsupportedDtype(f"entry {name!r}: dtype {dtype!r} (only F32 is supported)")

    def is_int(x):
        return isinstance(x, int) and not isinstance(x, bool)

    if not isinstance(shape, list) or not all(is_int(d) and d >= 1 for d in shape):
        raise MalformedHeader(f"entry {name!r}: shape must be a list of positive integers")
    if (
        not isinstance(offsets, list)
        or len(offsets) != 2
        or not all(is_int(o) and o >= 0 for o in offsets)
        or offsets[0] > offsets[1]
    ):
        raise MalformedHeader(f"entry {name!r}: data_offsets must be [begin, end] with begin <= end")
    if offsets[1] - offsets[0] != 4 * math.prod(shape):
        raise MalformedHeader(
            f"entry {name!r}: byte range {offsets} does not hold shape {shape} as F32"
        )
    return dtype, tuple(shape), offsets[0], offsets[1]


def parse_archive(data: bytes) -> Archive:
    """Parse archive bytes; every failure is raised as an ``ArchiveError``."""
    if len(data) < 8:
        raise TruncatedFile(f"file has {len(data)} bytes, header length needs 8")
    (n,) = struct.unpack("<Q", data[:8])
    if 8 + n > len(data):
        raise TruncatedFile(f"header length {n} exceeds file size {len(data)}")
    try:
        text = data[8 : 8 + n].decode("utf-8")
        header = json.loads(text, object_pairs_hook=_no_duplicates)
    except (UnicodeDecodeError, ValueError, RecursionError) as exc:
        if isinstance(exc, MalformedHeader):
            raise
        raise MalformedHeader(f"header is not valid UTF-8 JSON: {exc}") from None
    if not isinstance(header, dict):
        raise MalformedHeader("header must be a JSON object")

    metadata = header.pop(METADATA_KEY, {})
    if not isinstance(metadata, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in metadata.items()
    ):
        raise MalformedHeader("__metadata__ must map strings to strings")

    buffer = memoryview(data)[8 + n :]
    entries = {name: ArchiveEntry(*_parse_entry(name, spec)) for name, spec in header.items()}

    spans = sorted((e.start, e.end, name) for name, e in entries.items() if e.end > e.start)
    for (s0, e0, a), (s1, e1, b) in zip(spans, spans[1:]):
        if s1 < e0:
            raise OverlappingRanges(f"entries {a!r} and {b!r} overlap")
    for name, e in entries.items():
        if e.end > len(buffer):
            raise TruncatedFile(f"entry {name!r} ends at {e.end}, buffer has {len(buffer)} bytes")

    tensors = {}
    for name, e in entries.items():
        arr = np.frombuffer(buffer[e.start : e.end], dtype=_LE_F32).astype(np.float32)
        tensors[name] = arr.reshape(e.shape)
    return Archive(entries, tensors, dict(metadata))


def read_archive(path) -> Archive:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from None
    return parse_archive(data)


def serialize_archive(
    tensors: Mapping[str, np.ndarray], metadata: Optional[Mapping[str, str]] = None
) -> bytes:
    """Canonical bytes: names sorted, tightly packed offsets, compact sorted JSON
    padded with spaces to a multiple of 8."""
    names = list(tensors)
    if len(set(names)) != len(names):
        raise DuplicateName("tensor names must be unique")
    if METADATA_KEY in tensors:
        raise DuplicateName(f"{METADATA_KEY!r} is reserved")
    header: dict = {}
    if metadata:
        header[METADATA_KEY] = {str(k): str(v) for k, v in metadata.items()}
    chunks = []
    offset = 0
    for name in sorted(names):
        arr = np.ascontiguousarray(tensors[name], dtype=_LE_F32)
        raw = arr.tobytes()
        header[name] = {"dtype": "F32", "shape": list(arr.shape), "data_offsets": [offset, offset + len(raw)]}
        chunks.append(raw)
        offset += len(raw)
    text = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()
    text += b" " * (-len(text) % 8)
    return struct.pack("<Q", len(text)) + text + b"".join(chunks)


def write_archive(
    tensors: Mapping[str, np.ndarray], path, metadata: Optional[Mapping[str, str]] = None
) -> None:
    blob = serialize_archive(tensors, metadata)
    try:
        tmp = f"{path}.tmp"
        with open(tmp, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from None
