"""Bit-exact named-tensor archive used for every on-disk artifact.

Layout: 8-byte magic ``PEFTXFR1``, an 8-byte little-endian header length
H, H bytes of canonical UTF-8 JSON (sorted keys, no extra whitespace)
describing meta strings and tensor entries, then the raw little-endian
IEEE-754 payloads packed back to back in name order. Canonical ordering
makes serialization deterministic: write -> read -> write is
byte-identical.
"""

from __future__ import annotations

import json
import os
import re
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    MalformedHeaderError,
    ShapeInconsistencyError,
    TruncatedPayloadError,
)

MAGIC = b"PEFTXFR1"
_NAME_RE = re.compile(r"[A-Za-z0-9_./-]+\Z")
_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


@dataclass
class TensorContainer:
    """In-memory view of one archive: named tensors plus string metadata."""

    meta: dict[str, str] = field(default_factory=dict)
    _entries: dict[str, tuple[str, tuple[int, ...], bytes]] = field(default_factory=dict)

    def add(self, name: str, array, dtype: str = "f64") -> None:
        """Store an array under ``name``; duplicate names are rejected."""
        if not _NAME_RE.match(name or ""):
            raise ValueError(f"invalid tensor name {name!r}")
        if name in self._entries:
            raise ValueError(f"duplicate tensor name {name!r}")
        if dtype not in _DTYPES:
            raise ValueError(f"unsupported dtype {dtype!r}, expected one of {sorted(_DTYPES)}")
        arr = np.ascontiguousarray(array, dtype=_DTYPES[dtype])
        self._entries[name] = (dtype, tuple(int(s) for s in arr.shape), arr.tobytes())

    def tensor(self, name: str) -> np.ndarray:
        """Return the stored tensor as float64 (lossless for both dtypes)."""
        dtype, shape, payload = self._entries[name]
        return np.frombuffer(payload, dtype=_DTYPES[dtype]).reshape(shape).astype(np.float64)

    def dtype_of(self, name: str) -> str:
        return self._entries[name][0]

    def names(self) -> list[str]:
        return sorted(self._entries)

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __eq__(self, other) -> bool:
        if not isinstance(other, TensorContainer):
            return NotImplemented
        return self.meta == other.meta and self._entries == other._entries


def write_container(container: TensorContainer, destination) -> int:
    """Serialize to ``destination`` path atomically; returns bytes written.

    Writes to a temporary sibling file and renames, so readers never see
    a partial archive.
    """
    names = container.names()
    tensors_hdr = {}
    offset = 0
    payloads = []
    for name in names:
        dtype, shape, payload = container._entries[name]
        nbytes = len(payload)
        expected = int(np.prod(shape, dtype=np.int64)) * _DTYPES[dtype].itemsize
        if nbytes != expected:
            raise ShapeInconsistencyError(
                f"{name}: payload {nbytes} bytes but shape {shape} dtype {dtype} needs {expected}"
            )
        tensors_hdr[name] = {
            "dtype": dtype,
            "shape": list(shape),
            "offset": offset,
            "nbytes": nbytes,
        }
        offset += nbytes
        payloads.append(payload)

    header = json.dumps(
        {"meta": dict(container.meta), "tensors": tensors_hdr},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")

    destination = os.fspath(destination)
    dirname = os.path.dirname(os.path.abspath(destination))
    fd, tmp_path = tempfile.mkstemp(dir=dirname, prefix=".peftxfr-")
    total = 0
    try:
        with os.fdopen(fd, "wb") as f:
            total += f.write(MAGIC)
            total += f.write(struct.pack("<Q", len(header)))
            total += f.write(header)
            for payload in payloads:
                total += f.write(payload)
        os.replace(tmp_path, destination)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
    return total


def read_container(source) -> TensorContainer:
    """Parse an archive; exact inverse of :func:`write_container`."""
    with open(os.fspath(source), "rb") as f:
        blob = f.read()

    if len(blob) < len(MAGIC) + 8 or blob[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"not a PEFTXFR1 container: magic {blob[:8]!r}")
    (header_len,) = struct.unpack("<Q", blob[8:16])
    header_end = 16 + header_len
    if header_end > len(blob):
        raise MalformedHeaderError(
            f"header declares {header_len} bytes but only {len(blob) - 16} remain"
        )
    try:
        header = json.loads(blob[16:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeaderError(f"header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict) or set(header) != {"meta", "tensors"}:
        raise MalformedHeaderError("header must be an object with 'meta' and 'tensors'")
    meta = header["meta"]
    tensors = header["tensors"]
    if not isinstance(meta, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in meta.items()
    ):
        raise MalformedHeaderError("meta must map strings to strings")
    if not isinstance(tensors, dict):
        raise MalformedHeaderError("tensors must be an object")

    data = blob[header_end:]
    out = TensorContainer(meta=dict(meta))
    for name, entry in tensors.items():
        if not isinstance(entry, dict) or not {"dtype", "shape", "offset", "nbytes"} <= set(entry):
            raise MalformedHeaderError(f"tensor entry {name!r} missing required fields")
        dtype, shape = entry["dtype"], entry["shape"]
        off, nbytes = entry["offset"], entry["nbytes"]
        if dtype not in _DTYPES:
            raise MalformedHeaderError(f"{name}: unknown dtype {dtype!r}")
        if not isinstance(shape, list) or not all(isinstance(s, int) and s >= 0 for s in shape):
            raise MalformedHeaderError(f"{name}: bad shape {shape!r}")
        expected = int(np.prod(shape, dtype=np.int64)) * _DTYPES[dtype].itemsize
        if nbytes != expected:
            raise ShapeInconsistencyError(
                f"{name}: nbytes {nbytes} inconsistent with shape {shape} dtype {dtype}"
            )
        if off < 0 or off + nbytes > len(data):
            raise TruncatedPayloadError(
                f"{name}: payload [{off}, {off + nbytes}) exceeds data section of {len(data)} bytes"
            )
        if not _NAME_RE.match(name or ""):
            raise MalformedHeaderError(f"invalid tensor name {name!r}")
        out._entries[name] = (dtype, tuple(shape), bytes(data[off : off + nbytes]))
    return out
