"""Binary model file format.

Layout::

    b"NOMLSTM1"                       8-byte magic
    uint32 LE                         header length in bytes
    header                            UTF-8 JSON (format_version, config,
                                      taxonomy, provenance, tensor manifest)
    tensor payloads                   raw little-endian, manifest order
    uint64 LE                         FNV-1a 64 of every preceding byte

Manifest offsets are relative to the first payload byte.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ChecksumMismatch, FormatVersionMismatch, ModelFormatError
from .model import LstmModel, ModelConfig, build

MAGIC = b"NOMLSTM1"
FORMAT_VERSION = 1
DTYPES = {"f64": np.dtype("<f8"), "f32": np.dtype("<f4")}

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes, h: int = FNV_OFFSET) -> int:
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _MASK
    return h


def to_bytes(model: LstmModel, dtype: str = "f64") -> bytes:
    if dtype not in DTYPES:
        raise ValueError(f"dtype must be one of {sorted(DTYPES)}")
    np_dtype = DTYPES[dtype]
    manifest, payloads, offset = [], [], 0
    for name, p in model.network.parameters().items():
        raw = np.ascontiguousarray(p, dtype=np_dtype).tobytes()
        manifest.append({"name": name, "shape": list(p.shape), "dtype": dtype, "offset": offset})
        payloads.append(raw)
        offset += len(raw)
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "taxonomy": list(model.taxonomy),
        "provenance": model.provenance,
        "tensors": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = MAGIC + struct.pack("<I", len(header_bytes)) + header_bytes + b"".join(payloads)
    return body + struct.pack("<Q", fnv1a64(body))


def from_bytes(blob: bytes) -> LstmModel:
    if len(blob) < len(MAGIC) + 4 + 8:
        raise ChecksumMismatch("file too short to hold a model")
    body, (stored,) = blob[:-8], struct.unpack("<Q", blob[-8:])
    if fnv1a64(body) != stored:
        raise ChecksumMismatch("checksum does not match file contents")
    if body[:8] != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    (header_len,) = struct.unpack("<I", body[8:12])
    try:
        header = json.loads(body[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable header: {exc}") from None
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(f"format_version {version} is not supported (expected {FORMAT_VERSION})")

    config = ModelConfig(**header["config"])
    model = build(config, seed=0, taxonomy=header["taxonomy"])
    model.provenance = header.get("provenance", {})
    payload = memoryview(body)[12 + header_len:]
    values = {}
    for entry in header["tensors"]:
        dt = DTYPES[entry["dtype"]]
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start, stop = entry["offset"], entry["offset"] + count * dt.itemsize
        if stop > len(payload):
            raise ModelFormatError(f"tensor {entry['name']} runs past the payload")
        arr = np.frombuffer(payload[start:stop], dtype=dt).reshape(entry["shape"])
        values[entry["name"]] = arr.astype(np.float64)
    expected = set(model.network.parameters())
    if set(values) != expected:
        raise ModelFormatError("tensor manifest does not match the configured architecture")
    model.network.set_parameters(values)
    return model


def save(model: LstmModel, path, dtype: str = "f64") -> None:
    Path(path).write_bytes(to_bytes(model, dtype))


def load(path) -> LstmModel:
    return from_bytes(Path(path).read_bytes())
