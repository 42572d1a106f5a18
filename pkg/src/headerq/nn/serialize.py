"""Versioned binary container for named float64 tensors plus a JSON manifest.

Layout::

    b"HQTENSOR" | u32 version | u64 manifest length | manifest (UTF-8 JSON)
    | raw little-endian float64 data, tensors in manifest order
    | 32-byte SHA-256 of everything before it

The manifest's ``"tensors"`` list records ``name`` and ``shape`` per tensor.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

MAGIC = b"HQTENSOR"
FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def dumps(tensors: dict[str, np.ndarray], manifest: dict | None = None) -> bytes:
    meta = dict(manifest or {})
    meta["tensors"] = [
        {"name": name, "shape": list(np.shape(arr))} for name, arr in tensors.items()
    ]
    head = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<IQ", FORMAT_VERSION, len(head)), head]
    for arr in tensors.values():
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if len(blob) < len(MAGIC) + 12 + 32 or not blob.startswith(MAGIC):
        raise FormatError("not a tensor container (bad magic or truncated)")
    version, head_len = struct.unpack_from("<IQ", blob, len(MAGIC))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported container version {version}")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise FormatError("checksum mismatch (file truncated or corrupt)")
    start = len(MAGIC) + 12
    try:
        meta = json.loads(body[start : start + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt manifest: {exc}") from None
    offset = start + head_len
    tensors = {}
    for entry in meta.pop("tensors"):
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * count
        if end > len(body):
            raise FormatError(f"tensor {entry['name']!r} runs past end of data")
        tensors[entry["name"]] = (
            np.frombuffer(body[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        )
        offset = end
    if offset != len(body):
        raise FormatError("trailing bytes after last tensor")
    return tensors, meta
