"""Bit-exact model files, pool manifests, and time-ratio accounting.

Model file layout (all integers little-endian u32):

    "MGEM" | version | layer count |
    per layer: name length | name bytes | rank | dims... | float32 LE payload
    | 32-byte SHA-256 of everything before it
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import time
from dataclasses import dataclass

import numpy as np

from .errors import (
    CorruptModelError,
    StorageError,
    UndefinedRatioError,
    UnsupportedVersionError,
)
from .nn import ParamEntry, ParamSet

MAGIC = b"MGEM"
VERSION = 1
HASH_BYTES = 32


@dataclass
class ModelFileInfo:
    path: str
    sha256: str
    layer_count: int
    byte_size: int


def _encode(params: ParamSet) -> bytes:
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<I", VERSION)
    buf += struct.pack("<I", len(params.entries))
    for e in params.entries:
        name = e.name.encode("utf-8")
        if not name:
            raise StorageError("empty layer name")
        buf += struct.pack("<I", len(name))
        buf += name
        buf += struct.pack("<I", len(e.shape))
        buf += struct.pack(f"<{len(e.shape)}I", *e.shape)
        buf += e.values.astype("<f4").tobytes()
    return bytes(buf)


def save_model(params: ParamSet, path) -> ModelFileInfo:
    """Write a model file; parameters are rounded to float32 on disk."""
    body = _encode(params)
    digest = hashlib.sha256(body).digest()
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as f:
            f.write(body + digest)
        os.replace(tmp, path)
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc
    return ModelFileInfo(str(path), digest.hex(), len(params.entries),
                         len(body) + HASH_BYTES)


def load_model(path) -> ParamSet:
    """Exact inverse of save_model (values come back as float32-exact floats)."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 + HASH_BYTES:
        raise CorruptModelError(f"file too short ({len(data)} bytes)")
    if data[:4] != MAGIC:
        raise CorruptModelError("bad magic bytes")
    version = struct.unpack_from("<I", data, 4)[0]
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}")
    body, digest = data[:-HASH_BYTES], data[-HASH_BYTES:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptModelError("content hash mismatch")
    n_layers = struct.unpack_from("<I", data, 8)[0]
    off = 12
    entries = []
    for _ in range(n_layers):
        try:
            (name_len,) = struct.unpack_from("<I", body, off)
            off += 4
            name = body[off:off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<I", body, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}I", body, off)
            off += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            payload = body[off:off + 4 * count]
            if len(payload) != 4 * count:
                raise CorruptModelError(f"truncated payload at offset {off}")
            off += 4 * count
        except struct.error as exc:
            raise CorruptModelError(f"truncated header at offset {off}") from exc
        values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
        entries.append(ParamEntry(name, tuple(int(d) for d in dims), values))
    if off != len(body):
        raise CorruptModelError(f"{len(body) - off} trailing bytes")
    return ParamSet(entries)


def file_hash(path) -> str:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < HASH_BYTES:
        raise CorruptModelError("file too short for trailing hash")
    return data[-HASH_BYTES:].hex()


def time_ratio(t_gen, t_train) -> float:
    """Generated-to-trained wall-clock quotient."""
    if t_train <= 0:
        raise UndefinedRatioError(f"training time {t_train} must be > 0")
    return t_gen / t_train


# ---------------------------------------------------------------------------
# pool manifests


def build_manifest(pool_id, base, config, members, wall_clock, attempts=None,
                   seeds=None):
    """Structured manifest; every wall-clock quantity lives under 'wall_clock'
    so determinism checks can drop that one key."""
    doc = {
        "pool_id": pool_id,
        "base": base,
        "config": config,
        "members": members,
        "attempts": attempts,
        "seeds": seeds or {},
        "wall_clock": wall_clock,
    }
    return doc


def write_manifest(doc, path):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)


def read_manifest(path):
    with open(path) as f:
        return json.load(f)


def verify_manifest(path):
    """Check referential integrity: member files exist and hash-verify."""
    doc = read_manifest(path)
    root = os.path.dirname(os.path.abspath(path))
    for member in doc["members"]:
        fpath = os.path.join(root, member["file"])
        if not os.path.exists(fpath):
            raise CorruptModelError(f"missing member file {member['file']}")
        params = load_model(fpath)  # raises on hash mismatch
        if file_hash(fpath) != member["hash"]:
            raise CorruptModelError(f"hash mismatch for {member['file']}")
        del params
    return doc


def stamp(config_echo, seeds, artifact_hashes):
    """Reproducibility record written next to every command's outputs."""
    return {
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "config": config_echo,
        "seeds": seeds,
        "artifacts": artifact_hashes,
    }
