"""Binary network checkpoints.

Layout: magic, format version (uint32 LE), header length (uint32 LE), UTF-8
JSON header with the architecture, then the parameter vector as little-endian
float64. Loading reproduces the parameters bit for bit.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from .network import Module, build

MAGIC = b"FQLNET\x00\x01"
VERSION = 1


def dumps(net: Module, meta: dict | None = None) -> bytes:
    header = json.dumps({"architecture": net.to_config(), "n_params": int(net.n_params),
                         "meta": meta or {}}, sort_keys=True).encode()
    body = net.params.astype("<f8").tobytes()
    return MAGIC + struct.pack("<II", VERSION, len(header)) + header + body


def loads(blob: bytes) -> tuple[Module, dict]:
    if blob[:len(MAGIC)] != MAGIC:
        raise ConfigurationError("not a network checkpoint")
    version, n = struct.unpack_from("<II", blob, len(MAGIC))
    if version != VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {version}")
    start = len(MAGIC) + 8
    header = json.loads(blob[start:start + n].decode())
    params = np.frombuffer(blob[start + n:], dtype="<f8").astype(np.float64)
    if params.size != header["n_params"]:
        raise ConfigurationError("truncated checkpoint")
    return build(header["architecture"], params=params), header["meta"]


def save(net: Module, path, meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps(net, meta))


def load(path) -> tuple[Module, dict]:
    return loads(Path(path).read_bytes())
