"""Single-file binary checkpoints: version tag, config echo, named tensors.

Layout: 8-byte magic, uint32 little-endian header length, UTF-8 JSON header,
then the raw little-endian float64 tensor payloads in manifest order. Values
round-trip bit-exactly.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import DataError
from .layers import NetArchitecture, NetworkWeights

MAGIC = b"XUPCKPT1"
FORMAT_VERSION = 1


def save_checkpoint(path, weights: NetworkWeights, config_echo: dict | None = None):
    """Write weights plus a JSON-serializable config echo."""
    manifest = [
        {"name": name, "shape": list(t.data.shape)} for name, t in weights.params.items()
    ]
    header = {
        "version": FORMAT_VERSION,
        "arch": {
            "d": weights.arch.d,
            "c": weights.arch.c,
            "c_f": weights.arch.c_f,
            "edge_hidden": weights.arch.edge_hidden,
            "trunk_hidden": weights.arch.trunk_hidden,
            "mapper_hidden": weights.arch.mapper_hidden,
            "graph_k": weights.arch.graph_k,
        },
        "config": config_echo or {},
        "tensors": manifest,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name, t in weights.params.items():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint. Returns (NetworkWeights, config_echo dict)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise DataError(f"{path}: not a checkpoint file (bad magic)")
        (hlen,) = struct.unpack("<I", fh.read(4))
        try:
            header = json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise DataError(f"{path}: corrupt checkpoint header: {e}") from None
        if header.get("version") != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {header.get('version')}")
        arch = NetArchitecture(**header["arch"])
        expected = arch.parameter_shapes()
        weights = NetworkWeights.zeros(arch)
        for entry in header["tensors"]:
            name = entry["name"]
            shape = tuple(entry["shape"])
            if name not in expected:
                raise DataError(f"{path}: unknown tensor '{name}'")
            if shape != expected[name]:
                raise DataError(f"{path}: tensor '{name}' has shape {shape}, expected {expected[name]}")
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise DataError(f"{path}: truncated payload for tensor '{name}'")
            weights.params[name].data = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
        missing = set(expected) - {e["name"] for e in header["tensors"]}
        if missing:
            raise DataError(f"{path}: checkpoint missing tensors: {sorted(missing)}")
    return weights, header.get("config", {})
