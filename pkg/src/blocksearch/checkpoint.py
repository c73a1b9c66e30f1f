"""Versioned binary model container.

Layout (all integers little-endian):

    bytes 0..3   magic b"BSCK"
    bytes 4..7   format version, uint32 (currently 1)
    bytes 8..15  header length in bytes, uint64
    header       UTF-8 JSON: {"schema": 1, "arch": str,
                 "config": ModelConfig fields,
                 "tensors": [{"name", "shape"} ...]}
    body         the listed tensors, in order, as raw float64
                 little-endian C-order bytes

The tensor manifest order is the model's parameter order, so loading
reconstructs an identical model.
"""

from __future__ import annotations

import dataclasses
import json
import struct

import numpy as np

from .archspec import format as format_spec, parse as parse_spec
from .config import ModelConfig
from .errors import ConfigError
from .lm import LanguageModel

MAGIC = b"BSCK"
VERSION = 1


def _named_tensors(model: LanguageModel) -> list[tuple[str, np.ndarray]]:
    out = [
        ("embedding", model.embedding.data),
        ("head_w", model.head_w.data),
        ("head_b", model.head_b.data),
    ]
    for i, (_, params) in enumerate(model.layers):
        if params is None:
            continue
        for fld in dataclasses.fields(params):
            out.append((f"layer{i}.{fld.name}", getattr(params, fld.name).data))
    return out


def save_model(model: LanguageModel, path: str) -> None:
    tensors = _named_tensors(model)
    header = {
        "schema": 1,
        "arch": format_spec(model.spec),
        "config": dataclasses.asdict(model.config),
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for _, arr in tensors:
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path: str) -> LanguageModel:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ConfigError(f"{path}: not a model checkpoint (bad magic)")
        (version,) = struct.unpack("<I", f.read(4))
        if version != VERSION:
            raise ConfigError(f"{path}: unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode("utf-8"))
        config = ModelConfig(**header["config"]).validate()
        spec = parse_spec(header["arch"])
        model = LanguageModel(spec, config, np.random.default_rng(0))
        by_name = {n: t for n, t in _named_tensors(model)}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = f.read(count * 8)
            if len(raw) != count * 8:
                raise ConfigError(f"{path}: truncated tensor {entry['name']}")
            arr = np.frombuffer(raw, dtype="<f8").reshape(shape)
            target = by_name.get(entry["name"])
            if target is None or target.shape != shape:
                raise ConfigError(f"{path}: unexpected tensor {entry['name']}")
            target[...] = arr
    return model
