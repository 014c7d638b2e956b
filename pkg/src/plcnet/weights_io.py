"""Binary weight files.

Layout (little-endian, no padding between records):

  magic "TPLC" (4 bytes) | format version u32 | tensor count u32
  per tensor: name length u16, UTF-8 name, rank u8, dims u32 each,
              payload f32 row-major

The model configuration travels inside the same record stream as two
rank-1 meta tensors (meta.buffer_len, meta.leaky_slope); the remaining
widths are recovered from the parameter shapes themselves.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError
from .model import ModelConfig, WeightSet, expected_shapes

MAGIC = b"TPLC"
VERSION = 1

_META_BUFFER = "meta.buffer_len"
_META_SLOPE = "meta.leaky_slope"


def save_weights(ws: WeightSet, path):
    records = {
        _META_BUFFER: np.array([ws.config.buffer_len], dtype=np.float64),
        _META_SLOPE: np.array([ws.config.leaky_relu_slope], dtype=np.float64),
    }
    records.update(ws.tensors)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", MAGIC, VERSION, len(records)))
        for name, arr in records.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(fh, count: int) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(f"truncated weight file (wanted {count} bytes, got {len(data)})")
    return data


def _infer_config(tensors: dict, buffer_len: int, slope: float) -> ModelConfig:
    try:
        enc = tensors["enc.w"].shape
        emb = tensors["emb.w"].shape
        map1 = tensors["map1.w"].shape
        dec = tensors["dec.w"].shape
        common = dict(buffer_len=buffer_len, leaky_relu_slope=slope,
                      fc_encoding=enc[1], fc_embedding=emb[1],
                      fc_map1=map1[1], fc_map2=dec[0], fc_decoding=dec[1])
        if "conv1.w" in tensors:
            cfg = ModelConfig(
                kind="rnn",
                conv4_filters=tensors["conv1.w"].shape[2],
                conv2_filters=tensors["conv2.w"].shape[2],
                bgru1_units=tensors["bgru1.fwd.uz"].shape[0],
                bgru2_units=tensors["bgru2.fwd.uz"].shape[0],
                **common,
            )
        else:
            n_ff = len([n for n in tensors if n.startswith("ff") and n.endswith(".w")])
            cfg = ModelConfig(kind="ff", ff_units=tensors["ff1.w"].shape[1],
                              ff_layers=n_ff, **common)
    except (KeyError, IndexError) as exc:
        raise FormatError(f"weight file lacks a coherent parameter set: {exc}") from exc
    for preset in (ModelConfig.small, ModelConfig.medium, ModelConfig.large, ModelConfig.feedforward):
        candidate = preset(buffer_len=buffer_len)
        if expected_shapes(candidate) == expected_shapes(cfg) and candidate.kind == cfg.kind:
            widths_match = all(
                getattr(candidate, f) == getattr(cfg, f)
                for f in ("fc_encoding", "fc_embedding", "conv4_filters", "conv2_filters",
                          "bgru1_units", "bgru2_units", "ff_units")
            )
            if widths_match:
                return candidate
    return cfg


def load_weights(path) -> WeightSet:
    with open(path, "rb") as fh:
        header = _read_exact(fh, 12)
        magic, version, count = struct.unpack("<4sII", header)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"unsupported weight format version {version}")
        records = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
            name = _read_exact(fh, name_len).decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(fh, 1))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank))
            n_values = int(np.prod(dims)) if rank else 1
            payload = _read_exact(fh, 4 * n_values)
            arr = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)
            if name in records:
                raise FormatError(f"duplicate tensor {name!r}")
            records[name] = arr

    try:
        buffer_len = int(records.pop(_META_BUFFER)[0])
        slope = float(records.pop(_META_SLOPE)[0])
    except KeyError as exc:
        raise FormatError(f"weight file is missing {exc} meta record") from exc
    config = _infer_config(records, buffer_len, slope)
    expect = expected_shapes(config)
    if set(records) != set(expect):
        raise FormatError("tensor names do not form a complete model")
    for name, arr in records.items():
        if arr.shape != expect[name]:
            raise FormatError(f"tensor {name} has shape {arr.shape}, expected {expect[name]}")
        if not np.all(np.isfinite(arr)):
            raise FormatError(f"tensor {name} contains non-finite values")
    return WeightSet(config=config, tensors={name: records[name] for name in expect})
