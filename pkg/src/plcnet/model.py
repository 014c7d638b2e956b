"""Frame-prediction model: configurations, weights, forward/backward, MAC counts.

The recurrent model maps a context buffer of past 10 ms frames to one raw
(unwindowed) 320-sample frame:

  FC encode (relu) -> FC embed (leaky) -> Conv1D k4 -> Conv1D k2
  -> BGRU -> BGRU -> concatenated final state
  -> FC map1 (leaky) -> FC map2 (leaky) -> FC decode (linear)

The feed-forward variant replaces the Conv/BGRU stages with a flatten and
three leaky-relu FC layers of ff_units each.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import layers
from .dsp import FRAME_LEN, WINDOW_LEN
from .errors import InvalidArgumentError, NumericFailureError
from .layers import GruWeights

_GATE_PARTS = ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh")


@dataclass(frozen=True)
class ModelConfig:
    """Layer widths and structural switches of one model instance.

    The named size classes pin every width; toy instances for tests and
    sweeps go through `custom`.
    """

    kind: str = "rnn"            # "rnn" or "ff"
    name: str = "custom"
    buffer_len: int = 6
    fc_encoding: int = 512
    fc_embedding: int = 128
    conv4_filters: int = 128
    conv2_filters: int = 128
    bgru1_units: int = 64
    bgru2_units: int = 64
    ff_units: int = 512
    ff_layers: int = 3
    fc_map1: int = 512
    fc_map2: int = 512
    fc_decoding: int = WINDOW_LEN
    leaky_relu_slope: float = 0.01

    def __post_init__(self):
        if self.kind not in ("rnn", "ff"):
            raise InvalidArgumentError(f"unknown model kind {self.kind!r}")
        if self.buffer_len < 2:
            raise InvalidArgumentError(f"buffer_len must be >= 2, got {self.buffer_len}")
        if self.fc_decoding != WINDOW_LEN:
            raise InvalidArgumentError(
                f"fc_decoding is fixed at {WINDOW_LEN} (two concatenated frames), got {self.fc_decoding}"
            )
        widths = [self.fc_encoding, self.fc_embedding, self.fc_map1, self.fc_map2]
        if self.kind == "rnn":
            widths += [self.conv4_filters, self.conv2_filters, self.bgru1_units, self.bgru2_units]
        else:
            widths += [self.ff_units, self.ff_layers]
        if any(w < 1 for w in widths):
            raise InvalidArgumentError("all layer widths must be positive")
        # Quantize the slope to f32 so weight files round-trip the config exactly.
        object.__setattr__(self, "leaky_relu_slope", float(np.float32(self.leaky_relu_slope)))

    @classmethod
    def small(cls, buffer_len: int = 6) -> "ModelConfig":
        return cls(kind="rnn", name="small", buffer_len=buffer_len,
                   fc_embedding=128, conv4_filters=128, conv2_filters=128,
                   bgru1_units=64, bgru2_units=64)

    @classmethod
    def medium(cls, buffer_len: int = 6) -> "ModelConfig":
        return cls(kind="rnn", name="medium", buffer_len=buffer_len,
                   fc_embedding=256, conv4_filters=256, conv2_filters=256,
                   bgru1_units=128, bgru2_units=128)

    @classmethod
    def large(cls, buffer_len: int = 6) -> "ModelConfig":
        return cls(kind="rnn", name="large", buffer_len=buffer_len,
                   fc_embedding=512, conv4_filters=512, conv2_filters=512,
                   bgru1_units=256, bgru2_units=256)

    @classmethod
    def feedforward(cls, buffer_len: int = 6) -> "ModelConfig":
        return cls(kind="ff", name="ff", buffer_len=buffer_len, fc_embedding=128)

    @classmethod
    def by_name(cls, name: str, buffer_len: int = 6) -> "ModelConfig":
        presets = {"small": cls.small, "medium": cls.medium, "large": cls.large, "ff": cls.feedforward}
        if name not in presets:
            raise InvalidArgumentError(f"unknown model size class {name!r}")
        return presets[name](buffer_len=buffer_len)

    @classmethod
    def custom(cls, **kwargs) -> "ModelConfig":
        kwargs.setdefault("name", "custom")
        return cls(**kwargs)

    def with_buffer_len(self, buffer_len: int) -> "ModelConfig":
        return replace(self, buffer_len=buffer_len)


def expected_shapes(config: ModelConfig) -> dict:
    """Parameter name -> shape, in canonical (file) order."""
    shapes: dict = {}

    def dense(prefix, n_in, n_out):
        shapes[f"{prefix}.w"] = (n_in, n_out)
        shapes[f"{prefix}.b"] = (n_out,)

    def gru(prefix, n_in, units):
        for direction in ("fwd", "bwd"):
            for part in _GATE_PARTS:
                first = n_in if part.startswith("w") else units
                shape = (units,) if part.startswith("b") else (first, units)
                shapes[f"{prefix}.{direction}.{part}"] = shape

    dense("enc", FRAME_LEN, config.fc_encoding)
    dense("emb", config.fc_encoding, config.fc_embedding)
    if config.kind == "rnn":
        shapes["conv1.w"] = (4, config.fc_embedding, config.conv4_filters)
        shapes["conv1.b"] = (config.conv4_filters,)
        shapes["conv2.w"] = (2, config.conv4_filters, config.conv2_filters)
        shapes["conv2.b"] = (config.conv2_filters,)
        gru("bgru1", config.conv2_filters, config.bgru1_units)
        gru("bgru2", 2 * config.bgru1_units, config.bgru2_units)
        dense("map1", 2 * config.bgru2_units, config.fc_map1)
    else:
        n_in = config.buffer_len * config.fc_embedding
        for i in range(1, config.ff_layers + 1):
            dense(f"ff{i}", n_in, config.ff_units)
            n_in = config.ff_units
        dense("map1", config.ff_units, config.fc_map1)
    dense("map2", config.fc_map1, config.fc_map2)
    dense("dec", config.fc_map2, config.fc_decoding)
    return shapes


@dataclass
class WeightSet:
    """All named parameter tensors of one model, immutable after construction."""

    config: ModelConfig
    tensors: dict

    def __post_init__(self):
        expect = expected_shapes(self.config)
        if list(self.tensors.keys()) != list(expect.keys()):
            missing = set(expect) - set(self.tensors)
            extra = set(self.tensors) - set(expect)
            raise InvalidArgumentError(
                f"weight names do not match config (missing={sorted(missing)}, extra={sorted(extra)})"
            )
        frozen = {}
        for name, shape in expect.items():
            arr = np.asarray(self.tensors[name], dtype=np.float64)
            if arr.shape != shape:
                raise InvalidArgumentError(f"tensor {name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise InvalidArgumentError(f"tensor {name} contains non-finite values")
            arr = arr.copy()
            arr.flags.writeable = False
            frozen[name] = arr
        self.tensors = frozen

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def copy_tensors(self) -> dict:
        """Mutable float64 copies, e.g. for an optimizer to own."""
        return {name: arr.copy() for name, arr in self.tensors.items()}

    def allclose(self, other: "WeightSet", atol=0.0) -> bool:
        return self.config == other.config and all(
            np.allclose(self.tensors[n], other.tensors[n], rtol=0.0, atol=atol)
            for n in self.tensors
        )

    def __eq__(self, other):
        if not isinstance(other, WeightSet):
            return NotImplemented
        return self.config == other.config and all(
            np.array_equal(self.tensors[n], other.tensors[n]) for n in self.tensors
        )

    def gru_weights(self, prefix: str) -> GruWeights:
        return GruWeights(**{p: self.tensors[f"{prefix}.{p}"] for p in _GATE_PARTS})


def zero_gradients(config: ModelConfig) -> dict:
    return {name: np.zeros(shape) for name, shape in expected_shapes(config).items()}


def init_weights(config: ModelConfig, seed: int) -> WeightSet:
    """Uniform Glorot weights, zero biases, deterministic for a fixed seed.

    Values are quantized to float32 so that the on-disk format round-trips
    bit-exactly.
    """
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in expected_shapes(config).items():
        if len(shape) == 1:
            tensors[name] = np.zeros(shape)
            continue
        if len(shape) == 2:
            fan_in, fan_out = shape
        else:
            ksize, c_in, c_out = shape
            fan_in, fan_out = ksize * c_in, ksize * c_out
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        values = rng.uniform(-limit, limit, size=shape)
        tensors[name] = values.astype(np.float32).astype(np.float64)
    return WeightSet(config=config, tensors=tensors)


def glorot_limit(shape) -> float:
    if len(shape) == 2:
        fan_in, fan_out = shape
    else:
        fan_in, fan_out = shape[0] * shape[1], shape[0] * shape[2]
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def _check_buffer(buffer_frames, config: ModelConfig) -> np.ndarray:
    buf = np.asarray(buffer_frames, dtype=np.float64)
    if buf.shape != (config.buffer_len, FRAME_LEN):
        raise InvalidArgumentError(
            f"context buffer must be {(config.buffer_len, FRAME_LEN)}, got {buf.shape}"
        )
    if not np.all(np.isfinite(buf)):
        raise InvalidArgumentError("context buffer contains non-finite values")
    return buf


def _forward_cached(buffer_frames, ws: WeightSet):
    cfg = ws.config
    slope = cfg.leaky_relu_slope
    buf = _check_buffer(buffer_frames, cfg)
    cache = {"buf": buf}
    enc = layers.fc_forward(buf, ws["enc.w"], ws["enc.b"], "relu", slope)
    emb = layers.fc_forward(enc, ws["emb.w"], ws["emb.b"], "leaky_relu", slope)
    cache["enc"], cache["emb"] = enc, emb
    if cfg.kind == "rnn":
        c1 = layers.conv1d_forward(emb, ws["conv1.w"], ws["conv1.b"], slope)
        c2 = layers.conv1d_forward(c1, ws["conv2.w"], ws["conv2.b"], slope)
        g1_out, _ = layers.bgru_forward(c2, ws.gru_weights("bgru1.fwd"), ws.gru_weights("bgru1.bwd"))
        _, (hf, hb) = layers.bgru_forward(g1_out, ws.gru_weights("bgru2.fwd"), ws.gru_weights("bgru2.bwd"))
        state = np.concatenate([hf, hb])[None, :]
        cache.update(c1=c1, c2=c2, g1_out=g1_out)
    else:
        flat = emb.reshape(1, -1)
        h = flat
        ff_ins = []
        for i in range(1, cfg.ff_layers + 1):
            ff_ins.append(h)
            h = layers.fc_forward(h, ws[f"ff{i}.w"], ws[f"ff{i}.b"], "leaky_relu", slope)
        state = h
        cache.update(flat=flat, ff_ins=ff_ins)
    m1 = layers.fc_forward(state, ws["map1.w"], ws["map1.b"], "leaky_relu", slope)
    m2 = layers.fc_forward(m1, ws["map2.w"], ws["map2.b"], "leaky_relu", slope)
    out = layers.fc_forward(m2, ws["dec.w"], ws["dec.b"], "none", slope)
    cache.update(state=state, m1=m1, m2=m2)
    return out[0], cache


def model_forward(buffer_frames, ws: WeightSet) -> np.ndarray:
    """Predict one raw 320-sample frame from a (buffer_len, 160) context."""
    out, _ = _forward_cached(buffer_frames, ws)
    if not np.all(np.isfinite(out)):
        raise NumericFailureError("model produced non-finite output")
    return out


def model_backward(buffer_frames, ws: WeightSet, output_gradient):
    """Exact reverse-mode gradients of model_forward.

    Returns (param_gradients dict mirroring the WeightSet, input_gradients
    of shape (buffer_len, 160)).
    """
    cfg = ws.config
    slope = cfg.leaky_relu_slope
    g_out = np.asarray(output_gradient, dtype=np.float64)
    if g_out.shape != (cfg.fc_decoding,):
        raise InvalidArgumentError(f"output gradient must be ({cfg.fc_decoding},), got {g_out.shape}")
    out, cache = _forward_cached(buffer_frames, ws)
    grads = {}

    g = g_out[None, :]
    g, grads["dec.w"], grads["dec.b"] = layers.fc_backward(cache["m2"], ws["dec.w"], ws["dec.b"], g, "none", slope)
    g, grads["map2.w"], grads["map2.b"] = layers.fc_backward(cache["m1"], ws["map2.w"], ws["map2.b"], g, "leaky_relu", slope)
    g, grads["map1.w"], grads["map1.b"] = layers.fc_backward(cache["state"], ws["map1.w"], ws["map1.b"], g, "leaky_relu", slope)

    if cfg.kind == "rnn":
        units2 = cfg.bgru2_units
        g_state = g[0]
        g_seq2, gw2f, gw2b = layers.bgru_backward(
            cache["g1_out"], ws.gru_weights("bgru2.fwd"), ws.gru_weights("bgru2.bwd"),
            g_out=None, g_final=(g_state[:units2], g_state[units2:]),
        )
        g_seq1, gw1f, gw1b = layers.bgru_backward(
            cache["c2"], ws.gru_weights("bgru1.fwd"), ws.gru_weights("bgru1.bwd"),
            g_out=g_seq2, g_final=None,
        )
        for prefix, gw in (("bgru1.fwd", gw1f), ("bgru1.bwd", gw1b), ("bgru2.fwd", gw2f), ("bgru2.bwd", gw2b)):
            for part in _GATE_PARTS:
                grads[f"{prefix}.{part}"] = getattr(gw, part)
        g, grads["conv2.w"], grads["conv2.b"] = layers.conv1d_backward(cache["c1"], ws["conv2.w"], ws["conv2.b"], g_seq1, slope)
        g, grads["conv1.w"], grads["conv1.b"] = layers.conv1d_backward(cache["emb"], ws["conv1.w"], ws["conv1.b"], g, slope)
    else:
        for i in range(cfg.ff_layers, 0, -1):
            g, grads[f"ff{i}.w"], grads[f"ff{i}.b"] = layers.fc_backward(
                cache["ff_ins"][i - 1], ws[f"ff{i}.w"], ws[f"ff{i}.b"], g, "leaky_relu", slope
            )
        g = g.reshape(cfg.buffer_len, cfg.fc_embedding)

    g, grads["emb.w"], grads["emb.b"] = layers.fc_backward(cache["enc"], ws["emb.w"], ws["emb.b"], g, "leaky_relu", slope)
    g_buf, grads["enc.w"], grads["enc.b"] = layers.fc_backward(cache["buf"], ws["enc.w"], ws["enc.b"], g, "relu", slope)
    ordered = {name: grads[name] for name in expected_shapes(cfg)}
    return ordered, g_buf


@dataclass
class MacReport:
    """Per-layer multiply counts for predicting one 10 ms frame."""

    layers: dict
    total: int = field(init=False)

    def __post_init__(self):
        self.total = int(sum(self.layers.values()))


def count_macs(config: ModelConfig) -> MacReport:
    """One MAC per scalar multiply in dense/conv/recurrent matrix products.

    Per-step layers are counted over all buffer_len sequence steps; both
    BGRU directions are counted; bias adds, activations, and gate pointwise
    products are excluded.
    """
    n = config.buffer_len
    counts = {
        "fc_encoding": n * FRAME_LEN * config.fc_encoding,
        "fc_embedding": n * config.fc_encoding * config.fc_embedding,
    }
    if config.kind == "rnn":
        counts["conv1x4"] = n * 4 * config.fc_embedding * config.conv4_filters
        counts["conv1x2"] = n * 2 * config.conv4_filters * config.conv2_filters
        u1, u2 = config.bgru1_units, config.bgru2_units
        counts["bgru1"] = 2 * n * 3 * (config.conv2_filters * u1 + u1 * u1)
        counts["bgru2"] = 2 * n * 3 * (2 * u1 * u2 + u2 * u2)
        counts["fc_mapping1"] = 2 * u2 * config.fc_map1
    else:
        n_in = n * config.fc_embedding
        for i in range(1, config.ff_layers + 1):
            counts[f"fc_flat{i}"] = n_in * config.ff_units
            n_in = config.ff_units
        counts["fc_mapping1"] = config.ff_units * config.fc_map1
    counts["fc_mapping2"] = config.fc_map1 * config.fc_map2
    counts["fc_decoding"] = config.fc_map2 * config.fc_decoding
    return MacReport(layers=counts)
