"""Streaming concealment pipeline.

One look-ahead frame is held back, so every push after the first returns
the output frame for the *previous* input position (10 ms algorithmic
latency, 20 ms total with the frame itself). Intact (current, look-ahead)
pairs are hann-windowed and overlap-added; if either frame of the pair is
lost, the window is synthesized instead — by the neural model from the
context ring, or by zero substitution for the zero-fill baseline.
The emitted frame is written back into the context ring.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .dsp import FRAME_LEN, WINDOW_LEN, make_hann, overlap_add
from .errors import InvalidArgumentError, InvalidStateError
from .model import WeightSet, model_forward

ORIGIN_SILENCE = "silence"
ORIGIN_RECEIVED = "received"
ORIGIN_CONCEALED = "concealed"


@dataclass
class PipelineConfig:
    """Streaming parameters; frame length and look-ahead are fixed by design."""

    concealer: str = "zero_fill"          # "neural" or "zero_fill"
    weights: WeightSet | None = None
    buffer_len: int = 6

    def __post_init__(self):
        if self.concealer not in ("neural", "zero_fill"):
            raise InvalidArgumentError(f"unknown concealer {self.concealer!r}")
        if self.buffer_len < 2:
            raise InvalidArgumentError(f"buffer_len must be >= 2, got {self.buffer_len}")
        if self.concealer == "neural":
            if self.weights is None:
                raise InvalidArgumentError("neural concealer requires weights")
            if self.weights.config.buffer_len != self.buffer_len:
                raise InvalidArgumentError(
                    f"weights were built for buffer_len {self.weights.config.buffer_len}, "
                    f"pipeline wants {self.buffer_len}"
                )

    @classmethod
    def neural(cls, weights: WeightSet) -> "PipelineConfig":
        return cls(concealer="neural", weights=weights, buffer_len=weights.config.buffer_len)

    @classmethod
    def zero_fill(cls, buffer_len: int = 6) -> "PipelineConfig":
        return cls(concealer="zero_fill", buffer_len=buffer_len)


def _as_frame(frame) -> np.ndarray:
    arr = np.asarray(frame, dtype=np.float64)
    if arr.shape != (FRAME_LEN,):
        raise InvalidArgumentError(f"frames must be {FRAME_LEN} samples, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("frame contains non-finite samples")
    return arr


class Pipeline:
    """Single-stream state machine; one instance per stream, not thread-safe."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self._window = make_hann(WINDOW_LEN)
        zero = np.zeros(FRAME_LEN)
        self._ring = deque(
            [(zero.copy(), ORIGIN_SILENCE) for _ in range(config.buffer_len)],
            maxlen=config.buffer_len,
        )
        self._prev_windowed = np.zeros(WINDOW_LEN)
        self._pending: np.ndarray | None = None   # None marks a lost frame
        self._count = 0
        self.model_calls = 0

    @property
    def frames_pushed(self) -> int:
        return self._count

    def context(self) -> np.ndarray:
        """The ring contents, oldest row first."""
        return np.stack([frame for frame, _ in self._ring])

    def origins(self) -> list:
        return [origin for _, origin in self._ring]

    def push(self, frame) -> np.ndarray | None:
        """Feed one 10 ms frame (or None for a lost frame).

        The first push only fills the look-ahead slot and returns None;
        every later push returns the output frame for the previous input.
        """
        incoming = None if frame is None else _as_frame(frame)
        if self._count == 0:
            self._pending = incoming
            self._count = 1
            return None
        current, lookahead = self._pending, incoming
        if current is None or lookahead is None:
            candidate = self._window * self._conceal_window(current, lookahead)
            origin = ORIGIN_CONCEALED
        else:
            candidate = self._window * np.concatenate([current, lookahead])
            origin = ORIGIN_RECEIVED
        output = overlap_add(self._prev_windowed, candidate)
        self._prev_windowed = candidate
        self._ring.append((output, origin))
        self._pending = incoming
        self._count += 1
        return output

    def _conceal_window(self, current, lookahead) -> np.ndarray:
        if self.config.concealer == "neural":
            self.model_calls += 1
            return model_forward(self.context(), self.config.weights)
        zero = np.zeros(FRAME_LEN)
        return np.concatenate([
            current if current is not None else zero,
            lookahead if lookahead is not None else zero,
        ])

    def flush(self) -> np.ndarray:
        """Emit the pending look-ahead frame by pushing one frame of silence."""
        if self._count == 0:
            raise InvalidStateError("flush on a pipeline that never received a frame")
        return self.push(np.zeros(FRAME_LEN))


def pipeline_new(config: PipelineConfig) -> Pipeline:
    return Pipeline(config)


def conceal_signal(signal, frame_loss_mask, config: PipelineConfig) -> np.ndarray:
    """Run a whole utterance through the pipeline, output aligned to input.

    The stream is primed with one frame of silence so the first real frame
    reconstructs exactly; the one-frame latency is compensated by reading
    outputs one push late, and the final partial frame is zero-padded then
    truncated back.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgumentError(f"expected a 1-D signal, got shape {x.shape}")
    mask = np.asarray(frame_loss_mask, dtype=bool)
    n_frames = math.ceil(x.size / FRAME_LEN)
    if mask.shape != (n_frames,):
        raise InvalidArgumentError(
            f"loss mask has {mask.size} entries for {n_frames} frames"
        )
    if n_frames == 0:
        return np.zeros(0)

    padded = np.zeros(n_frames * FRAME_LEN)
    padded[: x.size] = x
    frames = padded.reshape(n_frames, FRAME_LEN)

    pipe = Pipeline(config)
    pipe.push(np.zeros(FRAME_LEN))
    outputs = []
    for i in range(n_frames):
        outputs.append(pipe.push(None if mask[i] else frames[i]))
    outputs.append(pipe.flush())
    # outputs[0] belongs to the priming silence frame; drop it.
    out = np.concatenate(outputs[1:])
    return out[: x.size]
