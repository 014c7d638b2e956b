"""Windowing, overlap-add, and STFT primitives for 16 kHz frame streaming.

Everything here is a pure function of its inputs and computes in float64.
The streaming geometry is fixed at 10 ms frames (160 samples) reconstructed
from 50 %-overlapped 320-sample windows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

SAMPLE_RATE = 16000
FRAME_LEN = 160          # 10 ms at 16 kHz
WINDOW_LEN = 2 * FRAME_LEN


def make_hann(length: int) -> np.ndarray:
    """Periodic (DFT-even) hann window of the given even length.

    The periodic variant sums to exactly 1.0 across a half-window hop,
    which is what makes the 320/160 overlap-add reconstruction lossless.
    """
    if not isinstance(length, (int, np.integer)):
        raise InvalidArgumentError(f"window length must be an integer, got {length!r}")
    if length < 2 or length % 2 != 0:
        raise InvalidArgumentError(f"window length must be even and >= 2, got {length}")
    k = np.arange(length, dtype=np.float64)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / length))


def overlap_add(prev_windowed: np.ndarray, curr_windowed: np.ndarray) -> np.ndarray:
    """Combine two consecutive windowed 2-frame buffers into one output frame.

    output[k] = prev_windowed[k + hop] + curr_windowed[k], hop = len/2.
    """
    prev = np.asarray(prev_windowed, dtype=np.float64)
    curr = np.asarray(curr_windowed, dtype=np.float64)
    if prev.ndim != 1 or curr.ndim != 1 or prev.shape != curr.shape:
        raise InvalidArgumentError(
            f"overlap_add needs two equal-length vectors, got {prev.shape} and {curr.shape}"
        )
    if prev.size < 2 or prev.size % 2 != 0:
        raise InvalidArgumentError(f"overlap_add needs an even length >= 2, got {prev.size}")
    hop = prev.size // 2
    return prev[hop:] + curr[:hop]


@dataclass(frozen=True)
class StftConfig:
    """Analysis configuration: periodic hann, 50 % hop, no zero-padding."""

    window_ms: int = 32

    def __post_init__(self):
        if self.window_ms not in (20, 32, 64):
            raise InvalidArgumentError(
                f"window_ms must be one of 20, 32, 64; got {self.window_ms}"
            )

    @property
    def window_len(self) -> int:
        return self.window_ms * SAMPLE_RATE // 1000

    @property
    def hop(self) -> int:
        return self.window_len // 2

    @property
    def n_bins(self) -> int:
        return self.window_len // 2 + 1


def stft_frame_count(n_samples: int, config: StftConfig) -> int:
    if n_samples < config.window_len:
        return 0
    return 1 + (n_samples - config.window_len) // config.hop


def stft(signal: np.ndarray, config: StftConfig = StftConfig()) -> np.ndarray:
    """Complex STFT, frames x bins; frame t covers samples [t*hop, t*hop+window)."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgumentError(f"stft expects a 1-D signal, got shape {x.shape}")
    win = config.window_len
    if x.size < win:
        raise InvalidArgumentError(
            f"signal of {x.size} samples is shorter than one {win}-sample window"
        )
    n_frames = stft_frame_count(x.size, config)
    frames = np.lib.stride_tricks.sliding_window_view(x, win)[:: config.hop][:n_frames]
    windowed = frames * make_hann(win)
    return np.fft.rfft(windowed, axis=1)
