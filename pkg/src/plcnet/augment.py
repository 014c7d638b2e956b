"""Training-time data preparation: cropping, trace reversal, level sampling,
degraded synthesis, and context/target assembly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dsp import FRAME_LEN, SAMPLE_RATE
from .errors import InvalidArgumentError
from .traces import PACKET_LEN, PacketTrace, apply_trace, reverse_trace, trace_to_frame_mask

# Frames below this RMS are treated as pauses when measuring signal level.
ACTIVE_GATE_DBFS = -60.0
PEAK_CEILING = 0.99


def active_rms_db(signal, active_mask=None) -> float | None:
    """Active-signal RMS in dBFS; None when no frame passes the gate.

    The gate marks 10 ms frames whose RMS exceeds -60 dBFS; level is the
    RMS over the samples of those frames.
    """
    x = np.asarray(signal, dtype=np.float64)
    n_frames = x.size // FRAME_LEN
    if n_frames == 0:
        return None
    frames = x[: n_frames * FRAME_LEN].reshape(n_frames, FRAME_LEN)
    if active_mask is None:
        active_mask = frame_activity_mask(x)
    if not active_mask.any():
        return None
    rms = np.sqrt(np.mean(frames[active_mask] ** 2))
    if rms == 0.0:
        return None
    return float(20.0 * np.log10(rms))


def frame_activity_mask(signal) -> np.ndarray:
    x = np.asarray(signal, dtype=np.float64)
    n_frames = x.size // FRAME_LEN
    frames = x[: n_frames * FRAME_LEN].reshape(n_frames, FRAME_LEN)
    rms = np.sqrt(np.mean(frames**2, axis=1))
    return 20.0 * np.log10(np.maximum(rms, 1e-12)) > ACTIVE_GATE_DBFS


@dataclass
class AugmentedExample:
    clean: np.ndarray          # level-scaled clean crop
    degraded: np.ndarray       # clean crop with lost packets zeroed
    frame_mask: np.ndarray     # per-10 ms-frame loss mask
    target_level_db: float
    gain: float
    trace_reversed: bool
    padded: bool


def augment_utterance(clean, trace: PacketTrace, config, rng: np.random.Generator) -> AugmentedExample:
    """Random crop + trace reversal + level sampling + zero-filling.

    `config` supplies crop_seconds, trace_reverse_prob, level_mean_db and
    level_std_db. The crop start is aligned to 20 ms packet boundaries so
    trace packets map cleanly onto the cropped audio; audio and trace are
    cropped with independent random starts (their pairing is arbitrary).
    Draw order from rng: audio start, trace start, reversal, level.
    """
    x = np.asarray(clean, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InvalidArgumentError("augment_utterance needs a non-empty 1-D signal")
    crop_len = int(round(config.crop_seconds * SAMPLE_RATE))
    crop_len = max(PACKET_LEN, (crop_len // PACKET_LEN) * PACKET_LEN)
    n_packets = crop_len // PACKET_LEN
    n_frames = crop_len // FRAME_LEN

    padded = x.size < crop_len
    if padded:
        crop = np.zeros(crop_len)
        crop[: x.size] = x
        _ = rng.integers(0, 1)  # keep the draw sequence fixed regardless of padding
    else:
        max_start = (x.size - crop_len) // PACKET_LEN
        start = int(rng.integers(0, max_start + 1)) * PACKET_LEN
        crop = x[start : start + crop_len].copy()

    if len(trace) >= n_packets:
        t_start = int(rng.integers(0, len(trace) - n_packets + 1))
        bits = trace.bits[t_start : t_start + n_packets].copy()
    else:
        _ = rng.integers(0, 1)
        bits = np.zeros(n_packets, dtype=np.uint8)
        bits[: len(trace)] = trace.bits
    crop_trace = PacketTrace(bits=bits)

    reversed_flag = bool(rng.random() < config.trace_reverse_prob)
    if reversed_flag:
        crop_trace = reverse_trace(crop_trace)

    target_db = float(rng.normal(config.level_mean_db, config.level_std_db))
    current_db = active_rms_db(crop)
    if current_db is None:
        gain = 1.0
    else:
        gain = 10.0 ** ((target_db - current_db) / 20.0)
        peak = np.abs(crop).max()
        if peak * gain > PEAK_CEILING:
            gain = PEAK_CEILING / peak
    scaled = crop * gain

    return AugmentedExample(
        clean=scaled,
        degraded=apply_trace(scaled, crop_trace),
        frame_mask=trace_to_frame_mask(crop_trace, n_frames),
        target_level_db=target_db,
        gain=float(gain),
        trace_reversed=reversed_flag,
        padded=padded,
    )


def build_training_example(clean_crop, degraded_crop, frame_mask, position: int, config):
    """Assemble one (context, target) pair at a frame position.

    Context rows run oldest to newest over positions [position-n, position);
    the oldest `clean_context_frames` rows are read from the clean crop and
    the newest `degraded_context_frames` rows from the degraded crop. The
    target is the clean 320-sample window at (position, position+1).
    """
    clean = np.asarray(clean_crop, dtype=np.float64)
    degraded = np.asarray(degraded_crop, dtype=np.float64)
    n = config.clean_context_frames + config.degraded_context_frames
    n_frames = clean.size // FRAME_LEN
    if position < n or position + 2 > n_frames:
        raise InvalidArgumentError(
            f"position {position} leaves no room for {n} context frames "
            f"and a 2-frame target in {n_frames} frames"
        )
    context = np.zeros((n, FRAME_LEN))
    for row in range(n):
        src = clean if row < config.clean_context_frames else degraded
        p = position - n + row
        context[row] = src[p * FRAME_LEN : (p + 1) * FRAME_LEN]
    target = clean[position * FRAME_LEN : (position + 2) * FRAME_LEN].copy()
    return context, target
