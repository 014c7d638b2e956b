"""Packet-loss traces: parsing, statistics, frame masks, degraded synthesis.

A trace is one bit per 20 ms packet (1 = lost). Audio frames are 10 ms, so
each packet covers exactly two frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import FRAME_LEN
from .errors import FormatError, InvalidArgumentError

PACKET_MS = 20
PACKET_LEN = 2 * FRAME_LEN
FRAMES_PER_PACKET = 2

SUBSET_LOW = "low"
SUBSET_MED = "med"
SUBSET_HIGH = "high"

# Maximum burst duration per subset, inclusive upper bounds in ms.
LOW_MAX_MS = 120
MED_MAX_MS = 320


@dataclass(frozen=True)
class PacketTrace:
    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits, dtype=np.uint8)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidArgumentError("trace must be a non-empty bit vector")
        if not np.isin(arr, (0, 1)).all():
            raise InvalidArgumentError("trace values must be 0 or 1")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "bits", arr)

    def __len__(self):
        return self.bits.size


@dataclass(frozen=True)
class BurstStats:
    max_burst_ms: int
    total_lost_ms: int
    loss_ratio: float
    subset: str


def read_trace(path) -> PacketTrace:
    """Parse a text file of 0/1 characters, contiguous or whitespace-separated."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    bits = []
    for ch in text:
        if ch in "01":
            bits.append(ord(ch) - ord("0"))
        elif not ch.isspace():
            raise FormatError(f"unexpected character {ch!r} in trace file {path}")
    if not bits:
        raise FormatError(f"trace file {path} contains no bits")
    return PacketTrace(bits=np.array(bits, dtype=np.uint8))


def write_trace(trace: PacketTrace, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("".join(str(int(b)) for b in trace.bits))
        fh.write("\n")


def trace_to_frame_mask(trace: PacketTrace, n_frames: int) -> np.ndarray:
    """Per-10 ms-frame loss mask: frame k is lost iff packet k//2 is lost.

    Trace bits beyond the requested frames are ignored; a short trace pads
    the mask with False (not lost).
    """
    mask = np.zeros(n_frames, dtype=bool)
    covered = min(n_frames, FRAMES_PER_PACKET * len(trace))
    if covered:
        mask[:covered] = trace.bits.repeat(FRAMES_PER_PACKET)[:covered].astype(bool)
    return mask


def apply_trace(clean, trace: PacketTrace) -> np.ndarray:
    """Zero-filling channel: samples inside lost 20 ms packets become 0."""
    x = np.asarray(clean, dtype=np.float64).copy()
    for p in np.flatnonzero(trace.bits):
        x[p * PACKET_LEN : (p + 1) * PACKET_LEN] = 0.0
    return x


def burst_stats(trace: PacketTrace) -> BurstStats:
    bits = trace.bits
    max_run = run = 0
    for b in bits:
        run = run + 1 if b else 0
        max_run = max(max_run, run)
    max_burst_ms = PACKET_MS * max_run
    if max_burst_ms <= LOW_MAX_MS:
        subset = SUBSET_LOW
    elif max_burst_ms <= MED_MAX_MS:
        subset = SUBSET_MED
    else:
        subset = SUBSET_HIGH
    lost = int(bits.sum())
    return BurstStats(
        max_burst_ms=max_burst_ms,
        total_lost_ms=PACKET_MS * lost,
        loss_ratio=lost / bits.size,
        subset=subset,
    )


def reverse_trace(trace: PacketTrace) -> PacketTrace:
    return PacketTrace(bits=trace.bits[::-1].copy())
