"""Mono 16-bit 16 kHz PCM WAV reading and writing.

Samples map to floats by dividing the int16 code by 32768, so the float
range is [-1.0, 1.0). Writing rounds to the nearest code and clamps, which
makes read -> write -> read the identity at 16-bit resolution.
"""

from __future__ import annotations

import wave

import numpy as np

from .dsp import SAMPLE_RATE
from .errors import FormatError, UnsupportedFormatError

_SCALE = 32768.0


def read_wav(path) -> np.ndarray:
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            comp = wf.getcomptype()
            if comp != "NONE":
                raise UnsupportedFormatError(f"{path}: compressed WAV ({comp}) not supported")
            if channels != 1:
                raise UnsupportedFormatError(f"{path}: expected mono, got {channels} channels")
            if width != 2:
                raise UnsupportedFormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
            if rate != SAMPLE_RATE:
                raise UnsupportedFormatError(f"{path}: expected {SAMPLE_RATE} Hz, got {rate} Hz")
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise FormatError(f"{path}: malformed WAV file ({exc})") from exc
    except EOFError as exc:
        raise FormatError(f"{path}: truncated WAV file") from exc
    codes = np.frombuffer(raw, dtype="<i2")
    return codes.astype(np.float64) / _SCALE


def write_wav(path, samples):
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise UnsupportedFormatError(f"can only write mono signals, got shape {x.shape}")
    codes = np.clip(np.rint(x * _SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(SAMPLE_RATE)
        wf.writeframes(codes.tobytes())
