"""Mean-absolute-error losses in time and time-frequency domain.

Three kinds: "time" (sample MAE), "mag" (MAE between STFT magnitudes),
and "comb", the weighted sum

    (1 - alpha) * mean||X_hat| - |X|| + alpha * mean|X_hat - X|

where the complex term restores phase sensitivity and alpha defaults to 0.1.
All gradients are exact, with the usual subgradient-0 convention at kinks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsp import StftConfig, make_hann, stft, stft_frame_count
from .errors import InvalidArgumentError

LOSS_KINDS = ("time", "mag", "comb")


@dataclass(frozen=True)
class LossConfig:
    kind: str = "comb"
    alpha: float = 0.1
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise InvalidArgumentError(f"unknown loss kind {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidArgumentError(f"alpha must be in [0, 1], got {self.alpha}")


def _pair(predicted, clean):
    p = np.asarray(predicted, dtype=np.float64)
    c = np.asarray(clean, dtype=np.float64)
    if p.ndim != 1 or p.shape != c.shape:
        raise InvalidArgumentError(f"signal shapes differ: {p.shape} vs {c.shape}")
    return p, c


def mae_time(predicted, clean) -> float:
    p, c = _pair(predicted, clean)
    if p.size < 1:
        raise InvalidArgumentError("mae_time needs at least one sample")
    return float(np.mean(np.abs(p - c)))


def mae_mag(predicted, clean, stft_config: StftConfig = StftConfig()) -> float:
    p, c = _pair(predicted, clean)
    return float(np.mean(np.abs(np.abs(stft(p, stft_config)) - np.abs(stft(c, stft_config)))))


def mae_comb(predicted, clean, stft_config: StftConfig = StftConfig(), alpha: float = 0.1) -> float:
    p, c = _pair(predicted, clean)
    ph = stft(p, stft_config)
    ch = stft(c, stft_config)
    mag = np.mean(np.abs(np.abs(ph) - np.abs(ch)))
    cplx = np.mean(np.abs(ph - ch))
    return float((1.0 - alpha) * mag + alpha * cplx)


def compute_loss(config: LossConfig, predicted, clean) -> float:
    if config.kind == "time":
        return mae_time(predicted, clean)
    if config.kind == "mag":
        return mae_mag(predicted, clean, config.stft)
    return mae_comb(predicted, clean, config.stft, config.alpha)


def _stft_adjoint(bin_grads: np.ndarray, stft_config: StftConfig, n_samples: int) -> np.ndarray:
    """Map per-bin gradients back to time-domain sample gradients.

    bin_grads[t, f] = dL/dRe X(t,f) + 1j * dL/dIm X(t,f). The STFT is a
    real-linear map, so the pullback of frame t onto its samples is
    window * Re(sum_f G(t,f) e^{+2pi i f k / N}) scattered at t*hop.
    """
    win = stft_config.window_len
    hop = stft_config.hop
    window = make_hann(win)
    n_frames = bin_grads.shape[0]
    full = np.zeros((n_frames, win), dtype=np.complex128)
    full[:, : stft_config.n_bins] = bin_grads
    per_frame = window * np.fft.ifft(full, axis=1).real * win
    grad = np.zeros(n_samples)
    for t in range(n_frames):
        grad[t * hop : t * hop + win] += per_frame[t]
    return grad


def _safe_unit(z: np.ndarray) -> np.ndarray:
    """z / |z| with 0 where z == 0 (subgradient convention)."""
    mag = np.abs(z)
    out = np.zeros_like(z)
    nz = mag > 0.0
    out[nz] = z[nz] / mag[nz]
    return out


def loss_gradient(config: LossConfig, predicted, clean) -> np.ndarray:
    """dL/d(predicted samples) for the configured loss."""
    p, c = _pair(predicted, clean)
    if config.kind == "time":
        if p.size < 1:
            raise InvalidArgumentError("mae_time needs at least one sample")
        return np.sign(p - c) / p.size

    ph = stft(p, config.stft)
    ch = stft(c, config.stft)
    n_bins_total = ph.size
    mag_p = np.abs(ph)
    mag_c = np.abs(ch)
    # d mean||X^|-|X|| / dX^ = sign(|X^|-|X|) * X^/|X^| / M
    g_mag = np.sign(mag_p - mag_c) * _safe_unit(ph) / n_bins_total
    if config.kind == "mag":
        bin_grads = g_mag
    else:
        g_cplx = _safe_unit(ph - ch) / n_bins_total
        bin_grads = (1.0 - config.alpha) * g_mag + config.alpha * g_cplx
    return _stft_adjoint(bin_grads, config.stft, p.size)
