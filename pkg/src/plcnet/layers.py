"""Dense, convolutional, and recurrent layer math with exact reverse-mode gradients.

Conventions: sequences are (time, channels) float64 arrays, vectors are 1-D,
dense weights are (in, out) so that y = x @ w + b. Backward functions
recompute the cheap forward intermediates they need, which keeps every
function pure and stateless.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import InvalidArgumentError

ACTIVATIONS = ("relu", "leaky_relu", "none")


def _sigmoid(a: np.ndarray) -> np.ndarray:
    # Piecewise form avoids overflow warnings for large |a|.
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def _activate(pre: np.ndarray, activation: str, slope: float) -> np.ndarray:
    if activation == "relu":
        return np.maximum(pre, 0.0)
    if activation == "leaky_relu":
        return np.where(pre >= 0.0, pre, slope * pre)
    if activation == "none":
        return pre
    raise InvalidArgumentError(f"unknown activation {activation!r}")


def _activate_grad(pre: np.ndarray, activation: str, slope: float) -> np.ndarray:
    if activation == "relu":
        return (pre > 0.0).astype(np.float64)
    if activation == "leaky_relu":
        return np.where(pre >= 0.0, 1.0, slope)
    if activation == "none":
        return np.ones_like(pre)
    raise InvalidArgumentError(f"unknown activation {activation!r}")


def fc_forward(x, w, b, activation="none", slope=0.01):
    """Affine map per sequence row followed by an elementwise activation."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise InvalidArgumentError(
            f"fc shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}"
        )
    return _activate(x @ w + b, activation, slope)


def fc_backward(x, w, b, g_y, activation="none", slope=0.01):
    """Gradients of fc_forward w.r.t. (x, w, b) given dL/dy."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    g_y = np.asarray(g_y, dtype=np.float64)
    pre = x @ w + b
    if g_y.shape != pre.shape:
        raise InvalidArgumentError(f"fc gradient shape {g_y.shape} != output {pre.shape}")
    g_pre = g_y * _activate_grad(pre, activation, slope)
    return g_pre @ w.T, x.T @ g_pre, g_pre.sum(axis=0)


def conv1d_forward(seq, kernels, bias, slope=0.01):
    """Length-preserving causal Conv1D with leaky-relu activation.

    kernels has shape (kernel_size, in_channels, out_channels); the sequence
    is zero-padded with kernel_size-1 samples at the start, so tap
    kernels[-1] reads the current step and earlier taps reach into the past.
    """
    seq = np.asarray(seq, dtype=np.float64)
    kernels = np.asarray(kernels, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] < 1:
        raise InvalidArgumentError(f"conv1d expects a non-empty (time, channels) sequence, got {seq.shape}")
    if kernels.ndim != 3 or kernels.shape[1] != seq.shape[1] or bias.shape != (kernels.shape[2],):
        raise InvalidArgumentError(
            f"conv1d shape mismatch: seq {seq.shape}, kernels {kernels.shape}, bias {bias.shape}"
        )
    ksize, _, n_out = kernels.shape
    t_len = seq.shape[0]
    padded = np.vstack([np.zeros((ksize - 1, seq.shape[1])), seq])
    pre = np.broadcast_to(bias, (t_len, n_out)).copy()
    for k in range(ksize):
        pre += padded[k : k + t_len] @ kernels[k]
    return _activate(pre, "leaky_relu", slope)


def conv1d_backward(seq, kernels, bias, g_y, slope=0.01):
    """Gradients of conv1d_forward w.r.t. (seq, kernels, bias)."""
    seq = np.asarray(seq, dtype=np.float64)
    kernels = np.asarray(kernels, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    g_y = np.asarray(g_y, dtype=np.float64)
    ksize, _, n_out = kernels.shape
    t_len = seq.shape[0]
    padded = np.vstack([np.zeros((ksize - 1, seq.shape[1])), seq])
    pre = np.broadcast_to(bias, (t_len, n_out)).copy()
    for k in range(ksize):
        pre += padded[k : k + t_len] @ kernels[k]
    if g_y.shape != pre.shape:
        raise InvalidArgumentError(f"conv1d gradient shape {g_y.shape} != output {pre.shape}")
    g_pre = g_y * _activate_grad(pre, "leaky_relu", slope)
    g_kernels = np.zeros_like(kernels)
    g_padded = np.zeros_like(padded)
    for k in range(ksize):
        g_kernels[k] = padded[k : k + t_len].T @ g_pre
        g_padded[k : k + t_len] += g_pre @ kernels[k].T
    return g_padded[ksize - 1 :], g_kernels, g_pre.sum(axis=0)


@dataclass
class GruWeights:
    """Per-gate parameter tensors of one GRU direction.

    w* act on the input (in, units), u* on the recurrent state (units, units).
    """

    wz: np.ndarray
    uz: np.ndarray
    bz: np.ndarray
    wr: np.ndarray
    ur: np.ndarray
    br: np.ndarray
    wh: np.ndarray
    uh: np.ndarray
    bh: np.ndarray

    @property
    def units(self) -> int:
        return self.uz.shape[0]

    @property
    def input_dim(self) -> int:
        return self.wz.shape[0]

    @classmethod
    def zeros(cls, input_dim: int, units: int) -> "GruWeights":
        return cls(
            wz=np.zeros((input_dim, units)), uz=np.zeros((units, units)), bz=np.zeros(units),
            wr=np.zeros((input_dim, units)), ur=np.zeros((units, units)), br=np.zeros(units),
            wh=np.zeros((input_dim, units)), uh=np.zeros((units, units)), bh=np.zeros(units),
        )

    def add_(self, other: "GruWeights"):
        for f in fields(self):
            getattr(self, f.name).__iadd__(getattr(other, f.name))
        return self


def _check_gru_shapes(x, h_prev, w: GruWeights):
    if x.shape != (w.input_dim,) or h_prev.shape != (w.units,):
        raise InvalidArgumentError(
            f"gru shape mismatch: x {x.shape}, h {h_prev.shape}, "
            f"weights expect in={w.input_dim} units={w.units}"
        )


def gru_cell_forward(x, h_prev, w: GruWeights) -> np.ndarray:
    """One GRU step, original reset-before-candidate formulation:

    z = sigmoid(x wz + h uz + bz)
    r = sigmoid(x wr + h ur + br)
    c = tanh(x wh + (r*h) uh + bh)
    h' = (1-z)*h + z*c
    """
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    _check_gru_shapes(x, h_prev, w)
    z = _sigmoid(x @ w.wz + h_prev @ w.uz + w.bz)
    r = _sigmoid(x @ w.wr + h_prev @ w.ur + w.br)
    c = np.tanh(x @ w.wh + (r * h_prev) @ w.uh + w.bh)
    return (1.0 - z) * h_prev + z * c


def gru_cell_backward(x, h_prev, w: GruWeights, g_h):
    """Gradients of one GRU step w.r.t. (x, h_prev, weights) given dL/dh'."""
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    g_h = np.asarray(g_h, dtype=np.float64)
    _check_gru_shapes(x, h_prev, w)
    z = _sigmoid(x @ w.wz + h_prev @ w.uz + w.bz)
    r = _sigmoid(x @ w.wr + h_prev @ w.ur + w.br)
    rh = r * h_prev
    c = np.tanh(x @ w.wh + rh @ w.uh + w.bh)

    g_z = g_h * (c - h_prev)
    g_c = g_h * z
    d_az = g_z * z * (1.0 - z)
    d_ah = g_c * (1.0 - c * c)
    g_rh = d_ah @ w.uh.T
    g_r = g_rh * h_prev
    d_ar = g_r * r * (1.0 - r)

    grads = GruWeights(
        wz=np.outer(x, d_az), uz=np.outer(h_prev, d_az), bz=d_az.copy(),
        wr=np.outer(x, d_ar), ur=np.outer(h_prev, d_ar), br=d_ar.copy(),
        wh=np.outer(x, d_ah), uh=np.outer(rh, d_ah), bh=d_ah.copy(),
    )
    g_x = d_az @ w.wz.T + d_ar @ w.wr.T + d_ah @ w.wh.T
    g_h_prev = g_h * (1.0 - z) + d_az @ w.uz.T + d_ar @ w.ur.T + g_rh * r
    return g_x, g_h_prev, grads


def _gru_run(seq, w: GruWeights, reverse: bool) -> np.ndarray:
    t_len = seq.shape[0]
    states = np.zeros((t_len, w.units))
    h = np.zeros(w.units)
    order = range(t_len - 1, -1, -1) if reverse else range(t_len)
    for t in order:
        h = gru_cell_forward(seq[t], h, w)
        states[t] = h
    return states


def _gru_run_backward(seq, w: GruWeights, g_states, reverse: bool):
    """Unrolled reverse pass of one GRU direction.

    g_states[t] is the gradient arriving at the state emitted for position t
    (from per-step outputs and/or the final state).
    """
    t_len = seq.shape[0]
    states = _gru_run(seq, w, reverse)
    order = list(range(t_len - 1, -1, -1)) if reverse else list(range(t_len))
    g_seq = np.zeros_like(seq)
    g_w = GruWeights.zeros(w.input_dim, w.units)
    g_h = np.zeros(w.units)
    for step in reversed(range(t_len)):
        t = order[step]
        h_prev = states[order[step - 1]] if step > 0 else np.zeros(w.units)
        g_x, g_h, g_step = gru_cell_backward(seq[t], h_prev, w, g_states[t] + g_h)
        g_seq[t] += g_x
        g_w.add_(g_step)
    return g_seq, g_w


def bgru_forward(seq, w_fwd: GruWeights, w_bwd: GruWeights):
    """Bidirectional GRU over a sequence, zero initial states.

    Returns the per-step output [h_fwd_t ; h_bwd_t] and the final states:
    the forward state at the last position and the backward state at
    position 0 (the backward pass runs right to left).
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] < 1:
        raise InvalidArgumentError(f"bgru expects a non-empty (time, channels) sequence, got {seq.shape}")
    states_f = _gru_run(seq, w_fwd, reverse=False)
    states_b = _gru_run(seq, w_bwd, reverse=True)
    out = np.hstack([states_f, states_b])
    return out, (states_f[-1].copy(), states_b[0].copy())


def bgru_backward(seq, w_fwd: GruWeights, w_bwd: GruWeights, g_out=None, g_final=None):
    """Gradients of bgru_forward given dL/d(per-step outputs) and/or dL/d(final states)."""
    seq = np.asarray(seq, dtype=np.float64)
    t_len = seq.shape[0]
    units = w_fwd.units
    g_states_f = np.zeros((t_len, units))
    g_states_b = np.zeros((t_len, units))
    if g_out is not None:
        g_out = np.asarray(g_out, dtype=np.float64)
        if g_out.shape != (t_len, 2 * units):
            raise InvalidArgumentError(f"bgru gradient shape {g_out.shape} != (T, 2*units)")
        g_states_f += g_out[:, :units]
        g_states_b += g_out[:, units:]
    if g_final is not None:
        g_f, g_b = g_final
        g_states_f[-1] += np.asarray(g_f, dtype=np.float64)
        g_states_b[0] += np.asarray(g_b, dtype=np.float64)
    g_seq_f, g_w_fwd = _gru_run_backward(seq, w_fwd, g_states_f, reverse=False)
    g_seq_b, g_w_bwd = _gru_run_backward(seq, w_bwd, g_states_b, reverse=True)
    return g_seq_f + g_seq_b, g_w_fwd, g_w_bwd
