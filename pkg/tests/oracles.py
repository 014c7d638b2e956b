"""Independent reference implementations used as test oracles.

Everything here deliberately avoids the code paths under test: the DFT is a
direct matrix product (not numpy's FFT), the layer math is plain Python
loops over lists, and gradients come from central finite differences.
"""

import math

import numpy as np


def dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def direct_stft(signal, window, hop):
    """One-sided STFT by direct DFT matrix product."""
    n = window.size
    mat = dft_matrix(n)
    frames = []
    t = 0
    while t + n <= signal.size:
        frames.append(mat @ (signal[t : t + n] * window))
        t += hop
    return np.array(frames)[:, : n // 2 + 1]


def finite_difference(f, x, eps=1e-6, indices=None):
    """Central-difference gradient of scalar f at x (flat over given indices)."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.ravel()
    idx = range(flat.size) if indices is None else indices
    grad = {}
    for i in idx:
        xp = flat.copy()
        xp[i] += eps
        xm = flat.copy()
        xm[i] -= eps
        grad[i] = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (2 * eps)
    return grad


def vector_rel_error(analytic, reference) -> float:
    a = np.asarray(analytic, dtype=np.float64).ravel()
    r = np.asarray(reference, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(r), 1e-12)
    return float(np.linalg.norm(a - r) / denom)


# ---------------------------------------------------------------------------
# Naive pure-Python layer stack (golden-vector cross-check)
# ---------------------------------------------------------------------------

def _mv(vec, mat):
    rows = len(mat)
    cols = len(mat[0])
    return [sum(vec[i] * mat[i][j] for i in range(rows)) for j in range(cols)]


def _add(a, b):
    return [x + y for x, y in zip(a, b)]


def _act(vec, kind, slope):
    if kind == "relu":
        return [v if v > 0 else 0.0 for v in vec]
    if kind == "leaky":
        return [v if v >= 0 else slope * v for v in vec]
    return list(vec)


def _sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v)) if v >= 0 else math.exp(v) / (1.0 + math.exp(v))


def _gru_step(x, h, w, slope_unused=None):
    units = len(w["uz"][0])
    az = _add(_add(_mv(x, w["wz"]), _mv(h, w["uz"])), w["bz"])
    ar = _add(_add(_mv(x, w["wr"]), _mv(h, w["ur"])), w["br"])
    z = [_sigmoid(v) for v in az]
    r = [_sigmoid(v) for v in ar]
    rh = [r[i] * h[i] for i in range(units)]
    ah = _add(_add(_mv(x, w["wh"]), _mv(rh, w["uh"])), w["bh"])
    c = [math.tanh(v) for v in ah]
    return [(1.0 - z[i]) * h[i] + z[i] * c[i] for i in range(units)]


def _gru_direction(seq, w, reverse):
    units = len(w["uz"][0])
    h = [0.0] * units
    states = [None] * len(seq)
    order = range(len(seq) - 1, -1, -1) if reverse else range(len(seq))
    for t in order:
        h = _gru_step(seq[t], h, w)
        states[t] = h
    return states


def naive_model_forward(buffer_frames, ws) -> np.ndarray:
    """Pure-Python reimplementation of the full prediction stack."""
    cfg = ws.config
    slope = cfg.leaky_relu_slope
    tensors = {name: arr.tolist() for name, arr in ws.tensors.items()}
    rows = np.asarray(buffer_frames, dtype=np.float64).tolist()

    seq = [_act(_add(_mv(r, tensors["enc.w"]), tensors["enc.b"]), "relu", slope) for r in rows]
    seq = [_act(_add(_mv(r, tensors["emb.w"]), tensors["emb.b"]), "leaky", slope) for r in seq]

    if cfg.kind == "rnn":
        for layer in ("conv1", "conv2"):
            kern = tensors[f"{layer}.w"]
            bias = tensors[f"{layer}.b"]
            ksize = len(kern)
            n_in = len(seq[0])
            padded = [[0.0] * n_in for _ in range(ksize - 1)] + seq
            out = []
            for t in range(len(seq)):
                acc = list(bias)
                for k in range(ksize):
                    acc = _add(acc, _mv(padded[t + k], kern[k]))
                out.append(_act(acc, "leaky", slope))
            seq = out
        for layer in ("bgru1", "bgru2"):
            w_f = {p: tensors[f"{layer}.fwd.{p}"] for p in ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh")}
            w_b = {p: tensors[f"{layer}.bwd.{p}"] for p in ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh")}
            fwd = _gru_direction(seq, w_f, reverse=False)
            bwd = _gru_direction(seq, w_b, reverse=True)
            seq = [fwd[t] + bwd[t] for t in range(len(seq))]
            final = fwd[-1] + bwd[0]
        state = final
    else:
        state = [v for row in seq for v in row]
        for i in range(1, cfg.ff_layers + 1):
            state = _act(_add(_mv(state, tensors[f"ff{i}.w"]), tensors[f"ff{i}.b"]), "leaky", slope)

    state = _act(_add(_mv(state, tensors["map1.w"]), tensors["map1.b"]), "leaky", slope)
    state = _act(_add(_mv(state, tensors["map2.w"]), tensors["map2.b"]), "leaky", slope)
    out = _add(_mv(state, tensors["dec.w"]), tensors["dec.b"])
    return np.array(out)


class MutableWeights:
    """Duck-typed WeightSet over mutable tensors, for cheap FD perturbation."""

    def __init__(self, config, tensors):
        self.config = config
        self.tensors = {k: np.array(v, dtype=np.float64) for k, v in tensors.items()}

    def __getitem__(self, name):
        return self.tensors[name]

    def gru_weights(self, prefix):
        from plcnet.layers import GruWeights

        parts = ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh")
        return GruWeights(**{p: self.tensors[f"{prefix}.{p}"] for p in parts})
