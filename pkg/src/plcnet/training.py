"""Training: whole-utterance loss through the streaming pipeline, Adam with
gradient clipping, and a plateau learning-rate schedule.

The forward pass replays the streaming pipeline over the degraded crop
(including write-back of concealed frames into the context ring). At each
model invocation the oldest `clean_context_frames` context rows are read
from the clean crop, the rest from the ring. Gradients flow from the
whole-utterance loss into every model invocation through the window/OLA
algebra; gradients *through* ring write-backs into earlier invocations are
truncated at `bptt_depth` (0 detaches the ring entirely).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .augment import AugmentedExample, augment_utterance
from .dsp import FRAME_LEN, WINDOW_LEN, make_hann
from .errors import InvalidArgumentError, TrainingDivergedError
from .layers import GruWeights
from .losses import LossConfig, compute_loss, loss_gradient
from .model import ModelConfig, WeightSet, _GATE_PARTS, init_weights, model_backward, model_forward, zero_gradients
from .traces import PacketTrace, apply_trace, trace_to_frame_mask


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    learning_rate: float = 5e-4
    plateau_factor: float = 0.8
    plateau_patience: int = 3
    grad_clip_norm: float = 3.0
    crop_seconds: float = 8.0
    trace_reverse_prob: float = 0.5
    level_mean_db: float = -26.0
    level_std_db: float = 10.0
    clean_context_frames: int = 2
    degraded_context_frames: int = 4
    bptt_depth: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidArgumentError("epochs must be >= 0 and batch_size >= 1")
        if self.clean_context_frames < 0 or self.degraded_context_frames < 1:
            raise InvalidArgumentError("need >= 0 clean and >= 1 degraded context frames")
        if self.bptt_depth < 0:
            raise InvalidArgumentError("bptt_depth must be >= 0")

    @property
    def buffer_len(self) -> int:
        return self.clean_context_frames + self.degraded_context_frames

    def for_buffer_len(self, buffer_len: int) -> "TrainConfig":
        """Rescale the clean/degraded split to a different buffer length."""
        clean_k = min(self.clean_context_frames, buffer_len - 1)
        return replace(self, clean_context_frames=clean_k,
                       degraded_context_frames=buffer_len - clean_k)


@dataclass
class AdamState:
    """First/second moment accumulators mirroring the parameter tensors."""

    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_config(cls, config: ModelConfig) -> "AdamState":
        return cls(m=zero_gradients(config), v=zero_gradients(config))

    def update(self, tensors: dict, grads: dict, lr: float):
        self.step += 1
        bc1 = 1.0 - self.beta1**self.step
        bc2 = 1.0 - self.beta2**self.step
        for name, g in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            tensors[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def global_grad_norm(grads: dict) -> float:
    return float(math.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_gradients(grads: dict, max_norm: float) -> float:
    """Scale gradients in place so their global norm is at most max_norm.

    Returns the pre-clip norm.
    """
    norm = global_grad_norm(grads)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


class _LiveWeights:
    """Read-only duck type of WeightSet over the optimizer's mutable tensors."""

    __slots__ = ("config", "tensors")

    def __init__(self, config: ModelConfig, tensors: dict):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name):
        return self.tensors[name]

    def gru_weights(self, prefix: str) -> GruWeights:
        return GruWeights(**{p: self.tensors[f"{prefix}.{p}"] for p in _GATE_PARTS})


@dataclass
class _Invocation:
    position: int
    context: np.ndarray
    # per context row: ("clean"|"silence"|"ring", source frame position)
    sources: list


class _UtteranceRun:
    """One pipeline replay over a degraded crop, with enough bookkeeping to
    backpropagate the whole-utterance loss into every model invocation."""

    def __init__(self, weights, clean, degraded, frame_mask, clean_context_frames):
        self.weights = weights
        self.clean = clean
        self.window = make_hann(WINDOW_LEN)
        n = weights.config.buffer_len
        n_frames = degraded.size // FRAME_LEN
        frames = degraded[: n_frames * FRAME_LEN].reshape(n_frames, FRAME_LEN)
        clean_frames = clean[: n_frames * FRAME_LEN].reshape(n_frames, FRAME_LEN)

        self.n_frames = n_frames
        self.invocations: list[_Invocation] = []
        # candidate kind per output position p in [-1, n_frames): "pass" or index into invocations
        self.candidate_kind: dict = {}

        zero = np.zeros(FRAME_LEN)
        ring: list = [("silence", None, zero)] * n  # (kind, position, output frame)
        prev = np.zeros(WINDOW_LEN)
        outputs = []
        for p in range(-1, n_frames):
            cur = frames[p] if p >= 0 else zero
            nxt = frames[p + 1] if p + 1 < n_frames else zero
            lost = (p >= 0 and frame_mask[p]) or (p + 1 < n_frames and frame_mask[p + 1])
            if lost:
                context = np.stack([entry[2] for entry in ring])
                sources = []
                for row, (kind, pos, _frame) in enumerate(ring):
                    if row < clean_context_frames:
                        q = p - n + row
                        if 0 <= q < n_frames:
                            context[row] = clean_frames[q]
                            sources.append(("clean", q))
                        else:
                            context[row] = 0.0
                            sources.append(("silence", None))
                    else:
                        sources.append((kind, pos))
                self.candidate_kind[p] = len(self.invocations)
                self.invocations.append(_Invocation(position=p, context=context, sources=sources))
                cand = self.window * model_forward(context, weights)
            else:
                self.candidate_kind[p] = "pass"
                cand = self.window * np.concatenate([cur, nxt])
            out = prev[FRAME_LEN:] + cand[:FRAME_LEN]
            prev = cand
            ring.pop(0)
            ring.append(("ring", p, out))
            if p >= 0:
                outputs.append(out)
        self.enhanced = np.concatenate(outputs) if outputs else np.zeros(0)

    def loss(self, loss_config: LossConfig) -> float:
        return compute_loss(loss_config, self.enhanced, self.clean[: self.enhanced.size])

    def gradients(self, loss_config: LossConfig, bptt_depth: int):
        """(loss value, parameter gradients) for this utterance."""
        clean = self.clean[: self.enhanced.size]
        loss = compute_loss(loss_config, self.enhanced, clean)
        g_enh = loss_gradient(loss_config, self.enhanced, clean)
        grads = zero_gradients(self.weights.config)

        def g_candidate_from_loss(p: int) -> np.ndarray:
            g = np.zeros(WINDOW_LEN)
            if p >= 0:
                g[:FRAME_LEN] += g_enh[p * FRAME_LEN : (p + 1) * FRAME_LEN]
            if p + 1 < self.n_frames:
                g[FRAME_LEN:] += g_enh[(p + 1) * FRAME_LEN : (p + 2) * FRAME_LEN]
            return g

        def backprop(inv: _Invocation, g_model_out: np.ndarray, depth: int):
            pgrads, g_ctx = model_backward(inv.context, self.weights, g_model_out)
            for name, g in pgrads.items():
                grads[name] += g
            if depth <= 0:
                return
            for row, (kind, q) in enumerate(inv.sources):
                if kind != "ring" or q is None:
                    continue
                g_frame = g_ctx[row]
                # output frame q = cand_q[:160] + cand_{q-1}[160:]
                for producer, half in ((q, slice(0, FRAME_LEN)), (q - 1, slice(FRAME_LEN, WINDOW_LEN))):
                    if producer < -1:
                        continue
                    ck = self.candidate_kind.get(producer)
                    if ck is None or ck == "pass":
                        continue
                    g_cand = np.zeros(WINDOW_LEN)
                    g_cand[half] = g_frame
                    backprop(self.invocations[ck], self.window * g_cand, depth - 1)

        for inv in reversed(self.invocations):
            backprop(inv, self.window * g_candidate_from_loss(inv.position), bptt_depth)
        return loss, grads


def utterance_loss_and_grads(weights, example: AugmentedExample, loss_config: LossConfig,
                             clean_context_frames: int, bptt_depth: int = 0):
    run = _UtteranceRun(weights, example.clean, example.degraded, example.frame_mask,
                        clean_context_frames)
    return run.gradients(loss_config, bptt_depth)


def utterance_forward(weights, example: AugmentedExample, clean_context_frames: int) -> np.ndarray:
    """Enhanced utterance as the training loop sees it (no gradients)."""
    return _UtteranceRun(weights, example.clean, example.degraded, example.frame_mask,
                         clean_context_frames).enhanced


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    learning_rate: float

    def to_json(self) -> str:
        return json.dumps({
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "learning_rate": self.learning_rate,
        })


@dataclass
class TrainResult:
    weights: WeightSet
    history: list
    final_lr: float


def _validation_example(clean: np.ndarray, trace: PacketTrace) -> AugmentedExample:
    """Deterministic processing for held-out scoring: full length (trimmed to
    whole frames), unit gain, trace applied as-is."""
    n_frames = clean.size // FRAME_LEN
    x = np.asarray(clean[: n_frames * FRAME_LEN], dtype=np.float64)
    mask = trace_to_frame_mask(trace, n_frames)
    return AugmentedExample(
        clean=x, degraded=apply_trace(x, trace), frame_mask=mask,
        target_level_db=float("nan"), gain=1.0, trace_reversed=False, padded=False,
    )


def train(train_items, val_items, model_config: ModelConfig, train_config: TrainConfig,
          loss_config: LossConfig, initial_weights: WeightSet | None = None,
          history_path=None, log=None) -> TrainResult:
    """Mini-batch Adam over (clean signal, trace) pairs.

    File and trace orders are independently reshuffled every epoch, so the
    pairing varies. The learning rate decays by plateau_factor whenever the
    validation loss fails to improve for plateau_patience consecutive
    epochs. Raises TrainingDivergedError (carrying the last finite-loss
    checkpoint) if the loss leaves the reals.
    """
    if not train_items or not val_items:
        raise InvalidArgumentError("train and validation sets must be non-empty")
    if train_config.buffer_len != model_config.buffer_len:
        raise InvalidArgumentError(
            f"clean+degraded context frames ({train_config.buffer_len}) "
            f"must equal the model buffer_len ({model_config.buffer_len})"
        )

    if initial_weights is not None and initial_weights.config != model_config:
        raise InvalidArgumentError("initial weights were built for a different model config")

    rng = np.random.default_rng(train_config.seed)
    ws = initial_weights if initial_weights is not None else init_weights(model_config, train_config.seed)
    tensors = ws.copy_tensors()
    live = _LiveWeights(model_config, tensors)
    adam = AdamState.for_config(model_config)
    lr = train_config.learning_rate
    history: list[EpochRecord] = []
    last_good = ws
    val_examples = [_validation_example(np.asarray(c, dtype=np.float64), t) for c, t in val_items]

    history_fh = open(history_path, "w", encoding="utf-8") if history_path else None
    try:
        best_val = math.inf
        stale_epochs = 0
        n_items = len(train_items)
        for epoch in range(1, train_config.epochs + 1):
            file_order = rng.permutation(n_items)
            trace_order = rng.permutation(n_items)
            epoch_losses = []
            for start in range(0, n_items, train_config.batch_size):
                batch = range(start, min(start + train_config.batch_size, n_items))
                batch_grads = zero_gradients(model_config)
                batch_loss = 0.0
                for i in batch:
                    clean = np.asarray(train_items[file_order[i]][0], dtype=np.float64)
                    trace = train_items[trace_order[i]][1]
                    example = augment_utterance(clean, trace, train_config, rng)
                    loss, grads = utterance_loss_and_grads(
                        live, example, loss_config,
                        train_config.clean_context_frames, train_config.bptt_depth,
                    )
                    batch_loss += loss
                    for name, g in grads.items():
                        batch_grads[name] += g
                scale = 1.0 / len(batch)
                batch_loss *= scale
                if not math.isfinite(batch_loss):
                    raise TrainingDivergedError(
                        f"training loss became non-finite in epoch {epoch}",
                        weights=last_good, history=history,
                    )
                for g in batch_grads.values():
                    g *= scale
                clip_gradients(batch_grads, train_config.grad_clip_norm)
                adam.update(tensors, batch_grads, lr)
                epoch_losses.append(batch_loss)

            val_losses = [
                _UtteranceRun(live, ex.clean, ex.degraded, ex.frame_mask,
                              train_config.clean_context_frames).loss(loss_config)
                for ex in val_examples
            ]
            val_loss = float(np.mean(val_losses))
            if not math.isfinite(val_loss):
                raise TrainingDivergedError(
                    f"validation loss became non-finite in epoch {epoch}",
                    weights=last_good, history=history,
                )
            record = EpochRecord(epoch=epoch, train_loss=float(np.mean(epoch_losses)),
                                 val_loss=val_loss, learning_rate=lr)
            history.append(record)
            if history_fh:
                history_fh.write(record.to_json() + "\n")
                history_fh.flush()
            if log:
                log(f"epoch {epoch}: train {record.train_loss:.6f} "
                    f"val {record.val_loss:.6f} lr {lr:.2e}")

            if val_loss < best_val:
                best_val = val_loss
                stale_epochs = 0
            else:
                stale_epochs += 1
                if stale_epochs >= train_config.plateau_patience:
                    lr *= train_config.plateau_factor
                    stale_epochs = 0
            last_good = WeightSet(config=model_config, tensors={k: v.copy() for k, v in tensors.items()})
    finally:
        if history_fh:
            history_fh.close()

    final = WeightSet(config=model_config, tensors=tensors)
    return TrainResult(weights=final, history=history, final_lr=lr)
