"""Objective evaluation: signal metrics, per-subset corpus scoring, the
context-buffer-length sweep, and per-frame inference benchmarking.
"""

from __future__ import annotations

import json
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import FRAME_LEN, StftConfig, stft
from .errors import InvalidArgumentError
from .model import ModelConfig, init_weights, model_forward
from .pipeline import PipelineConfig, conceal_signal
from .traces import apply_trace, burst_stats, read_trace, trace_to_frame_mask
from .wavio import read_wav

SNR_CAP_DB = 99.0
LSD_EPS = 1e-8

SUBSETS = ("low", "med", "high")
METRICS = ("concealed_snr", "lsd", "overall_snr")


def _ratio_db(signal_energy: float, error_energy: float) -> float:
    if error_energy == 0.0:
        return SNR_CAP_DB
    if signal_energy == 0.0:
        return -SNR_CAP_DB
    return float(10.0 * np.log10(signal_energy / error_energy))


def snr_db(clean, enhanced) -> float:
    c = np.asarray(clean, dtype=np.float64)
    e = np.asarray(enhanced, dtype=np.float64)
    if c.shape != e.shape:
        raise InvalidArgumentError(f"signal shapes differ: {c.shape} vs {e.shape}")
    return _ratio_db(float(np.sum(c * c)), float(np.sum((c - e) ** 2)))


def concealed_snr(clean, enhanced, frame_mask) -> float | None:
    """SNR restricted to samples inside lost frames; None when nothing was lost.

    Zero error caps at +99 dB so aggregates stay finite.
    """
    c = np.asarray(clean, dtype=np.float64)
    e = np.asarray(enhanced, dtype=np.float64)
    mask = np.asarray(frame_mask, dtype=bool)
    if c.shape != e.shape:
        raise InvalidArgumentError(f"signal shapes differ: {c.shape} vs {e.shape}")
    sample_mask = np.zeros(c.size, dtype=bool)
    for k in np.flatnonzero(mask):
        sample_mask[k * FRAME_LEN : (k + 1) * FRAME_LEN] = True
    if not sample_mask.any():
        return None
    cs = c[sample_mask]
    es = e[sample_mask]
    return _ratio_db(float(np.sum(cs * cs)), float(np.sum((cs - es) ** 2)))


def log_spectral_distance(clean, enhanced, stft_config: StftConfig = StftConfig()) -> float:
    """Mean over frames of the RMS over bins of 20*(log10|X|+eps - log10|X_hat|+eps)."""
    c = np.asarray(clean, dtype=np.float64)
    e = np.asarray(enhanced, dtype=np.float64)
    if c.shape != e.shape:
        raise InvalidArgumentError(f"signal shapes differ: {c.shape} vs {e.shape}")
    mag_c = np.abs(stft(c, stft_config))
    mag_e = np.abs(stft(e, stft_config))
    diff = 20.0 * (np.log10(mag_c + LSD_EPS) - np.log10(mag_e + LSD_EPS))
    return float(np.mean(np.sqrt(np.mean(diff**2, axis=1))))


@dataclass
class UtteranceScore:
    name: str
    subset: str | None = None
    concealed_snr: float | None = None
    lsd: float | None = None
    overall_snr: float | None = None
    error: str | None = None


@dataclass
class EvalReport:
    scores: list
    aggregates: dict            # subset -> metric -> mean
    baseline_aggregates: dict
    deltas: dict                # aggregates - baseline, same layout
    counts: dict                # subset -> utterance count
    errors: list = field(default_factory=list)


def _aggregate(scores) -> tuple[dict, dict]:
    groups: dict = {s: [] for s in SUBSETS}
    for sc in scores:
        if sc.error is None and sc.subset in groups:
            groups[sc.subset].append(sc)
    counts = {s: len(g) for s, g in groups.items()}
    counts["overall"] = sum(counts.values())
    agg: dict = {}
    for subset in (*SUBSETS, "overall"):
        pool = groups.get(subset) if subset in groups else [sc for g in groups.values() for sc in g]
        agg[subset] = {}
        for metric in METRICS:
            values = [getattr(sc, metric) for sc in pool if getattr(sc, metric) is not None]
            agg[subset][metric] = float(np.mean(values)) if values else None
    return agg, counts


def _score_one(name, clean, mask, subset, config: PipelineConfig, stft_config: StftConfig,
               degraded: np.ndarray) -> UtteranceScore:
    enhanced = conceal_signal(degraded, mask, config)
    return UtteranceScore(
        name=name,
        subset=subset,
        concealed_snr=concealed_snr(clean, enhanced, mask),
        lsd=log_spectral_distance(clean, enhanced, stft_config),
        overall_snr=snr_db(clean, enhanced),
    )


def evaluate_corpus(clean_dir, trace_dir, config: PipelineConfig,
                    stft_config: StftConfig = StftConfig(), jobs: int = 1) -> EvalReport:
    """Degrade, conceal, and score every utterance of a paired corpus.

    `name.wav` in clean_dir pairs with `name.txt` in trace_dir. A missing or
    unreadable pair is recorded as a per-utterance error; the run continues.
    The zero-fill baseline is scored alongside for delta columns.
    """
    clean_dir = Path(clean_dir)
    trace_dir = Path(trace_dir) if trace_dir is not None else clean_dir
    wavs = sorted(clean_dir.glob("*.wav"))
    if not wavs:
        raise InvalidArgumentError(f"no .wav files found in {clean_dir}")

    baseline_cfg = PipelineConfig.zero_fill(buffer_len=config.buffer_len)

    def run_one(wav_path):
        name = wav_path.stem
        trace_path = trace_dir / f"{name}.txt"
        try:
            clean = read_wav(wav_path)
            trace = read_trace(trace_path)
        except Exception as exc:
            err = UtteranceScore(name=name, error=str(exc))
            return err, err
        n_frames = clean.size // FRAME_LEN
        clean = clean[: n_frames * FRAME_LEN]
        mask = trace_to_frame_mask(trace, n_frames)
        subset = burst_stats(trace).subset
        degraded = apply_trace(clean, trace)
        score = _score_one(name, clean, mask, subset, config, stft_config, degraded)
        base = _score_one(name, clean, mask, subset, baseline_cfg, stft_config, degraded)
        return score, base

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_one, wavs))
    else:
        results = [run_one(w) for w in wavs]

    scores = [r[0] for r in results]
    base_scores = [r[1] for r in results]
    agg, counts = _aggregate(scores)
    base_agg, _ = _aggregate(base_scores)
    deltas: dict = {}
    for subset, metrics in agg.items():
        deltas[subset] = {}
        for metric, value in metrics.items():
            base = base_agg[subset][metric]
            deltas[subset][metric] = None if value is None or base is None else value - base
    errors = [sc for sc in scores if sc.error is not None]
    return EvalReport(scores=scores, aggregates=agg, baseline_aggregates=base_agg,
                      deltas=deltas, counts=counts, errors=errors)


def render_report(report: EvalReport) -> str:
    def fmt(v):
        return "   --  " if v is None else f"{v:7.2f}"

    lines = [
        "subset   n  | conc.SNR    lsd  ovr.SNR | d(conc.SNR)  d(lsd)  d(ovr.SNR)",
        "-" * 74,
    ]
    for subset in (*SUBSETS, "overall"):
        a = report.aggregates[subset]
        d = report.deltas[subset]
        lines.append(
            f"{subset:7s}{report.counts[subset]:4d} |"
            f" {fmt(a['concealed_snr'])} {fmt(a['lsd'])} {fmt(a['overall_snr'])} |"
            f"   {fmt(d['concealed_snr'])} {fmt(d['lsd'])}   {fmt(d['overall_snr'])}"
        )
    for sc in report.errors:
        lines.append(f"error: {sc.name}: {sc.error}")
    return "\n".join(lines)


def write_records(report: EvalReport, path):
    """Machine-readable line-delimited records (metric name, subset, value)."""
    with open(path, "w", encoding="utf-8") as fh:
        for subset, metrics in report.aggregates.items():
            for metric, value in metrics.items():
                fh.write(json.dumps({"metric": metric, "subset": subset, "value": value}) + "\n")
                delta = report.deltas[subset][metric]
                fh.write(json.dumps({"metric": f"delta_{metric}", "subset": subset, "value": delta}) + "\n")
        for subset, count in report.counts.items():
            fh.write(json.dumps({"metric": "count", "subset": subset, "value": count}) + "\n")


@dataclass
class BenchReport:
    size_class: str
    buffer_len: int
    iterations: int
    mean_ms: float
    median_ms: float
    p95_ms: float
    realtime_factor: float     # mean time / 10 ms frame budget


def bench_input(config: ModelConfig) -> np.ndarray:
    """Deterministic benchmark input derived from the config identity."""
    key = f"{config.kind}:{config.name}:{config.buffer_len}".encode()
    rng = np.random.default_rng(zlib.crc32(key))
    return rng.uniform(-1.0, 1.0, size=(config.buffer_len, FRAME_LEN))


def bench_inference(config: ModelConfig, iterations: int = 200, warmup: int = 20) -> BenchReport:
    """Wall-clock statistics of repeated single-frame predictions."""
    if iterations < 100:
        raise InvalidArgumentError("need at least 100 timed iterations")
    ws = init_weights(config, seed=zlib.crc32(config.name.encode()))
    buf = bench_input(config)
    for _ in range(warmup):
        model_forward(buf, ws)
    samples = np.empty(iterations)
    for i in range(iterations):
        t0 = time.perf_counter()
        model_forward(buf, ws)
        samples[i] = time.perf_counter() - t0
    ms = samples * 1e3
    mean_ms = float(ms.mean())
    return BenchReport(
        size_class=config.name,
        buffer_len=config.buffer_len,
        iterations=iterations,
        mean_ms=mean_ms,
        median_ms=float(np.median(ms)),
        p95_ms=float(np.percentile(ms, 95)),
        realtime_factor=mean_ms / 10.0,
    )


def buffer_length_sweep(lengths, train_items, val_items, model_config: ModelConfig,
                        train_config, loss_config, log=None) -> list:
    """Train and score one model per context-buffer length, fixed seed.

    Returns one row per length with the final validation loss and the
    val-set concealment metrics (plus the zero-fill deltas).
    """
    from .training import train  # local import to keep module import cheap

    if any(n < 2 for n in lengths):
        raise InvalidArgumentError("buffer lengths must be >= 2")
    rows = []
    for n in lengths:
        cfg_n = model_config.with_buffer_len(int(n))
        tc_n = train_config.for_buffer_len(int(n))
        result = train(train_items, val_items, cfg_n, tc_n, loss_config, log=log)
        pipe_cfg = PipelineConfig.neural(result.weights)
        snrs, base_snrs, lsds = [], [], []
        for clean, trace in val_items:
            clean = np.asarray(clean, dtype=np.float64)
            n_frames = clean.size // FRAME_LEN
            clean = clean[: n_frames * FRAME_LEN]
            mask = trace_to_frame_mask(trace, n_frames)
            degraded = apply_trace(clean, trace)
            enhanced = conceal_signal(degraded, mask, pipe_cfg)
            baseline = conceal_signal(degraded, mask, PipelineConfig.zero_fill(buffer_len=int(n)))
            s = concealed_snr(clean, enhanced, mask)
            b = concealed_snr(clean, baseline, mask)
            if s is not None:
                snrs.append(s)
            if b is not None:
                base_snrs.append(b)
            lsds.append(log_spectral_distance(clean, enhanced, loss_config.stft))
        row = {
            "buffer_len": int(n),
            "val_loss": result.history[-1].val_loss if result.history else None,
            "concealed_snr": float(np.mean(snrs)) if snrs else None,
            "baseline_concealed_snr": float(np.mean(base_snrs)) if base_snrs else None,
            "lsd": float(np.mean(lsds)) if lsds else None,
        }
        rows.append(row)
        if log:
            log(f"buffer_len {n}: {row}")
    return rows
