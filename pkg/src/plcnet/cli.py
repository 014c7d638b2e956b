"""Command-line surface: simulate, conceal, train, eval, macs, bench, sweep.

Every run is fully determined by its flags plus the seed. An optional
`--config-file` (flat key=value lines) supplies extra training/eval knobs;
explicit flags always win.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from .errors import PlcError
from .losses import LossConfig
from .dsp import StftConfig
from .model import ModelConfig, count_macs
from .pipeline import PipelineConfig, conceal_signal
from .traces import apply_trace, read_trace, trace_to_frame_mask
from .training import TrainConfig, train
from .wavio import read_wav, write_wav
from . import evaluate, weights_io


def _read_config_file(path) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PlcError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def _train_config_from(args, extra: dict) -> TrainConfig:
    cfg = TrainConfig()
    overrides = {}
    valid = {f.name: f.type for f in fields(TrainConfig)}
    for key, value in extra.items():
        if key not in valid:
            continue
        current = getattr(cfg, key)
        overrides[key] = type(current)(float(value)) if isinstance(current, (int, float)) else value
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.seed is not None:
        overrides["seed"] = args.seed
    return replace(cfg, **overrides)


def _load_corpus(clean_dir, trace_dir):
    clean_dir = Path(clean_dir)
    trace_dir = Path(trace_dir) if trace_dir else clean_dir
    items = []
    for wav_path in sorted(clean_dir.glob("*.wav")):
        trace_path = trace_dir / f"{wav_path.stem}.txt"
        if not trace_path.exists():
            raise PlcError(f"no trace file for {wav_path.name} (expected {trace_path})")
        items.append((read_wav(wav_path), read_trace(trace_path)))
    if not items:
        raise PlcError(f"no .wav files found in {clean_dir}")
    return items


def _split_corpus(items, val_fraction: float):
    n_val = max(1, int(round(len(items) * val_fraction))) if len(items) > 1 else 1
    val = items[-n_val:]
    tr = items[:-n_val] if len(items) > n_val else items
    return tr, val


def cmd_simulate(args):
    signal = read_wav(args.infile)
    trace = read_trace(args.trace)
    write_wav(args.out, apply_trace(signal, trace))
    print(f"wrote degraded audio to {args.out}")
    return 0


def _pipeline_config(args) -> PipelineConfig:
    if args.zero_fill:
        return PipelineConfig.zero_fill(buffer_len=args.buffer)
    if not args.weights:
        raise PlcError("need --weights FILE or --zero-fill")
    return PipelineConfig.neural(weights_io.load_weights(args.weights))


def cmd_conceal(args):
    signal = read_wav(args.infile)
    trace = read_trace(args.trace)
    config = _pipeline_config(args)
    n_frames = -(-signal.size // 160)
    mask = trace_to_frame_mask(trace, n_frames)
    write_wav(args.out, conceal_signal(signal, mask, config))
    print(f"wrote concealed audio to {args.out}")
    return 0


def cmd_train(args):
    extra = _read_config_file(args.config_file) if args.config_file else {}
    tc = _train_config_from(args, extra)
    buffer_len = int(extra.get("buffer_len", tc.buffer_len))
    if buffer_len != tc.buffer_len:
        tc = tc.for_buffer_len(buffer_len)
    mc = ModelConfig.by_name(args.config, buffer_len=tc.buffer_len)
    lc = LossConfig(kind=args.loss, alpha=args.alpha, stft=StftConfig(window_ms=args.stft_ms))
    items = _load_corpus(args.clean_dir, args.trace_dir)
    train_items, val_items = _split_corpus(items, float(extra.get("val_fraction", 0.2)))
    history_path = args.history or f"{args.out}.history.jsonl"
    result = train(train_items, val_items, mc, tc, lc,
                   history_path=history_path, log=lambda msg: print(msg, flush=True))
    weights_io.save_weights(result.weights, args.out)
    print(f"wrote weights to {args.out} and history to {history_path}")
    return 0


def cmd_eval(args):
    config = _pipeline_config(args)
    report = evaluate.evaluate_corpus(args.clean_dir, args.trace_dir, config,
                                      stft_config=StftConfig(window_ms=args.stft_ms),
                                      jobs=args.jobs)
    print(evaluate.render_report(report))
    if args.records:
        evaluate.write_records(report, args.records)
        print(f"wrote records to {args.records}")
    return 0


def cmd_macs(args):
    report = count_macs(ModelConfig.by_name(args.config, buffer_len=args.buffer))
    for layer, macs in report.layers.items():
        print(f"{layer:14s} {macs:12,d}")
    print(f"{'total':14s} {report.total:12,d}  ({report.total / 1e6:.2f} M)")
    return 0


def cmd_bench(args):
    config = ModelConfig.by_name(args.config, buffer_len=args.buffer)
    report = evaluate.bench_inference(config, iterations=args.iterations)
    print(f"config {report.size_class} buffer {report.buffer_len}: "
          f"mean {report.mean_ms:.3f} ms, median {report.median_ms:.3f} ms, "
          f"p95 {report.p95_ms:.3f} ms over {report.iterations} iters; "
          f"realtime factor {report.realtime_factor:.3f} (budget 10 ms)")
    return 0


def cmd_sweep(args):
    extra = _read_config_file(args.config_file) if args.config_file else {}
    tc = _train_config_from(args, extra)
    mc = ModelConfig.by_name(args.config)
    lc = LossConfig(kind=args.loss, alpha=args.alpha, stft=StftConfig(window_ms=args.stft_ms))
    items = _load_corpus(args.clean_dir, args.trace_dir)
    train_items, val_items = _split_corpus(items, float(extra.get("val_fraction", 0.2)))
    lengths = [int(part) for part in args.lengths.split(",") if part.strip()]
    rows = evaluate.buffer_length_sweep(lengths, train_items, val_items, mc, tc, lc)
    header = f"{'buffer':>6s} {'val_loss':>10s} {'conc.SNR':>9s} {'zfill.SNR':>9s} {'lsd':>8s}"
    print(header)
    out_lines = []
    for row in rows:
        def fmt(v, spec):
            return "--".rjust(len(spec % 0)) if v is None else spec % v
        line = (f"{row['buffer_len']:6d} {fmt(row['val_loss'], '%10.6f')} "
                f"{fmt(row['concealed_snr'], '%9.2f')} {fmt(row['baseline_concealed_snr'], '%9.2f')} "
                f"{fmt(row['lsd'], '%8.2f')}")
        print(line)
        out_lines.append(row)
    if args.out:
        import json

        with open(args.out, "w", encoding="utf-8") as fh:
            for row in out_lines:
                fh.write(json.dumps(row) + "\n")
        print(f"wrote sweep table to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plcnet",
                                     description="Time-domain packet loss concealment toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="zero-fill an utterance according to a trace")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("conceal", help="conceal lost frames of an utterance")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--weights")
    p.add_argument("--zero-fill", action="store_true")
    p.add_argument("--buffer", type=int, default=6, help="ring length for --zero-fill")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_conceal)

    p = sub.add_parser("train", help="train a model on a paired corpus")
    p.add_argument("--clean-dir", required=True)
    p.add_argument("--trace-dir")
    p.add_argument("--config", default="small", choices=["small", "medium", "large", "ff"])
    p.add_argument("--loss", default="comb", choices=["time", "mag", "comb"])
    p.add_argument("--stft-ms", type=int, default=32, choices=[20, 32, 64])
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--history", help="history records path (default: <out>.history.jsonl)")
    p.add_argument("--config-file", help="flat key=value file; flags override it")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a concealer over a paired corpus")
    p.add_argument("--clean-dir", required=True)
    p.add_argument("--trace-dir")
    p.add_argument("--weights")
    p.add_argument("--zero-fill", action="store_true")
    p.add_argument("--buffer", type=int, default=6)
    p.add_argument("--stft-ms", type=int, default=32, choices=[20, 32, 64])
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--records", help="write line-delimited metric records here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("macs", help="print the multiply-accumulate report for a config")
    p.add_argument("--config", default="small", choices=["small", "medium", "large", "ff"])
    p.add_argument("--buffer", type=int, default=6)
    p.set_defaults(func=cmd_macs)

    p = sub.add_parser("bench", help="benchmark single-frame inference")
    p.add_argument("--config", default="small", choices=["small", "medium", "large", "ff"])
    p.add_argument("--buffer", type=int, default=6)
    p.add_argument("--iterations", type=int, default=200)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="train/evaluate toy models over buffer lengths")
    p.add_argument("--clean-dir", required=True)
    p.add_argument("--trace-dir")
    p.add_argument("--lengths", default="4,5,6,7,10", help="comma-separated buffer lengths")
    p.add_argument("--config", default="small", choices=["small", "medium", "large", "ff"])
    p.add_argument("--loss", default="comb", choices=["time", "mag", "comb"])
    p.add_argument("--stft-ms", type=int, default=32, choices=[20, 32, 64])
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write the sweep table as line-delimited records")
    p.add_argument("--config-file")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PlcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
