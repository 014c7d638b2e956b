"""Real-time time-domain packet loss concealment.

A seq2one recurrent model predicts lost 10 ms frames from a short context
buffer of past output frames; hann windowing and overlap-add stitch the
predictions into the stream with one look-ahead frame of latency.
"""

from .dsp import FRAME_LEN, SAMPLE_RATE, WINDOW_LEN, StftConfig, make_hann, overlap_add, stft
from .errors import (
    FormatError,
    InvalidArgumentError,
    InvalidStateError,
    NumericFailureError,
    PlcError,
    TrainingDivergedError,
    UnsupportedFormatError,
)
from .losses import LossConfig, compute_loss, loss_gradient, mae_comb, mae_mag, mae_time
from .model import MacReport, ModelConfig, WeightSet, count_macs, init_weights, model_backward, model_forward
from .pipeline import Pipeline, PipelineConfig, conceal_signal, pipeline_new
from .traces import BurstStats, PacketTrace, apply_trace, burst_stats, read_trace, reverse_trace, trace_to_frame_mask
from .training import AdamState, TrainConfig, TrainResult, clip_gradients, train
from .wavio import read_wav, write_wav
from .weights_io import load_weights, save_weights

__version__ = "0.1.0"
