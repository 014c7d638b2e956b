import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from plcnet.model import ModelConfig, init_weights

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def toy_rnn_config(buffer_len=4):
    return ModelConfig.custom(
        kind="rnn", buffer_len=buffer_len, fc_encoding=8, fc_embedding=4,
        conv4_filters=4, conv2_filters=4, bgru1_units=4, bgru2_units=4,
        fc_map1=8, fc_map2=8,
    )


def toy_ff_config(buffer_len=4):
    return ModelConfig.custom(
        kind="ff", buffer_len=buffer_len, fc_encoding=8, fc_embedding=4,
        ff_units=8, fc_map1=8, fc_map2=8,
    )


@pytest.fixture
def toy_config():
    return toy_rnn_config()


@pytest.fixture
def toy_weights(toy_config):
    return init_weights(toy_config, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def speechlike(n_samples: int, seed: int = 0, peak: float = 0.5) -> np.ndarray:
    """Deterministic voiced-speech-like test signal (harmonics + vibrato + envelope)."""
    t = np.arange(n_samples) / 16000.0
    phase = np.cumsum(np.full(n_samples, 2 * np.pi * (170 + 10 * seed) / 16000.0))
    vib = np.sin(2 * np.pi * 5.0 * t + seed)
    env = 0.55 + 0.4 * np.sin(2 * np.pi * 2.3 * t + 0.7 * seed)
    x = env * (np.sin(phase + 1.5 * vib) + 0.5 * np.sin(2 * phase + 3.0 * vib)
               + 0.25 * np.sin(3 * phase))
    return peak * x / np.abs(x).max()
