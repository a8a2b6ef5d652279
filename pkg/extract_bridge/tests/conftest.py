"""Shared fixtures: a tiny random-init encoder checkpoint and WAV writers.

The checkpoint is small enough to build in a second and exercises the real
loading, config introspection and forward-pass paths without any network
access or large downloads.
"""

from __future__ import annotations

import json
import struct
import wave
from pathlib import Path

import numpy as np
import pytest

SAMPLE_RATE = 16000
# conv stride 5*2*2 = 20 samples per output frame -> 800 Hz at 16 kHz
SAMPLES_PER_FRAME = 20
CONV_KERNEL = (10, 3, 3)
CONV_STRIDE = (5, 2, 2)
NUM_LAYERS = 2
HIDDEN_SIZE = 32


def conv_output_length(n_samples: int) -> int:
    """Frame count the conv frontend yields for a given sample count."""
    length = n_samples
    for k, s in zip(CONV_KERNEL, CONV_STRIDE):
        length = (length - k) // s + 1
    return length


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory) -> Path:
    import torch
    from transformers import Wav2Vec2Config, Wav2Vec2Model

    torch.manual_seed(0)
    config = Wav2Vec2Config(
        hidden_size=HIDDEN_SIZE,
        num_hidden_layers=NUM_LAYERS,
        num_attention_heads=2,
        intermediate_size=64,
        conv_dim=(16, 16, 16),
        conv_kernel=CONV_KERNEL,
        conv_stride=CONV_STRIDE,
        num_feat_extract_layers=3,
    )
    model = Wav2Vec2Model(config)
    out = tmp_path_factory.mktemp("ckpt") / "tiny-encoder"
    model.save_pretrained(out)
    (out / "preprocessor_config.json").write_text(
        json.dumps({"sampling_rate": SAMPLE_RATE}), encoding="utf-8"
    )
    return out


def write_wav(
    path: Path,
    samples: np.ndarray,
    sample_rate: int = SAMPLE_RATE,
    channels: int = 1,
    sampwidth: int = 2,
) -> Path:
    if sampwidth == 2:
        data = (np.clip(samples, -1.0, 1.0 - 1.0 / 32768) * 32768).astype("<i2")
    elif sampwidth == 4:
        data = (np.clip(samples, -1.0, 1.0 - 1.0 / 2147483648) * 2147483648).astype("<i4")
    else:
        # raw bytes of the right width, content irrelevant for these tests
        data = np.zeros(samples.size * sampwidth, dtype=np.uint8)
    if channels > 1:
        data = np.repeat(data, channels)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(sampwidth)
        w.setframerate(sample_rate)
        w.writeframes(data.tobytes())
    return path


def tone(duration_s: float, freq_hz: float = 440.0, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    t = np.arange(int(duration_s * sample_rate)) / sample_rate
    return (0.5 * np.sin(2 * np.pi * freq_hz * t)).astype(np.float32)


@pytest.fixture()
def wav_dir(tmp_path) -> Path:
    d = tmp_path / "wavs"
    d.mkdir()
    return d


@pytest.fixture()
def garbage_wav(wav_dir) -> Path:
    p = wav_dir / "garbage.wav"
    p.write_bytes(b"RIFF" + struct.pack("<I", 12) + b"not really audio")
    return p
