"""WAV loading via the stdlib wave module.

Only uncompressed PCM is supported, which covers the corpora this tool is
pointed at. Anything the encoder cannot consume raises AudioError so the
caller can skip the file and keep going.
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .errors import AudioError

# sample width in bytes -> (numpy dtype, full-scale divisor)
_PCM_FORMATS = {
    2: ("<i2", 32768.0),
    4: ("<i4", 2147483648.0),
}


def load_wav(path: str | Path, expected_sr: int) -> np.ndarray:
    """Read a mono PCM WAV file and return float32 samples in [-1, 1).

    Raises AudioError when the file is unreadable, not mono, uses an
    unsupported sample width, or its sample rate differs from the rate the
    encoder was trained at (resampling is out of scope here).
    """
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as w:
            n_channels = w.getnchannels()
            sampwidth = w.getsampwidth()
            framerate = w.getframerate()
            n_frames = w.getnframes()
            raw = w.readframes(n_frames)
    except (wave.Error, EOFError, OSError) as exc:
        raise AudioError(f"{path}: cannot decode: {exc}") from exc
    if n_channels != 1:
        raise AudioError(f"{path}: expected mono audio, got {n_channels} channels")
    if sampwidth not in _PCM_FORMATS:
        raise AudioError(f"{path}: unsupported sample width {sampwidth} bytes")
    if framerate != expected_sr:
        raise AudioError(
            f"{path}: sample rate {framerate} Hz, encoder expects {expected_sr} Hz"
        )
    dtype, scale = _PCM_FORMATS[sampwidth]
    samples = np.frombuffer(raw, dtype=dtype).astype(np.float32) / scale
    if samples.size == 0:
        raise AudioError(f"{path}: no audio samples")
    return samples
