"""Adapter around a pretrained speech encoder checkpoint.

The checkpoint is any transformers-loadable directory or hub id for a
convolutional-frontend transformer encoder (the wav2vec 2.0 family). The
adapter exposes just what extraction needs: the frame rate implied by the
conv stride, the layer count, and a per-utterance encode call.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError

_DEFAULT_SAMPLE_RATE = 16000


def _load_sample_rate(checkpoint: str) -> int:
    # preprocessor_config.json carries the training sample rate; absent for
    # some checkpoints, in which case the family-wide 16 kHz default applies.
    cfg = Path(checkpoint) / "preprocessor_config.json"
    if cfg.is_file():
        try:
            data = json.loads(cfg.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{cfg}: unreadable preprocessor config: {exc}") from exc
        rate = data.get("sampling_rate")
        if rate is not None:
            return int(rate)
    return _DEFAULT_SAMPLE_RATE


@dataclass
class TransformersEncoder:
    """Loads a checkpoint once and encodes waveforms to frame features."""

    checkpoint: str
    model: object = field(init=False, repr=False)
    num_layers: int = field(init=False)
    sample_rate: int = field(init=False)
    samples_per_frame: int = field(init=False)
    frame_rate_hz: float = field(init=False)

    def __post_init__(self) -> None:
        try:
            from transformers import AutoModel
        except ImportError as exc:  # pragma: no cover - transformers is a hard dep
            raise CheckpointError(f"transformers not installed: {exc}") from exc
        try:
            # eager attention: sdpa kernels return attentions=None, which
            # would break --attention; numerics are the same either way
            try:
                model = AutoModel.from_pretrained(self.checkpoint, attn_implementation="eager")
            except TypeError:
                model = AutoModel.from_pretrained(self.checkpoint)
        except Exception as exc:
            raise CheckpointError(f"cannot load checkpoint {self.checkpoint!r}: {exc}") from exc
        model.eval()  # inference mode: no dropout, no masking, deterministic
        config = model.config
        strides = getattr(config, "conv_stride", None)
        if not strides:
            raise CheckpointError(
                f"{self.checkpoint!r}: config lacks conv_stride; cannot derive the frame rate"
            )
        self.model = model
        self.num_layers = int(config.num_hidden_layers)
        self.sample_rate = _load_sample_rate(self.checkpoint)
        self.samples_per_frame = int(math.prod(int(s) for s in strides))
        self.frame_rate_hz = self.sample_rate / self.samples_per_frame

    def encode(
        self, waveform: np.ndarray, layer: int, attention: bool = False
    ) -> tuple[np.ndarray, np.ndarray | None]:
        """Run one utterance through the model.

        Returns (features, attn) where features is T x D float32 from hidden
        state ``layer`` (0 = conv output before any transformer block) and
        attn, when requested, is a length-T float32 vector of the mean
        attention each frame receives, averaged over heads and query
        positions. The vector sums to 1.
        """
        import torch

        if not 0 <= layer <= self.num_layers:
            raise ValueError(f"layer {layer} outside [0, {self.num_layers}]")
        wav = torch.from_numpy(np.ascontiguousarray(waveform, dtype=np.float32))
        with torch.no_grad():
            out = self.model(
                wav.unsqueeze(0),
                output_hidden_states=True,
                output_attentions=attention,
            )
        feats = out.hidden_states[layer][0].numpy().astype(np.float32, copy=False)
        attn = None
        if attention:
            # hidden_states[L] is produced by transformer block L, whose
            # attention map is attentions[L-1]; layer 0 has no block, so fall
            # back to the first block's map.
            idx = min(max(layer, 1), self.num_layers) - 1
            weights = out.attentions[idx][0]  # heads x queries x keys
            attn = weights.mean(dim=(0, 1)).numpy().astype(np.float32, copy=False)
        return feats, attn
