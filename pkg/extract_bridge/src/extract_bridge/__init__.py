"""Bridge from pretrained speech encoders to FEAT1 feature files."""

from .audio import load_wav
from .encoder import TransformersEncoder
from .errors import AudioError, BridgeError, CheckpointError, LayerError, ManifestError
from .extract import ExtractJob, extract, read_audio_manifest
from .feat1 import feat1_bytes, write_feat1

__all__ = [
    "AudioError",
    "BridgeError",
    "CheckpointError",
    "ExtractJob",
    "LayerError",
    "ManifestError",
    "TransformersEncoder",
    "extract",
    "feat1_bytes",
    "load_wav",
    "read_audio_manifest",
    "write_feat1",
]
