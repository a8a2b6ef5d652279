class BridgeError(Exception):
    """Base for everything this package raises on purpose."""


class AudioError(BridgeError):
    """File undecodable, wrong channel count or wrong sample rate."""


class CheckpointError(BridgeError):
    """Checkpoint unloadable or missing the metadata we need."""


class LayerError(BridgeError):
    """Requested layer outside the loaded model's depth; aborts the job."""


class ManifestError(BridgeError):
    """Malformed audio manifest."""
