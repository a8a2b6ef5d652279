"""Frame self-similarity matrix with O(1) interval cut/volume queries.

The similarity of frames u, v is their embedding dot product; the whole
matrix is shifted by its global minimum so every edge weight is
non-negative. Volumes and block sums are served from a single 2-D prefix
sum so that cut = vol - block never mixes accumulation orders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError
from .featio import FeatureSequence

DEFAULT_MAX_FRAMES = 20_000


@dataclass(frozen=True)
class SimMatrix:
    """Normalized T x T similarity matrix plus prefix-sum structures.

    ``prefix[i, j]`` holds the sum of w over rows < i and columns < j in
    float64, regardless of the feature dtype; ``row_sum_prefix`` is its last
    column, i.e. prefix sums of the full row sums d(u).
    """

    utt_id: str
    w: np.ndarray
    prefix: np.ndarray

    @property
    def num_frames(self) -> int:
        return self.w.shape[0]

    @property
    def row_sum_prefix(self) -> np.ndarray:
        return self.prefix[:, -1]

    @property
    def total_mass(self) -> float:
        return float(self.prefix[-1, -1])

    def block_sum(self, a: int, b: int) -> float:
        """Sum of w(i, j) over i, j in [a, b)."""
        p = self.prefix
        return float(p[b, b] - p[a, b] - p[b, a] + p[a, a])


def compute_ssm(
    seq: FeatureSequence,
    *,
    center: bool = False,
    max_frames: int = DEFAULT_MAX_FRAMES,
) -> SimMatrix:
    """Build w = C C^T - min(C C^T) and its prefix structures.

    ``center`` subtracts the per-utterance feature mean before the product.
    This is not part of the reference pipeline and is off by default.
    """
    t = seq.num_frames
    if t > max_frames:
        raise CapacityError(
            f"{seq.utt_id}: {t} frames exceeds the {max_frames}-frame budget for a "
            f"dense T x T similarity matrix; process the utterance in chunks"
        )
    feats = seq.frames.astype(np.float64)
    if center:
        feats = feats - feats.mean(axis=0)
    w = feats @ feats.T
    w -= w.min()
    prefix = np.zeros((t + 1, t + 1))
    np.cumsum(w, axis=0, out=prefix[1:, 1:])
    np.cumsum(prefix[1:, 1:], axis=1, out=prefix[1:, 1:])
    return SimMatrix(utt_id=seq.utt_id, w=w, prefix=prefix)


def sim_matrix_from_weights(utt_id: str, w: np.ndarray) -> SimMatrix:
    """Wrap an explicit symmetric non-negative weight matrix (tests, oracles)."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"weight matrix must be square, got {w.shape}")
    if (w < 0).any():
        raise ValueError("weight matrix must be non-negative")
    t = w.shape[0]
    prefix = np.zeros((t + 1, t + 1))
    np.cumsum(w, axis=0, out=prefix[1:, 1:])
    np.cumsum(prefix[1:, 1:], axis=1, out=prefix[1:, 1:])
    return SimMatrix(utt_id=utt_id, w=w, prefix=prefix)


def cut_and_vol(sm: SimMatrix, a: int, b: int) -> tuple[float, float]:
    """Cut and volume of the frame interval A = [a, b) against the whole graph.

    vol(A) = sum of w(u, v) over u in A, all v; cut(A, V-A) = vol(A) minus the
    within-block sum. Tiny negative cuts (prefix-sum cancellation) are
    possible and stay within -1e-9 for sane inputs.
    """
    if not 0 <= a < b <= sm.num_frames:
        raise ValueError(f"empty or out-of-range interval [{a}, {b})")
    p = sm.prefix
    vol = float(p[b, -1] - p[a, -1])
    cut = vol - sm.block_sum(a, b)
    return cut, vol
