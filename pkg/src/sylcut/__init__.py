"""Unsupervised discovery of syllable- and word-like units in speech features.

The pipeline: frame embeddings -> self-similarity matrix -> normalized
min-cut segmentation -> two-step clustering -> scoring against reference
alignments. See the module docstrings for the individual pieces.
"""

from .cluster import (
    ClusterAssignment,
    ClusterModel,
    SegmentEmbedding,
    agglomerate,
    assign,
    assignment_segmentations,
    fit,
    fit_kmeans,
    load_model,
    pool_segments,
    save_model,
)
from .errors import (
    CapacityError,
    DataError,
    FormatError,
    ManifestError,
    SylcutError,
    TruncationError,
    ValidationError,
)
from .evaluation import (
    BoundaryScore,
    ClusterScore,
    EvalConfig,
    EvalReport,
    MatchingResult,
    TokenScore,
    evaluate_corpus,
    filter_multisyllabic,
    format_report,
    match_boundaries,
    match_segments_iou,
    purity_and_ds,
    r_value,
    token_f1,
)
from .featio import (
    Alignment,
    FeatureSequence,
    Segmentation,
    read_alignment_tsv,
    read_feature_file,
    read_manifest,
    read_segmentation_tsv,
    write_alignment_tsv,
    write_feature_file,
    write_manifest,
    write_segmentation_tsv,
)
from .mincut import (
    MergeParams,
    NcutSolution,
    choose_k,
    merge_segments,
    ncut_dp,
    ncut_exhaustive,
    segment_utterance,
    segments_from_attention,
)
from .ssm import SimMatrix, compute_ssm, cut_and_vol, sim_matrix_from_weights
from .synth import SynthResult, SynthSpec, generate, write_corpus

__version__ = "0.1.0"

__all__ = [
    "Alignment",
    "BoundaryScore",
    "CapacityError",
    "ClusterAssignment",
    "ClusterModel",
    "ClusterScore",
    "DataError",
    "EvalConfig",
    "EvalReport",
    "FeatureSequence",
    "FormatError",
    "ManifestError",
    "MatchingResult",
    "MergeParams",
    "NcutSolution",
    "SegmentEmbedding",
    "Segmentation",
    "SimMatrix",
    "SylcutError",
    "SynthResult",
    "SynthSpec",
    "TokenScore",
    "TruncationError",
    "ValidationError",
    "agglomerate",
    "assign",
    "assignment_segmentations",
    "choose_k",
    "compute_ssm",
    "cut_and_vol",
    "evaluate_corpus",
    "filter_multisyllabic",
    "fit",
    "fit_kmeans",
    "format_report",
    "generate",
    "load_model",
    "match_boundaries",
    "match_segments_iou",
    "merge_segments",
    "ncut_dp",
    "ncut_exhaustive",
    "pool_segments",
    "purity_and_ds",
    "r_value",
    "read_alignment_tsv",
    "read_feature_file",
    "read_manifest",
    "read_segmentation_tsv",
    "save_model",
    "segment_utterance",
    "segments_from_attention",
    "sim_matrix_from_weights",
    "token_f1",
    "write_alignment_tsv",
    "write_corpus",
    "write_feature_file",
    "write_manifest",
    "write_segmentation_tsv",
]
