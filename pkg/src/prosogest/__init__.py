"""Prosody/gesture co-analysis for continuous gesture recognition.

A pitch contour is extracted from speech, acoustically prominent segments
are detected from pitch-accent features, their temporal alignment with
hand kinematics supplies a per-class prior, and that prior is fused with
gesture-HMM likelihoods to segment and label a continuous gesture stream.
"""

from .config import PipelineConfig, default_config, load_config
from .cooccur import AlignmentFeatures, CooccurrenceModel, compute_alignment, fit_cooccurrence
from .corpus import SyntheticRecipe, generate, split, write_corpus
from .fusion_eval import ErrorBreakdown, ScoredInterval, fuse_posteriors, score
from .gesture_hmm import (
    PhonemeClass,
    PhonemeHmm,
    PhonemeNetwork,
    SegmentInterval,
    decode_stream,
    train_hmm,
    viterbi_log_likelihood,
)
from .kinematics import KinematicFeatures, VelocityProfile, differentiate, velocity_profile
from .pitch import F0Segment, PitchConfig, PitchContour, extract_f0, preprocess_contour, segment_contour
from .prominence import (
    AccentFeatures,
    GaussianModel,
    ProminenceModel,
    YeoJohnsonTransform,
    calibrate_threshold,
    classify_prominent,
    compute_accents,
    fit_gaussian,
    fit_yeo_johnson,
    mahalanobis_d2,
    max_gradient,
    yeo_johnson,
)
from .signal_io import AudioBuffer, TrajectoryTrack, load_audio, load_trajectory

__version__ = "0.1.0"

__all__ = [
    "AccentFeatures",
    "AlignmentFeatures",
    "AudioBuffer",
    "CooccurrenceModel",
    "ErrorBreakdown",
    "F0Segment",
    "GaussianModel",
    "KinematicFeatures",
    "PhonemeClass",
    "PhonemeHmm",
    "PhonemeNetwork",
    "PipelineConfig",
    "PitchConfig",
    "PitchContour",
    "ProminenceModel",
    "ScoredInterval",
    "SegmentInterval",
    "SyntheticRecipe",
    "TrajectoryTrack",
    "VelocityProfile",
    "YeoJohnsonTransform",
    "calibrate_threshold",
    "classify_prominent",
    "compute_accents",
    "compute_alignment",
    "decode_stream",
    "default_config",
    "differentiate",
    "extract_f0",
    "fit_cooccurrence",
    "fit_gaussian",
    "fit_yeo_johnson",
    "fuse_posteriors",
    "generate",
    "load_audio",
    "load_config",
    "load_trajectory",
    "mahalanobis_d2",
    "max_gradient",
    "preprocess_contour",
    "score",
    "segment_contour",
    "split",
    "train_hmm",
    "velocity_profile",
    "viterbi_log_likelihood",
    "write_corpus",
    "yeo_johnson",
]
