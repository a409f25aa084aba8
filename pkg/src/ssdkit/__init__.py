"""Mandarin speech-sound-disorder screening toolkit.

End-to-end pipeline: WAV decoding and resampling, nine-fold waveform
augmentation, three-channel log-mel features, subject-grouped k-fold
plans, a small from-scratch CNN with Adam, cross-validated training,
latency benchmarking, and an HTTP screening service.
"""
from __future__ import annotations

from .audio_io import AudioClip, decode_wav_bytes, encode_wav_bytes, load_wav, resample, save_wav
from .augment import AugmentationSpec, ExpansionPlan, expand_nine_fold, expansion_plan
from .dataset import (
    BINARY_CLASSES,
    CORRECT_LABEL,
    ERROR_CATEGORIES,
    EXPERIMENT_PRESETS,
    LABEL_VOCAB,
    ClassWeights,
    FeatureStore,
    FoldPlan,
    MaterializedFold,
    SpeechSample,
    build_folds,
    compute_class_weights,
    consistency_filter,
    materialize_experiment,
    parse_experiment,
    parse_manifest,
    synth_corpus,
)
from .errors import (
    AudioDecodeError,
    ConfigurationError,
    DegenerateInputError,
    NumericError,
    ParameterError,
    PipelineError,
    ValidationError,
)
from .features import (
    CHARACTER_FRAMES,
    PHRASE_FRAMES,
    FeatureMap,
    extract_preset,
    hz_to_mel,
    load_feature_map,
    mel_filterbank,
    mel_to_hz,
    save_feature_map,
    stack_three_channels,
)
from .nnet import (
    AdamState,
    BlockConfig,
    Checkpoint,
    SmallCnnConfig,
    adam_step,
    backward_pass,
    default_config,
    forward,
    forward_pass,
    gradient_check,
    init_weights,
    load_checkpoint,
    parameter_count,
    save_checkpoint,
)
from .phrases import PHRASES, Phrase, phrase_by_id
from .trainer import (
    EvalReport,
    EvalResult,
    LatencyReport,
    TrainConfig,
    benchmark_latency,
    cross_validate,
    evaluate,
    evaluate_predictions,
    summarize_accuracies,
    train_fold,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "AudioClip", "AudioDecodeError", "AugmentationSpec",
    "BINARY_CLASSES", "BlockConfig", "CHARACTER_FRAMES", "CORRECT_LABEL",
    "Checkpoint", "ClassWeights", "ConfigurationError", "DegenerateInputError",
    "ERROR_CATEGORIES", "EXPERIMENT_PRESETS", "EvalReport", "EvalResult",
    "ExpansionPlan", "FeatureMap", "FeatureStore", "FoldPlan", "LABEL_VOCAB",
    "LatencyReport", "MaterializedFold", "NumericError", "PHRASES",
    "PHRASE_FRAMES", "ParameterError", "Phrase", "PipelineError",
    "SmallCnnConfig", "SpeechSample", "TrainConfig", "ValidationError",
    "adam_step", "backward_pass", "benchmark_latency", "build_folds",
    "compute_class_weights", "consistency_filter", "cross_validate",
    "decode_wav_bytes", "default_config", "encode_wav_bytes", "evaluate",
    "evaluate_predictions", "expand_nine_fold", "expansion_plan",
    "extract_preset", "forward", "forward_pass", "gradient_check",
    "hz_to_mel", "init_weights", "load_checkpoint", "load_feature_map",
    "load_wav", "materialize_experiment", "mel_filterbank", "mel_to_hz",
    "parameter_count", "parse_experiment", "parse_manifest", "phrase_by_id",
    "resample", "save_checkpoint", "save_feature_map", "save_wav",
    "summarize_accuracies", "synth_corpus", "train_fold",
]
