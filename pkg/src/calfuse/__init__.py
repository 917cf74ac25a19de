"""Continual-learning engine over frozen embeddings.

The pipeline trains a small gated adapter on precomputed embeddings,
blends its output with the frozen features, scores against per-class text
embeddings, fuses adapter parameters across tasks through their QR
factors, and distills from the previous-stage model with a dynamically
weighted loss. See README.md for the CLI and the acceptance suite.
"""

from .adapter import (
    AdapterParams,
    CalibrationConfig,
    calibrate,
    efs_backward,
    efs_forward,
    init_adapter,
    l2_normalize_rows,
)
from .data import (
    EmbeddingDataset,
    TaskSchedule,
    build_schedule,
    generate_synthetic,
    read_dataset,
    write_dataset,
)
from .errors import CalfuseError, FormatError, ValidationError
from .fusion import FusionConfig, fuse_adapter, fuse_matrix
from .harness import (
    ExperimentConfig,
    MetricsReport,
    compute_metrics,
    evaluate_phase,
    export_features,
    load_state,
    run_experiment,
    save_state,
)
from .linalg import QRFactors, matmul, qr_decompose, transpose
from .objective import (
    ObjectiveConfig,
    TeacherSnapshot,
    class_probabilities,
    cross_entropy,
    distill_loss,
    dynamic_lambda,
    total_loss,
)
from .replay import ClassGaussian, fit_class_gaussian, sample_replay
from .trainer import (
    AdamState,
    TrainConfig,
    adam_step,
    lr_at_epoch,
    scored_features,
    train_task,
)

__version__ = "0.1.0"

__all__ = [
    "AdapterParams", "CalibrationConfig", "calibrate", "efs_backward",
    "efs_forward", "init_adapter", "l2_normalize_rows",
    "EmbeddingDataset", "TaskSchedule", "build_schedule", "generate_synthetic",
    "read_dataset", "write_dataset",
    "CalfuseError", "FormatError", "ValidationError",
    "FusionConfig", "fuse_adapter", "fuse_matrix",
    "ExperimentConfig", "MetricsReport", "compute_metrics", "evaluate_phase",
    "export_features", "load_state", "run_experiment", "save_state",
    "QRFactors", "matmul", "qr_decompose", "transpose",
    "ObjectiveConfig", "TeacherSnapshot", "class_probabilities", "cross_entropy",
    "distill_loss", "dynamic_lambda", "total_loss",
    "ClassGaussian", "fit_class_gaussian", "sample_replay",
    "AdamState", "TrainConfig", "adam_step", "lr_at_epoch", "scored_features",
    "train_task",
]
