"""Per-task training: Adam, the step-decay schedule, and the loss pipeline.

One training step runs the adapter forward, blends with the frozen
features, L2-normalizes, scores against the text embeddings of all classes
seen so far, and combines cross-entropy with the old-class distillation
term. The backward pass is fully analytic (including the normalization
Jacobian), so training is deterministic and finite-difference checkable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adapter import (
    AdapterParams,
    CalibrationConfig,
    calibrate,
    efs_backward,
    efs_forward,
    map_params,
)
from .errors import ValidationError
from .linalg import as_matrix
from .objective import (
    ObjectiveConfig,
    TeacherSnapshot,
    class_probabilities,
    cross_entropy,
    distill_loss,
    dynamic_lambda,
    slice_and_renormalize,
    total_loss,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class AdamState:
    """First/second moment accumulators, shaped like the target params."""

    m: AdapterParams
    v: AdapterParams
    step: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def zeros_like(cls, params: AdapterParams) -> "AdamState":
        zeros = map_params(np.zeros_like, params)
        return cls(m=zeros, v=zeros)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    learning_rate: float = 0.001
    decay_epochs: tuple[int, ...] = (4, 10)
    decay_factor: float = 0.1
    batch_size: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValidationError("learning rate must be > 0")
        if not (0 < self.decay_factor <= 1):
            raise ValidationError("decay factor must be in (0, 1]")
        if self.batch_size < 1:
            raise ValidationError("batch size must be >= 1")


def adam_step(
    state: AdamState, params: AdapterParams, grads: AdapterParams, lr: float
) -> tuple[AdamState, AdapterParams]:
    """One bias-corrected Adam update; returns (new state, new params)."""
    for p, g in zip(params.tensors(), grads.tensors()):
        if p.shape != g.shape:
            raise ValidationError(f"gradient shape {g.shape} != param shape {p.shape}")
    t = state.step + 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    new_m = map_params(lambda m, g: b1 * m + (1 - b1) * g, state.m, grads)
    new_v = map_params(lambda v, g: b2 * v + (1 - b2) * g * g, state.v, grads)
    c1 = 1 - b1**t
    c2 = 1 - b2**t
    new_params = map_params(
        lambda p, m, v: p - lr * (m / c1) / (np.sqrt(v / c2) + eps),
        params, new_m, new_v,
    )
    return (
        AdamState(m=new_m, v=new_v, step=t, beta1=b1, beta2=b2, eps=eps),
        new_params,
    )


def lr_at_epoch(config: TrainConfig, epoch: int) -> float:
    """Learning rate in effect for a 1-based epoch; each decay epoch applies
    its factor from the start of that epoch."""
    if not (1 <= epoch <= config.epochs):
        raise ValidationError(f"epoch {epoch} outside [1, {config.epochs}]")
    n_decays = sum(1 for e in config.decay_epochs if e <= epoch)
    return config.learning_rate * config.decay_factor**n_decays


@dataclass(frozen=True)
class StepLosses:
    epoch: int
    ce: float
    distill: float
    total: float


@dataclass
class TrainLog:
    """Per-step loss components, mostly for tests and demos."""

    steps: list[StepLosses] = field(default_factory=list)
    lam: float = 0.0

    def epoch_mean_total(self, epoch: int) -> float:
        values = [s.total for s in self.steps if s.epoch == epoch]
        if not values:
            raise ValidationError(f"no recorded steps for epoch {epoch}")
        return float(np.mean(values))


def scored_features(
    params: AdapterParams | None, calibration: CalibrationConfig, x
) -> np.ndarray:
    """Features as scored against text embeddings: adapter + blend +
    row normalization. With params=None the frozen features pass through
    unchanged (the zero-shot path)."""
    x = as_matrix(x, "x")
    if params is None:
        return x
    y, _ = efs_forward(params, x)
    f = calibrate(calibration, x, y)
    norms = np.maximum(np.linalg.norm(f, axis=1, keepdims=True), 1e-12)
    return f / norms


def loss_and_grads(
    params: AdapterParams,
    calibration: CalibrationConfig,
    objective: ObjectiveConfig,
    x,
    labels,
    text_features,
    teacher: TeacherSnapshot | None,
    lam: float,
) -> tuple[float, float, float, AdapterParams]:
    """One full forward/backward over a batch.

    Returns (total, ce, distill, parameter gradients). The distillation
    target is the teacher's own calibrated distribution over the first
    `teacher.old_class_count` classes, renormalized; its gradient only
    touches the old-class logits.
    """
    x = as_matrix(x, "x")
    text = as_matrix(text_features, "text_features")
    labels = np.asarray(labels)
    batch = x.shape[0]

    y_efs, trace = efs_forward(params, x)
    f_cal = calibrate(calibration, x, y_efs)
    norms = np.maximum(np.linalg.norm(f_cal, axis=1, keepdims=True), 1e-12)
    f_n = f_cal / norms
    probs = class_probabilities(objective, f_n, text)
    ce = cross_entropy(probs, labels)

    dlogits = probs.copy()
    dlogits[np.arange(batch), labels] -= 1.0
    dlogits *= (1.0 - lam) / batch

    distill = 0.0
    if teacher is not None and lam > 0.0:
        k = teacher.old_class_count
        if k > text.shape[0]:
            raise ValidationError(
                f"teacher covers {k} classes but only {text.shape[0]} are seen"
            )
        teacher_feats = scored_features(teacher.params, teacher.calibration, x)
        teacher_probs = class_probabilities(objective, teacher_feats, text[:k])
        student_old = slice_and_renormalize(probs, k)
        distill = distill_loss(teacher_probs, student_old)
        dlogits[:, :k] += (lam / batch) * (student_old - teacher_probs)

    total = total_loss(ce, distill, lam)

    df_n = (dlogits @ text) / objective.tau
    # Jacobian of row normalization: project out the radial component.
    df_cal = (df_n - (df_n * f_n).sum(axis=1, keepdims=True) * f_n) / norms
    dy_efs = (1.0 - calibration.alpha) * df_cal
    grads, _ = efs_backward(params, trace, dy_efs)
    return total, ce, distill, grads


def derive_seed(*parts: int) -> int:
    """Stable child seed from a tuple of integers."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def train_task(
    features,
    labels,
    text_features,
    init_params: AdapterParams,
    calibration: CalibrationConfig,
    objective: ObjectiveConfig,
    config: TrainConfig,
    replay_features=None,
    replay_labels=None,
    teacher: TeacherSnapshot | None = None,
    task_index: int = 1,
) -> tuple[AdapterParams, TrainLog]:
    """Train the adapter on one task.

    `features`/`labels` are the current task's rows; the optional replay
    rows are concatenated into every epoch's stream and shuffled with
    them. Labels must already be indices into `text_features` (all classes
    seen so far, old classes first). The distillation weight comes from
    dynamic_lambda when a teacher is present, else 0.
    """
    x = as_matrix(features, "features")
    if x.shape[0] < 1:
        raise ValidationError("task has no training rows")
    y = np.asarray(labels, dtype=np.int64)
    text = as_matrix(text_features, "text_features")
    total_classes = text.shape[0]
    if y.min() < 0 or y.max() >= total_classes:
        raise ValidationError("training labels outside the seen-class range")

    if replay_features is not None and len(replay_features):
        rx = as_matrix(replay_features, "replay_features")
        ry = np.asarray(replay_labels, dtype=np.int64)
        if ry.shape != (rx.shape[0],):
            raise ValidationError("replay labels must match replay features")
        x = np.concatenate([x, rx], axis=0)
        y = np.concatenate([y, ry])

    if teacher is not None:
        if teacher.old_class_count > total_classes:
            raise ValidationError("teacher old-class count exceeds seen classes")
        lam = dynamic_lambda(teacher.old_class_count, total_classes)
    else:
        lam = 0.0

    params = init_params
    state = AdamState.zeros_like(params)
    log = TrainLog(lam=lam)
    n = x.shape[0]
    for epoch in range(1, config.epochs + 1):
        lr = lr_at_epoch(config, epoch)
        order = np.random.default_rng(
            derive_seed(config.seed, 1, task_index, epoch)
        ).permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            total, ce, dist, grads = loss_and_grads(
                params, calibration, objective, x[idx], y[idx], text, teacher, lam
            )
            state, params = adam_step(state, params, grads, lr)
            log.steps.append(StepLosses(epoch=epoch, ce=ce, distill=dist, total=total))
    return params, log
