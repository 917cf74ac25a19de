"""Classification probabilities and the training losses.

Scoring is cosine similarity against per-class text embeddings, scaled by
a temperature and pushed through a max-subtracted softmax. Training uses
cross-entropy on all classes seen so far plus a distillation term that
matches the previous-stage model's distribution over old classes only;
the two are combined with a weight lambda equal to the fraction of old
classes among all seen classes, so the pull toward old knowledge grows as
tasks accumulate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adapter import AdapterParams, CalibrationConfig
from .errors import ValidationError
from .linalg import as_matrix

# Probabilities below this are clamped before log: a sharpened softmax at
# small temperatures underflows legitimately and must not blow up the loss.
PROB_FLOOR = 1e-30


@dataclass(frozen=True)
class ObjectiveConfig:
    """Softmax temperature; similarities are divided by tau before softmax."""

    tau: float = 0.01

    def __post_init__(self):
        if not self.tau > 0:
            raise ValidationError(f"tau must be > 0, got {self.tau}")


@dataclass(frozen=True)
class TeacherSnapshot:
    """Frozen end-of-previous-task model used as the distillation target."""

    params: AdapterParams
    calibration: CalibrationConfig
    old_class_count: int

    def __post_init__(self):
        if self.old_class_count < 1:
            raise ValidationError("teacher must cover at least one old class")


def class_probabilities(config: ObjectiveConfig, f_finetuned, f_text) -> np.ndarray:
    """Row-wise softmax over similarity scores.

    Both inputs must already be L2-normalized row-wise so the dot product
    is the cosine similarity. Returns (batch, C) rows summing to 1.
    """
    f = as_matrix(f_finetuned, "f_finetuned")
    t = as_matrix(f_text, "f_text")
    if f.shape[1] != t.shape[1]:
        raise ValidationError(
            f"feature dim mismatch: {f.shape[1]} vs text {t.shape[1]}"
        )
    if t.shape[0] < 1:
        raise ValidationError("need at least one class")
    logits = (f @ t.T) / config.tau
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def _check_probs(probs, name: str) -> np.ndarray:
    p = as_matrix(probs, name)
    return p


def cross_entropy(probs, labels) -> float:
    """Mean over the batch of -log p[label], with probabilities floored."""
    p = _check_probs(probs, "probs")
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != p.shape[0]:
        raise ValidationError("labels must be one index per probability row")
    if y.size and (y.min() < 0 or y.max() >= p.shape[1]):
        raise ValidationError("label index out of range")
    picked = p[np.arange(p.shape[0]), y]
    return float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))


def distill_loss(teacher_probs, student_probs_old_slice) -> float:
    """Mean soft cross-entropy between teacher and student over old classes.

    Both arguments must already be renormalized over the old-class slice.
    With zero old classes (first task) the loss is defined as 0.
    """
    t = _check_probs(teacher_probs, "teacher_probs")
    s = _check_probs(student_probs_old_slice, "student_probs_old_slice")
    if t.shape != s.shape:
        raise ValidationError(f"teacher {t.shape} vs student {s.shape} shape mismatch")
    if t.shape[1] == 0:
        return 0.0
    rows = -(t * np.log(np.maximum(s, PROB_FLOOR))).sum(axis=1)
    return float(np.mean(rows))


def slice_and_renormalize(probs, k: int) -> np.ndarray:
    """Restrict probability rows to the first k classes and renormalize."""
    p = _check_probs(probs, "probs")
    if not (0 <= k <= p.shape[1]):
        raise ValidationError(f"slice width {k} out of range for {p.shape[1]} classes")
    sl = p[:, :k]
    if k == 0:
        return sl
    return sl / np.maximum(sl.sum(axis=1, keepdims=True), PROB_FLOOR)


def dynamic_lambda(old_class_count: int, total_class_count: int) -> float:
    """Distillation weight: the fraction of old classes among all classes."""
    if total_class_count < 1:
        raise ValidationError("total class count must be >= 1")
    if not (0 <= old_class_count <= total_class_count):
        raise ValidationError(
            f"old class count {old_class_count} out of range [0, {total_class_count}]"
        )
    return old_class_count / total_class_count


def total_loss(ce: float, distill: float, lam: float) -> float:
    """Convex combination (1 - lambda) * ce + lambda * distill."""
    if not (0.0 <= lam <= 1.0):
        raise ValidationError(f"lambda must be in [0, 1], got {lam}")
    return (1.0 - lam) * ce + lam * distill
