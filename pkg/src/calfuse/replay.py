"""Gaussian pseudo-feature replay.

Per-class statistics are fitted once on the frozen encoder embeddings
(which never change across tasks, so stored statistics never go stale).
Later tasks sample pseudo-features from the stored diagonal Gaussians and
mix them into training batches in place of raw old-class exemplars.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adapter import l2_normalize_rows
from .errors import ValidationError
from .linalg import as_matrix

VARIANCE_SHRINKAGE = 1e-6


@dataclass(frozen=True)
class ClassGaussian:
    """Diagonal Gaussian over the feature space for one class."""

    class_id: int
    mean: np.ndarray
    variance: np.ndarray
    sample_count: int

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValidationError("sample count must be >= 1")
        if self.mean.shape != self.variance.shape or self.mean.ndim != 1:
            raise ValidationError("mean and variance must be matching 1-D vectors")
        if np.any(self.variance < 0):
            raise ValidationError("variance must be nonnegative")


def fit_class_gaussian(features, class_id: int) -> ClassGaussian:
    """Column mean and (population) variance of the class's feature rows,
    with a small shrinkage added so degenerate classes stay sampleable."""
    f = as_matrix(features, "features")
    if f.shape[0] < 1:
        raise ValidationError("cannot fit a Gaussian on zero samples")
    return ClassGaussian(
        class_id=int(class_id),
        mean=f.mean(axis=0),
        variance=f.var(axis=0) + VARIANCE_SHRINKAGE,
        sample_count=f.shape[0],
    )


def sample_replay(
    gaussians: list[ClassGaussian], total: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Draw `total` pseudo-features split as evenly as possible across classes.

    The remainder goes to the lowest class ids. Each sample is
    mean + sqrt(variance) * standard normal, L2-normalized afterward so it
    matches the unit-norm contract of real features. Deterministic given
    (gaussians, total, seed).
    """
    if total < 0:
        raise ValidationError("total must be >= 0")
    if total == 0:
        d = gaussians[0].mean.shape[0] if gaussians else 0
        return np.empty((0, d)), np.empty(0, dtype=np.int64)
    if not gaussians:
        raise ValidationError("need at least one class Gaussian to sample from")

    ordered = sorted(gaussians, key=lambda g: g.class_id)
    base, rem = divmod(total, len(ordered))
    counts = [base + (1 if i < rem else 0) for i in range(len(ordered))]

    rng = np.random.default_rng(seed)
    feature_blocks = []
    label_blocks = []
    for g, count in zip(ordered, counts):
        if count == 0:
            continue
        draws = rng.standard_normal((count, g.mean.shape[0]))
        feature_blocks.append(g.mean + np.sqrt(g.variance) * draws)
        label_blocks.append(np.full(count, g.class_id, dtype=np.int64))
    features = l2_normalize_rows(np.concatenate(feature_blocks, axis=0))
    labels = np.concatenate(label_blocks)
    return features, labels
