"""QR-based parameter fusion across consecutive training stages.

Each weight matrix from the previous stage (w_prev) and the newly trained
stage (w_curr) is factorized as Q R; the next-stage R is a beta-weighted
combination of the projection of the new basis onto the old one with the
old R, and the fused weights are rebuilt inside the old column space:

    r_next = beta * (q_prev^T q_curr) + (1 - beta) * r_prev
    fused  = q_prev r_next

The r_inclusive variant replaces q_prev^T q_curr with q_prev^T q_curr r_curr
(= q_prev^T w_curr), which keeps the new stage's scale information; it is
selectable because either reading of the recombination is defensible.
Biases are fused by plain convex combination since QR does not apply.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adapter import AdapterParams
from .errors import ValidationError
from .linalg import as_matrix, qr_decompose

VARIANTS = ("literal", "r_inclusive")


@dataclass(frozen=True)
class FusionConfig:
    """beta weights the new stage; 1 - beta weights the retained old stage."""

    beta: float
    variant: str = "literal"

    def __post_init__(self):
        if not (0.0 <= self.beta <= 1.0):
            raise ValidationError(f"beta must be in [0, 1], got {self.beta}")
        if self.variant not in VARIANTS:
            raise ValidationError(
                f"unknown fusion variant {self.variant!r}, expected one of {VARIANTS}"
            )


def fuse_matrix(config: FusionConfig, w_prev, w_curr) -> np.ndarray:
    """Fuse two same-shape weight matrices through their QR factors.

    Wide matrices (rows < cols) are fused through their transposes so the
    k-by-k projection always matches the shape of R; square layers (the
    default adapter geometry) are unaffected by this.
    """
    w_prev = as_matrix(w_prev, "w_prev")
    w_curr = as_matrix(w_curr, "w_curr")
    if w_prev.shape != w_curr.shape:
        raise ValidationError(
            f"shape mismatch: w_prev {w_prev.shape} vs w_curr {w_curr.shape}"
        )
    if w_prev.shape[0] < w_prev.shape[1]:
        return fuse_matrix(config, w_prev.T, w_curr.T).T

    prev = qr_decompose(w_prev)
    curr = qr_decompose(w_curr)
    projection = prev.q.T @ curr.q
    if config.variant == "r_inclusive":
        projection = projection @ curr.r
    r_next = config.beta * projection + (1.0 - config.beta) * prev.r
    return prev.q @ r_next


def fuse_adapter(
    config: FusionConfig, prev: AdapterParams, curr: AdapterParams
) -> AdapterParams:
    """Fuse every weight matrix via fuse_matrix and every bias convexly."""
    if (prev.feature_dim, prev.hidden_dim) != (curr.feature_dim, curr.hidden_dim):
        raise ValidationError(
            "adapter shape mismatch: "
            f"({prev.feature_dim}, {prev.hidden_dim}) vs "
            f"({curr.feature_dim}, {curr.hidden_dim})"
        )
    fused = {}
    for name, p_arr, c_arr in zip(
        ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4"),
        prev.tensors(),
        curr.tensors(),
    ):
        if p_arr.ndim == 2:
            fused[name] = fuse_matrix(config, p_arr, c_arr)
        else:
            # (1 - beta) * prev + beta * curr, written incrementally so the
            # beta = 0 and prev = curr endpoints are bit-exact.
            fused[name] = p_arr + config.beta * (c_arr - p_arr)
    return AdapterParams(**fused)
