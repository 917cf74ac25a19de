"""The trainable feature adapter and the calibration blend.

The adapter is four linear layers arranged as two branches: a main path
m(x) = relu(x w1 + b1) w2 + b2 and a sigmoid gate g(x) built the same way
from w3/w4, combined as y = g(x) * m(x). The gate recalibrates each output
dimension while the layer stack preserves the feature dimension, so the
output can be scored against text embeddings directly. Calibration then
blends the adapted features back with the frozen ones:

    f_calibrated = alpha * f_frozen + (1 - alpha) * f_adapted

with alpha in [0, 1] controlling how much of the frozen representation
survives.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import ValidationError
from .linalg import as_matrix

WEIGHT_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4")


@dataclass(frozen=True)
class AdapterParams:
    """The full trainable state: weights/biases of both branches.

    Shapes (d = feature_dim, h = hidden_dim):
      w1, w3: (d, h)    b1, b3: (h,)
      w2, w4: (h, d)    b2, b4: (d,)
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    w4: np.ndarray
    b4: np.ndarray

    def __post_init__(self):
        if not (isinstance(self.w1, np.ndarray) and self.w1.ndim == 2):
            raise ValidationError("adapter field w1 must be a 2-D array")
        d, h = self.w1.shape
        expected = {
            "w1": (d, h), "b1": (h,), "w2": (h, d), "b2": (d,),
            "w3": (d, h), "b3": (h,), "w4": (h, d), "b4": (d,),
        }
        for f in fields(self):
            arr = getattr(self, f.name)
            if not isinstance(arr, np.ndarray) or arr.shape != expected[f.name]:
                raise ValidationError(
                    f"adapter field {f.name} has shape "
                    f"{getattr(arr, 'shape', None)}, expected {expected[f.name]}"
                )
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"adapter field {f.name} contains non-finite entries")

    @property
    def feature_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    def tensors(self) -> tuple[np.ndarray, ...]:
        """Fixed-order view of all eight arrays (w1, b1, ..., w4, b4)."""
        return tuple(getattr(self, name) for name in WEIGHT_NAMES)

    @classmethod
    def from_tensors(cls, arrays) -> "AdapterParams":
        return cls(**dict(zip(WEIGHT_NAMES, arrays)))


def map_params(fn, *params: AdapterParams) -> AdapterParams:
    """Apply fn elementwise across the tensor tuples of one or more params."""
    return AdapterParams.from_tensors(
        [fn(*arrs) for arrs in zip(*(p.tensors() for p in params))]
    )


@dataclass(frozen=True)
class CalibrationConfig:
    """alpha = fraction of the frozen feature kept in the blend."""

    alpha: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValidationError(f"alpha must be in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class ForwardTrace:
    """Cached activations from one forward pass, enough for an exact backward."""

    x: np.ndarray    # (b, d) input
    a1: np.ndarray   # (b, h) main pre-activation
    h1: np.ndarray   # (b, h) relu(a1)
    m: np.ndarray    # (b, d) main branch output
    a3: np.ndarray   # (b, h) gate pre-activation
    h3: np.ndarray   # (b, h) relu(a3)
    g: np.ndarray    # (b, d) sigmoid gate

    @property
    def batch_size(self) -> int:
        return self.x.shape[0]


def efs_forward(params: AdapterParams, x) -> tuple[np.ndarray, ForwardTrace]:
    """Run the gated adapter on a batch of row features.

    Returns (y, trace) with y the same shape as x; the trace carries the
    cached activations consumed by efs_backward.
    """
    x = as_matrix(x, "x")
    if x.shape[1] != params.feature_dim:
        raise ValidationError(
            f"input has {x.shape[1]} columns, adapter expects {params.feature_dim}"
        )
    a1 = x @ params.w1 + params.b1
    h1 = np.maximum(a1, 0.0)
    m = h1 @ params.w2 + params.b2
    a3 = x @ params.w3 + params.b3
    h3 = np.maximum(a3, 0.0)
    z = h3 @ params.w4 + params.b4
    g = 1.0 / (1.0 + np.exp(-z))
    y = g * m
    return y, ForwardTrace(x=x, a1=a1, h1=h1, m=m, a3=a3, h3=h3, g=g)


def efs_backward(
    params: AdapterParams, trace: ForwardTrace, dl_dy
) -> tuple[AdapterParams, np.ndarray]:
    """Exact gradients of the forward map.

    Given dL/dy for the batch that produced `trace`, returns
    (parameter gradients shaped like AdapterParams, dL/dx). The relu
    subgradient at exactly 0 is taken to be 0.
    """
    dl_dy = as_matrix(dl_dy, "dl_dy")
    if trace.x.shape[1] != params.feature_dim or trace.a1.shape[1] != params.hidden_dim:
        raise ValidationError("trace does not match adapter dimensions")
    if dl_dy.shape != trace.m.shape:
        raise ValidationError(
            f"dl_dy has shape {dl_dy.shape}, expected {trace.m.shape}"
        )
    g, m = trace.g, trace.m

    dm = dl_dy * g
    dz = dl_dy * m * g * (1.0 - g)

    db2 = dm.sum(axis=0)
    dw2 = trace.h1.T @ dm
    da1 = (dm @ params.w2.T) * (trace.a1 > 0)
    db1 = da1.sum(axis=0)
    dw1 = trace.x.T @ da1

    db4 = dz.sum(axis=0)
    dw4 = trace.h3.T @ dz
    da3 = (dz @ params.w4.T) * (trace.a3 > 0)
    db3 = da3.sum(axis=0)
    dw3 = trace.x.T @ da3

    dx = da1 @ params.w1.T + da3 @ params.w3.T
    grads = AdapterParams(
        w1=dw1, b1=db1, w2=dw2, b2=db2, w3=dw3, b3=db3, w4=dw4, b4=db4
    )
    return grads, dx


def calibrate(config: CalibrationConfig, f_image, f_efs) -> np.ndarray:
    """Convex blend alpha * f_image + (1 - alpha) * f_efs, elementwise."""
    f_image = as_matrix(f_image, "f_image")
    f_efs = as_matrix(f_efs, "f_efs")
    if f_image.shape != f_efs.shape:
        raise ValidationError(
            f"shape mismatch: f_image {f_image.shape} vs f_efs {f_efs.shape}"
        )
    return config.alpha * f_image + (1.0 - config.alpha) * f_efs


def init_adapter(d: int, h: int, seed: int) -> AdapterParams:
    """Deterministic init: weights uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)),
    biases zero."""
    if d < 1 or h < 1:
        raise ValidationError(f"dimensions must be >= 1, got d={d}, h={h}")
    rng = np.random.default_rng(seed)

    def uniform(fan_in, shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return AdapterParams(
        w1=uniform(d, (d, h)), b1=np.zeros(h),
        w2=uniform(h, (h, d)), b2=np.zeros(d),
        w3=uniform(d, (d, h)), b3=np.zeros(h),
        w4=uniform(h, (h, d)), b4=np.zeros(d),
    )


def l2_normalize_rows(x, min_norm: float = 1e-12) -> np.ndarray:
    """Scale each row to unit L2 norm (rows below min_norm are left tiny)."""
    x = as_matrix(x, "x")
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.maximum(norms, min_norm)
