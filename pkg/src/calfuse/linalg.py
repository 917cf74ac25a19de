"""Dense linear algebra kernels used by the fusion machinery.

Everything operates on plain float64 numpy arrays. The one nontrivial
piece is a Householder thin QR with a fixed sign convention: forcing the
diagonal of R to be nonnegative makes the factorization unique for
full-column-rank input, so fusing Q/R factors across training stages does
not depend on factorization internals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

# Pivot columns with norm below this are treated as rank deficient: the
# reflector for that column is skipped and the R diagonal entry forced to 0.
RANK_TOL = 1e-12


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a float64 2-D array, rejecting non-finite entries."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def matmul(a, b) -> np.ndarray:
    """Matrix product with explicit shape validation."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValidationError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def transpose(a) -> np.ndarray:
    return np.ascontiguousarray(as_matrix(a).T)


@dataclass(frozen=True)
class QRFactors:
    """Thin QR factors: q is m-by-k with orthonormal columns, r is k-by-n
    upper triangular with nonnegative diagonal, k = min(m, n)."""

    q: np.ndarray
    r: np.ndarray


def qr_decompose(w) -> QRFactors:
    """Householder thin QR with a deterministic sign convention.

    After accumulating the reflectors, any negative diagonal entry of R is
    fixed by flipping the sign of the matching Q column / R row pair.
    Columns whose pivot norm falls below RANK_TOL keep the accumulated
    basis vector and get an exact zero on the R diagonal (adapters
    initialized near zero can be rank deficient; that is not an error).
    """
    a = as_matrix(w, "w").copy()
    m, n = a.shape
    k = min(m, n)

    reflectors: list[tuple[np.ndarray, float] | None] = []
    for j in range(k):
        x = a[j:, j]
        norm = float(np.sqrt(np.dot(x, x)))
        if norm < RANK_TOL:
            reflectors.append(None)
            a[j, j] = 0.0
            continue
        v = x.copy()
        # Add sign(x0)*norm to v[0]; sign(0) taken as +1 for determinism.
        v[0] += norm if x[0] >= 0 else -norm
        beta = 2.0 / float(np.dot(v, v))
        a[j:, j:] -= beta * np.outer(v, v @ a[j:, j:])
        reflectors.append((v, beta))

    r = np.triu(a[:k, :])

    # Accumulate Q = H_0 H_1 ... H_{k-1} applied to the first k identity columns.
    q = np.eye(m, k)
    for j in range(k - 1, -1, -1):
        refl = reflectors[j]
        if refl is None:
            continue
        v, beta = refl
        q[j:, :] -= beta * np.outer(v, v @ q[j:, :])

    flip = r.diagonal() < 0
    if np.any(flip):
        r[flip, :] *= -1.0
        q[:, flip] *= -1.0
    return QRFactors(q=q, r=r)
