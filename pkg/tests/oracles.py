"""Independent reference implementations used as test oracles.

These deliberately avoid the production code paths: QR via classical
Gram-Schmidt, the adapter forward as explicit scalar loops, and gradients
via central finite differences. They are slow and only exist so the fast
implementations have something independent to be checked against.
"""

from __future__ import annotations

import math

import numpy as np

from calfuse.adapter import AdapterParams


def gram_schmidt_qr(w):
    """Classical Gram-Schmidt thin QR; positive diagonal by construction.

    Only valid for matrices whose leading min(m, n) columns are linearly
    independent (fine for the random full-rank inputs the tests draw).
    """
    w = np.asarray(w, dtype=np.float64)
    m, n = w.shape
    k = min(m, n)
    q = np.zeros((m, k))
    r = np.zeros((k, n))
    for j in range(n):
        v = w[:, j].copy()
        for i in range(min(j, k)):
            r[i, j] = float(q[:, i] @ w[:, j])
            v -= r[i, j] * q[:, i]
        if j < k:
            r[j, j] = float(np.linalg.norm(v))
            if r[j, j] > 0:
                q[:, j] = v / r[j, j]
    return q, r


def fuse_matrix_reference(beta, w_prev, w_curr, r_inclusive=False):
    """Step-by-step fusion using the Gram-Schmidt factors."""
    qp, rp = gram_schmidt_qr(w_prev)
    qc, rc = gram_schmidt_qr(w_curr)
    projection = qp.T @ qc
    if r_inclusive:
        projection = projection @ rc
    r_next = beta * projection + (1.0 - beta) * rp
    return qp @ r_next


def efs_forward_scalar(params: AdapterParams, x):
    """The adapter forward pass written as explicit scalar loops."""
    x = np.asarray(x, dtype=np.float64)
    batch, d = x.shape
    h = params.hidden_dim
    y = np.zeros((batch, d))
    for b in range(batch):
        h1 = [0.0] * h
        h3 = [0.0] * h
        for j in range(h):
            a1 = params.b1[j]
            a3 = params.b3[j]
            for i in range(d):
                a1 += x[b, i] * params.w1[i, j]
                a3 += x[b, i] * params.w3[i, j]
            h1[j] = max(a1, 0.0)
            h3[j] = max(a3, 0.0)
        for i in range(d):
            m = params.b2[i]
            z = params.b4[i]
            for j in range(h):
                m += h1[j] * params.w2[j, i]
                z += h3[j] * params.w4[j, i]
            gate = 1.0 / (1.0 + math.exp(-z))
            y[b, i] = gate * m
    return y


def finite_difference_param_grads(loss_fn, params: AdapterParams, eps=1e-5):
    """Central finite differences of a scalar loss over every parameter
    entry. loss_fn takes an AdapterParams and returns a float."""
    grads = []
    tensors = [t.copy() for t in params.tensors()]
    for t_idx, tensor in enumerate(tensors):
        grad = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            hi = loss_fn(AdapterParams.from_tensors(tensors))
            flat[i] = original - eps
            lo = loss_fn(AdapterParams.from_tensors(tensors))
            flat[i] = original
            gflat[i] = (hi - lo) / (2 * eps)
        grads.append(grad)
    return AdapterParams.from_tensors(grads)


def finite_difference_input_grads(loss_fn, x, eps=1e-5):
    """Central finite differences of a scalar loss over an input matrix."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            original = x[i, j]
            x[i, j] = original + eps
            hi = loss_fn(x)
            x[i, j] = original - eps
            lo = loss_fn(x)
            x[i, j] = original
            grad[i, j] = (hi - lo) / (2 * eps)
    return grad


def max_relative_error(actual, expected, floor=1e-4):
    """Largest entrywise |a - e| / max(|a|, |e|, floor).

    The floor keeps near-zero entries from turning finite-difference noise
    into spurious relative blowups; for entries above the floor this is a
    plain relative error.
    """
    a = np.asarray(actual, dtype=np.float64)
    e = np.asarray(expected, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(e)), floor)
    return float(np.max(np.abs(a - e) / denom)) if a.size else 0.0
