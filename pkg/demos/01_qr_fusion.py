# %% [markdown]
# # Parameter fusion through QR factors
#
# The anti-forgetting mechanism decomposes each adapter weight matrix as
# W = Q R (thin Householder QR with a nonnegative R diagonal, so the
# factorization is unique) and rebuilds the next-stage weights inside the
# previous stage's column space:
#
#     r_next = beta * (q_prev^T q_curr) + (1 - beta) * r_prev
#     fused  = q_prev @ r_next
#
# This script walks the algebra at desk scale.

# %%
import numpy as np

from calfuse import FusionConfig, fuse_matrix, qr_decompose

rng = np.random.default_rng(0)
w_prev = rng.standard_normal((6, 6))
w_curr = rng.standard_normal((6, 6))

factors = qr_decompose(w_prev)
print("orthogonality defect:", np.linalg.norm(factors.q.T @ factors.q - np.eye(6)))
print("reconstruction error:", np.linalg.norm(factors.q @ factors.r - w_prev))
print("R diagonal (all nonnegative):", np.round(np.diag(factors.r), 3))

# %% [markdown]
# ## The beta endpoints
#
# beta = 0 keeps the previous weights; beta = 1 projects the new basis onto
# the old one. Everything in between trades plasticity against stability.

# %%
for beta in (0.0, 0.25, 0.55, 1.0):
    fused = fuse_matrix(FusionConfig(beta=beta), w_prev, w_curr)
    drift_prev = np.linalg.norm(fused - w_prev) / np.linalg.norm(w_prev)
    drift_curr = np.linalg.norm(fused - w_curr) / np.linalg.norm(w_curr)
    print(f"beta={beta:4.2f}  |fused - prev|={drift_prev:6.3f}  |fused - curr|={drift_curr:6.3f}")

# %% [markdown]
# ## Fused weights never leave the old column space
#
# Because the fused matrix is q_prev times something, projecting onto
# q_prev changes nothing — old directions are structurally preserved.

# %%
fused = fuse_matrix(FusionConfig(beta=0.55), w_prev, w_curr)
qp = qr_decompose(w_prev).q
residual = fused - qp @ (qp.T @ fused)
print("residual outside the previous column space:", np.linalg.norm(residual))

# %% [markdown]
# ## The r_inclusive variant
#
# Reading the recombination with the new stage's R included keeps the new
# task's scale information; both variants are exposed because either
# reading of the update is defensible.

# %%
literal = fuse_matrix(FusionConfig(beta=0.55, variant="literal"), w_prev, w_curr)
inclusive = fuse_matrix(FusionConfig(beta=0.55, variant="r_inclusive"), w_prev, w_curr)
print("literal      norm:", np.linalg.norm(literal))
print("r_inclusive  norm:", np.linalg.norm(inclusive))
print("difference   norm:", np.linalg.norm(literal - inclusive))
