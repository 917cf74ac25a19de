import numpy as np
import pytest

from calfuse.errors import ValidationError
from calfuse.linalg import matmul, qr_decompose, transpose

from oracles import gram_schmidt_qr


def frob(a):
    return np.linalg.norm(a, "fro")


def check_factors(w, factors, tol=1e-10):
    q, r = factors.q, factors.r
    m, n = w.shape
    k = min(m, n)
    assert q.shape == (m, k) and r.shape == (k, n)
    assert frob(q.T @ q - np.eye(k)) < tol
    assert np.all(r[np.tril_indices(k, -1)[0], np.tril_indices(k, -1)[1]] == 0.0)
    assert np.all(np.diag(r) >= 0)
    assert frob(q @ r - w) <= tol * max(frob(w), 1.0)


def test_identity_factors_to_identity():
    f = qr_decompose(np.eye(3))
    np.testing.assert_array_equal(f.q, np.eye(3))
    np.testing.assert_array_equal(f.r, np.eye(3))


def test_known_2x2():
    w = np.array([[3.0, 0.0], [4.0, 5.0]])
    f = qr_decompose(w)
    np.testing.assert_allclose(f.q, [[0.6, -0.8], [0.8, 0.6]], atol=1e-12)
    np.testing.assert_allclose(f.r, [[5.0, 4.0], [0.0, 3.0]], atol=1e-12)


def test_seeded_8x8_reconstruction():
    w = np.random.default_rng(7).standard_normal((8, 8))
    f = qr_decompose(w)
    assert frob(f.q @ f.r - w) / frob(w) < 1e-10


@pytest.mark.parametrize("shape", [(2, 2), (5, 3), (16, 16), (40, 12), (64, 64)])
def test_factor_contract_across_shapes(shape):
    rng = np.random.default_rng(hash(shape) % 2**32)
    for _ in range(5):
        w = rng.standard_normal(shape)
        check_factors(w, qr_decompose(w))


def test_orthogonality_at_256():
    w = np.random.default_rng(11).standard_normal((256, 256))
    f = qr_decompose(w)
    assert frob(f.q.T @ f.q - np.eye(256)) < 1e-10


def test_matches_gram_schmidt_oracle():
    rng = np.random.default_rng(3)
    for m, n in [(4, 4), (8, 8), (10, 6)]:
        w = rng.standard_normal((m, n))
        f = qr_decompose(w)
        q_ref, r_ref = gram_schmidt_qr(w)
        np.testing.assert_allclose(f.q, q_ref, atol=1e-10)
        np.testing.assert_allclose(f.r, r_ref, atol=1e-10)


def test_deterministic_bit_identical():
    w = np.random.default_rng(5).standard_normal((12, 12))
    f1 = qr_decompose(w)
    f2 = qr_decompose(w.copy())
    assert np.array_equal(f1.q, f2.q) and np.array_equal(f1.r, f2.r)


def test_rank_deficient_column_is_tolerated():
    w = np.array([[1.0, 0.0, 2.0], [0.0, 0.0, 3.0], [0.0, 0.0, 4.0]])
    f = qr_decompose(w)
    assert f.r[1, 1] == 0.0
    assert frob(f.q.T @ f.q - np.eye(3)) < 1e-10
    assert frob(f.q @ f.r - w) < 1e-10


def test_all_zero_matrix():
    f = qr_decompose(np.zeros((4, 3)))
    assert np.all(np.diag(f.r) == 0.0)
    assert frob(f.q.T @ f.q - np.eye(3)) < 1e-10


def test_nonfinite_rejected():
    with pytest.raises(ValidationError):
        qr_decompose(np.array([[1.0, np.nan], [0.0, 1.0]]))
    with pytest.raises(ValidationError):
        qr_decompose(np.array([[np.inf, 0.0], [0.0, 1.0]]))


def test_matmul_identity_and_hand_case():
    w = np.random.default_rng(0).standard_normal((3, 3))
    np.testing.assert_array_equal(matmul(np.eye(3), w), w)
    out = matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[0.0], [1.0]]))
    np.testing.assert_array_equal(out, [[2.0], [4.0]])


def test_matmul_associativity():
    rng = np.random.default_rng(9)
    a, b, c = (rng.standard_normal((5, 5)) for _ in range(3))
    left = matmul(matmul(a, b), c)
    right = matmul(a, matmul(b, c))
    assert np.max(np.abs(left - right)) < 1e-12


def test_matmul_dimension_mismatch():
    with pytest.raises(ValidationError):
        matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_transpose():
    np.testing.assert_array_equal(transpose([[5.0]]), [[5.0]])
    np.testing.assert_array_equal(
        transpose([[1.0, 2.0], [3.0, 4.0]]), [[1.0, 3.0], [2.0, 4.0]]
    )
    w = np.random.default_rng(2).standard_normal((7, 3))
    np.testing.assert_array_equal(transpose(transpose(w)), w)
