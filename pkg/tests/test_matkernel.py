import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sdexponent.matkernel import devec, kron_identity_apply, qr_thin, singular_values, vec

from conftest import crandn


def test_qr_identity():
    Q, R = qr_thin(np.eye(3))
    np.testing.assert_allclose(Q, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(R, np.eye(3), atol=1e-15)


def test_qr_single_column_normalisation():
    Q, R = qr_thin(np.array([[0.0], [2.0]]))
    np.testing.assert_allclose(Q, [[0.0], [1.0]], atol=1e-15)
    np.testing.assert_allclose(R, [[2.0]], atol=1e-15)


def test_qr_random_6x4(rng):
    A = crandn(rng, 6, 4)
    Q, R = qr_thin(A)
    assert Q.shape == (6, 4) and R.shape == (4, 4)
    assert np.linalg.norm(Q @ R - A) <= 1e-10 * np.linalg.norm(A)
    assert np.linalg.norm(Q.conj().T @ Q - np.eye(4)) <= 1e-10


def test_qr_rejects_wide():
    with pytest.raises(ValueError):
        qr_thin(np.ones((2, 3)))


def test_qr_rejects_nonfinite():
    with pytest.raises(ValueError):
        qr_thin(np.array([[np.nan], [1.0]]))


def test_qr_residuals_over_many_sizes(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 17))
        m = int(rng.integers(n, 17))
        A = crandn(rng, m, n)
        Q, R = qr_thin(A)
        assert np.linalg.norm(Q @ R - A) <= 1e-10 * np.linalg.norm(A)
        assert np.linalg.norm(Q.conj().T @ Q - np.eye(n)) <= 1e-10
        assert np.allclose(np.tril(R, -1), 0)
        d = np.diag(R)
        assert np.all(d.imag == 0) and np.all(d.real >= 0)


def test_qr_matches_reference_up_to_phase(rng):
    # oracle: numpy's LAPACK QR, with the diagonal phases removed
    A = crandn(rng, 7, 5)
    Qn, Rn = np.linalg.qr(A)
    ph = np.diag(Rn) / np.abs(np.diag(Rn))
    Q, R = qr_thin(A)
    np.testing.assert_allclose(R, ph.conj()[:, None] * Rn, atol=1e-12)
    np.testing.assert_allclose(Q, Qn * ph[None, :], atol=1e-12)


def test_qr_rank_deficient_column():
    A = np.array([[1.0, 0.0, 1.0], [0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    Q, R = qr_thin(A)
    np.testing.assert_allclose(Q @ R, A, atol=1e-12)
    assert np.linalg.norm(Q.conj().T @ Q - np.eye(3)) < 1e-12


@pytest.mark.parametrize("A, expected", [
    (np.diag([3.0, 1.0]), [1.0, 3.0]),
    (np.zeros((2, 2)), [0.0, 0.0]),
    (np.array([[0.0], [2.0]]), [2.0]),
])
def test_singular_values_examples(A, expected):
    np.testing.assert_allclose(singular_values(A), expected, atol=1e-15)


def test_singular_values_eigen_oracle(rng):
    for _ in range(50):
        A = crandn(rng, 4, 3)
        oracle = np.sqrt(np.clip(np.linalg.eigvalsh(A.conj().T @ A), 0, None))
        np.testing.assert_allclose(singular_values(A), oracle, rtol=1e-8)


def test_singular_values_rejects_wide():
    with pytest.raises(ValueError):
        singular_values(np.ones((1, 2)))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_singular_values_sorted_nonnegative(A):
    if A.shape[0] < A.shape[1]:
        A = A.T
    sv = singular_values(A)
    assert sv.shape == (A.shape[1],)
    assert np.all(sv >= 0)
    assert np.all(np.diff(sv) >= 0)


def test_kron_apply_t1_is_matvec(rng):
    H = crandn(rng, 3, 2)
    x = crandn(rng, 2)
    np.testing.assert_allclose(kron_identity_apply(H, 1, x), H @ x, atol=1e-14)


def test_kron_apply_identity(rng):
    x = crandn(rng, 4)
    np.testing.assert_array_equal(kron_identity_apply(np.eye(2), 2, x), x)


@pytest.mark.parametrize("nr,nt,T", [(2, 2, 3), (3, 2, 3), (4, 1, 2), (2, 2, 1)])
def test_kron_apply_explicit_oracle(rng, nr, nt, T):
    H = crandn(rng, nr, nt)
    x = crandn(rng, nt * T)
    explicit = np.kron(np.eye(T), H) @ x
    np.testing.assert_allclose(kron_identity_apply(H, T, x), explicit, atol=1e-12)


def test_kron_apply_length_mismatch():
    with pytest.raises(ValueError):
        kron_identity_apply(np.eye(2), 2, np.ones(3))


@pytest.mark.parametrize("nt,T", [(2, 2), (3, 2), (2, 4)])
def test_kron_singular_value_multiplicity(rng, nt, T):
    H = crandn(rng, nt + 1, nt)
    sv_big = singular_values(np.kron(np.eye(T), H))
    sv_H = singular_values(H)
    expected = np.array([sv_H[int(np.ceil(i / T)) - 1] for i in range(1, nt * T + 1)])
    np.testing.assert_allclose(sv_big, expected, atol=1e-10)


def test_vec_devec_roundtrip(rng):
    X = crandn(rng, 3, 4)
    x = vec(X)
    np.testing.assert_array_equal(x[:3], X[:, 0])
    np.testing.assert_array_equal(devec(x, 3, 4), X)
