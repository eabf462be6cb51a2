"""Dense complex matrix primitives shared by the rest of the package."""

import numpy as np


def _as_matrix(A):
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def qr_thin(A):
    """Thin QR factorisation by Householder reflections.

    The diagonal of ``R`` is made real and nonnegative, which makes the
    factorisation unique for full column rank input.

    Args:
        A: complex matrix of shape (m, n) with m >= n.

    Returns:
        (Q, R) with Q of shape (m, n) having orthonormal columns and R of
        shape (n, n) upper triangular.
    """
    A = _as_matrix(A)
    m, n = A.shape
    if m < n:
        raise ValueError(f"qr_thin needs rows >= cols, got {m}x{n}")

    R = A.copy()
    reflectors = []
    for k in range(n):
        x = R[k:, k]
        norm_x = np.linalg.norm(x)
        if norm_x == 0.0:
            reflectors.append(None)
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x.copy()
        v[0] += phase * norm_x
        v /= np.linalg.norm(v)
        R[k:, k:] -= 2.0 * np.outer(v, v.conj() @ R[k:, k:])
        reflectors.append(v)

    Q = np.eye(m, n, dtype=complex)
    for k in range(n - 1, -1, -1):
        v = reflectors[k]
        if v is None:
            continue
        Q[k:, :] -= 2.0 * np.outer(v, v.conj() @ Q[k:, :])

    R = np.triu(R[:n, :])
    d = np.diag(R)
    mag = np.abs(d)
    phases = np.where(mag > 0, d / np.where(mag > 0, mag, 1.0), 1.0)
    R = phases.conj()[:, None] * R
    Q = Q * phases[None, :]
    # the diagonal is real after normalisation; drop round-off imaginary parts
    R[np.diag_indices(n)] = np.abs(np.diag(R))
    return Q, R


def singular_values(A):
    """Singular values in ascending order (smallest first)."""
    A = _as_matrix(A)
    if A.shape[0] < A.shape[1]:
        raise ValueError(f"singular_values needs rows >= cols, got {A.shape}")
    return np.sort(np.linalg.svd(A, compute_uv=False))


def kron_identity_apply(H, T, x):
    """Return ``(I_T kron H) @ x`` without forming the Kronecker product.

    ``x`` is read as the column-stacked vectorisation of an nt x T matrix,
    so the result is vec(H @ X).
    """
    H = np.asarray(H, dtype=complex)
    x = np.asarray(x, dtype=complex)
    nr, nt = H.shape
    if x.ndim != 1 or x.shape[0] != nt * T:
        raise ValueError(f"x must have length nt*T = {nt * T}, got {x.shape}")
    X = x.reshape(T, nt).T
    return (H @ X).T.reshape(-1)


def vec(X):
    """Column-stacking vectorisation."""
    return np.asarray(X).T.reshape(-1)


def devec(x, rows, cols):
    """Inverse of :func:`vec`."""
    return np.asarray(x).reshape(cols, rows).T
