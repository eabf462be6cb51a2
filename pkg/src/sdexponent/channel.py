"""Quasi-static Rayleigh channel, effective code-channel matrix and singularity levels."""

import math
from dataclasses import dataclass

import numpy as np

from .matkernel import kron_identity_apply, singular_values

# stream ids for rng_stream; disjoint per purpose so draws never alias
STREAM_CHANNEL = 1
STREAM_SYMBOLS = 2
STREAM_NOISE = 3
STREAM_VERIFY = 10


def rng_stream(seed, stream_id, *draw_index):
    """Generator keyed by (seed, stream id, draw index).

    Streams are derived from the key alone, so a draw does not depend on
    which other draws were made before it or on which worker made it.
    """
    key = (int(stream_id),) + tuple(int(i) for i in draw_index)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


def complex_gaussian(rng, shape):
    """i.i.d. CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def db_to_linear(snr_db):
    return 10.0 ** (snr_db / 10.0)


@dataclass
class ChannelRealization:
    H: np.ndarray
    rho: float = float("nan")


@dataclass(frozen=True)
class SingularityProfile:
    alpha: tuple  # nonincreasing

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if np.any(np.diff(a) > 0):
            raise ValueError("singularity levels must be nonincreasing")

    def as_array(self):
        return np.asarray(self.alpha, dtype=float)


def sample_channel(nr, nt, rng, rho=float("nan")):
    if nr < nt or nt < 1:
        raise ValueError(f"need nr >= nt >= 1, got nr={nr}, nt={nt}")
    return ChannelRealization(complex_gaussian(rng, (nr, nt)), rho)


def effective_matrix(H, spec, theta):
    """Code-channel matrix M = theta (I_T kron H) G, shape (nr*T, kappa)."""
    H = np.asarray(H, dtype=complex)
    if H.shape[1] != spec.nt:
        raise ValueError(f"H has {H.shape[1]} columns, code has nt={spec.nt}")
    cols = [kron_identity_apply(H, spec.T, spec.G[:, j]) for j in range(spec.kappa)]
    return theta * np.column_stack(cols)


def singularity_levels(H, rho):
    """alpha_i = -log2 sigma_i(H^H H) / log2 rho, returned nonincreasing.

    Numerically zero singular values give alpha = +inf.
    """
    if rho <= 1:
        raise ValueError("rho must exceed 1")
    sv = singular_values(H)
    tiny = max(H.shape) * np.finfo(float).eps * max(sv[-1], np.finfo(float).tiny)
    alpha = []
    for s in sv:
        if s <= tiny:
            alpha.append(math.inf)
        else:
            alpha.append(-2.0 * math.log2(s) / math.log2(rho))
    return SingularityProfile(tuple(alpha))


def receive(H, X, rng, zero_noise=False):
    """Y = H X + W with i.i.d. CN(0, 1) noise."""
    H = np.asarray(H, dtype=complex)
    X = np.asarray(X, dtype=complex)
    if H.shape[1] != X.shape[0]:
        raise ValueError(f"H is {H.shape}, X is {X.shape}")
    Y = H @ X
    if not zero_noise:
        Y = Y + complex_gaussian(rng, Y.shape)
    return Y


def in_outage(alpha, r):
    a = alpha.as_array() if isinstance(alpha, SingularityProfile) else np.asarray(alpha, float)
    return float(np.sum(np.maximum(1.0 - a, 0.0))) < r
