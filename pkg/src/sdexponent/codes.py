"""Constellations, generator matrices, rate/power scaling and encoding."""

import itertools
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .matkernel import devec, singular_values

SCHEMA_VERSION = 1


def qam_alphabet(eta):
    """Gaussian integers with real and imaginary parts in [-eta, eta].

    Points are sorted lexicographically by (real, imag), which is the order
    the brute-force decoder uses for tie-breaking.
    """
    if eta < 0 or int(eta) != eta:
        raise ValueError(f"eta must be a nonnegative integer, got {eta}")
    eta = int(eta)
    side = np.arange(-eta, eta + 1)
    re, im = np.meshgrid(side, side, indexing="ij")
    return (re + 1j * im).reshape(-1)


def symbol_energy(eta):
    """Mean |s|^2 of a uniform symbol from ``qam_alphabet(eta)``."""
    return 2.0 * eta * (eta + 1) / 3.0


@dataclass(eq=False)
class CodeSpec:
    nt: int
    nr: int
    T: int
    G: np.ndarray
    name: str = "code"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=complex)
        k = self.nt * self.T
        if self.G.shape != (k, k):
            raise ValueError(f"G must be {k}x{k} for nt={self.nt}, T={self.T}; got {self.G.shape}")
        if self.nr < self.nt:
            raise ValueError(f"need nr >= nt, got nr={self.nr}, nt={self.nt}")
        if not np.all(np.isfinite(self.G)):
            raise ValueError("G has non-finite entries")
        sv = singular_values(self.G)
        if sv[0] <= 1e-12 * max(sv[-1], 1.0):
            raise ValueError("G is rank deficient")

    @property
    def kappa(self):
        return self.nt * self.T

    @property
    def gmin(self):
        """Smallest singular value of G."""
        return float(singular_values(self.G)[0])

    @property
    def gmax(self):
        return float(singular_values(self.G)[-1])

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "nt": self.nt,
            "nr": self.nr,
            "T": self.T,
            "kappa": self.kappa,
            "G": [[[float(z.real), float(z.imag)] for z in row] for row in self.G],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported CodeSpec schema_version {version!r}")
        G = np.array([[complex(re, im) for re, im in row] for row in d["G"]])
        spec = cls(nt=int(d["nt"]), nr=int(d["nr"]), T=int(d["T"]), G=G,
                   name=d.get("name", "code"), meta=dict(d.get("meta", {})))
        if "kappa" in d and int(d["kappa"]) != spec.kappa:
            raise ValueError("kappa does not equal nt*T")
        return spec

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps() + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def dft_matrix(n):
    """Unitary DFT matrix of size n."""
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / math.sqrt(n)


def default_thread_gamma(n):
    return complex(np.exp(1j * np.pi / (2 * n)))


def thread_position(l, j, n):
    """Matrix entry (row, col), 0-based, of symbol j of thread l (both 0-based)."""
    return j, (j - l) % n


def thread_layout(n):
    """n x n array whose entry is the 1-based thread index occupying it."""
    layout = np.zeros((n, n), dtype=int)
    for l in range(n):
        for j in range(n):
            row, col = thread_position(l, j, n)
            layout[row, col] = l + 1
    return layout


def threaded_generator(n, thread_gamma=None, C=None, nr=None, name=None):
    """Generator matrix of an n x n threaded code.

    Thread l carries ``B_l C s^(l)`` with ``B_l = diag(1, .., 1, g, .., g)``
    (l trailing entries equal to ``thread_gamma``); the stacked threads are
    then permuted from thread order into column-stacked vec(X) order.

    Args:
        n: number of antennas, which also equals the block length.
        thread_gamma: thread-separating scalar, default exp(i*pi/(2n)).
        C: unitary n x n component-code matrix, default the unitary DFT.
        nr: receive antennas for the returned spec, default n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    thread_gamma = default_thread_gamma(n) if thread_gamma is None else complex(thread_gamma)
    if thread_gamma == 0:
        raise ValueError("thread_gamma must be nonzero")
    C = dft_matrix(n) if C is None else np.asarray(C, dtype=complex)
    if C.shape != (n, n):
        raise ValueError(f"C must be {n}x{n}")
    if np.linalg.norm(C.conj().T @ C - np.eye(n)) > 1e-10:
        raise ValueError("C is not unitary")

    k = n * n
    upsilon = np.zeros((k, k), dtype=complex)
    for l in range(n):
        B = np.diag([1.0] * (n - l) + [thread_gamma] * l)
        upsilon[l * n:(l + 1) * n, l * n:(l + 1) * n] = B @ C

    G = np.zeros((k, k), dtype=complex)
    for l in range(n):
        for j in range(n):
            row, col = thread_position(l, j, n)
            G[col * n + row, :] = upsilon[l * n + j, :]

    return CodeSpec(nt=n, nr=n if nr is None else nr, T=n, G=G,
                    name=name or f"threaded-{n}",
                    meta={"thread_gamma": [thread_gamma.real, thread_gamma.imag]})


def round_half_up(x):
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class RateScaling:
    rho: float
    r: float
    eta: int
    theta: float
    degenerate: bool
    realized_rate: float  # bits per channel use
    target_rate: float

    @property
    def alphabet(self):
        return qam_alphabet(self.eta)


def scaling_for_rate(spec, r, rho):
    """Constellation half-side and power scale for multiplexing gain r at SNR rho.

    Returns a degenerate single-codeword scaling (eta = 0, theta = 1) when
    the rounded constellation collapses to the origin.
    """
    if not 0 <= r <= spec.nt:
        raise ValueError(f"r must be in [0, {spec.nt}], got {r}")
    if rho <= 1:
        raise ValueError(f"rho must exceed 1, got {rho}")
    kappa = spec.kappa
    eta = max(0, round_half_up((rho ** (r * spec.T / (2 * kappa)) - 1) / 2))
    target = r * math.log2(rho)
    if eta == 0:
        return RateScaling(rho, r, 0, 1.0, True, 0.0, target)
    fro2 = float(np.sum(np.abs(spec.G) ** 2))
    theta = math.sqrt(rho * spec.T / (symbol_energy(eta) * fro2))
    realized = 2 * kappa * math.log2(2 * eta + 1) / spec.T
    return RateScaling(rho, r, eta, theta, False, realized, target)


def encode(spec, scaling, s):
    """Map a symbol vector to the codeword vector x and matrix X (nt x T)."""
    s = np.asarray(s, dtype=complex)
    if s.shape != (spec.kappa,):
        raise ValueError(f"need {spec.kappa} symbols, got shape {s.shape}")
    eta = scaling.eta
    if (np.any(s.real != np.round(s.real)) or np.any(s.imag != np.round(s.imag))
            or np.any(np.abs(s.real) > eta) or np.any(np.abs(s.imag) > eta)):
        raise ValueError("symbol outside the constellation")
    x = scaling.theta * (spec.G @ s)
    return x, devec(x, spec.nt, spec.T)


def permute_columns(spec, perm):
    """Reorder the columns of G (0-based permutation); the codebook is unchanged."""
    perm = [int(p) for p in perm]
    if sorted(perm) != list(range(spec.kappa)):
        raise ValueError("perm is not a permutation of 0..kappa-1")
    return replace(spec, G=spec.G[:, perm], meta=dict(spec.meta))


def codebook(spec, scaling):
    """All codeword vectors theta*G*s; only for tiny codes."""
    alphabet = qam_alphabet(scaling.eta)
    S = np.array(list(itertools.product(alphabet, repeat=spec.kappa)))
    return scaling.theta * S @ spec.G.T
