"""Numerical checks of the inequalities and structural conditions behind the exponent.

Every suite reports the smallest slack it observed rather than a bare
boolean. For inequality suites the tolerance is folded into the slack, so
``passed`` is exactly ``margin >= 0``.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import qr as pivoted_qr

from .channel import STREAM_VERIFY, complex_gaussian, rng_stream
from .codes import permute_columns
from .matkernel import devec, kron_identity_apply, qr_thin, singular_values

log = logging.getLogger(__name__)

STREAM_VOLUME = STREAM_VERIFY
STREAM_INTERLACE = STREAM_VERIFY + 1
STREAM_PERTURB = STREAM_VERIFY + 2
STREAM_RANK = STREAM_VERIFY + 3
STREAM_ORDERING = STREAM_VERIFY + 4

NEAR_VIOLATION = 1e-6
DEFAULT_COUNT_CAP = 2_000_000


class VerificationCapError(RuntimeError):
    """An exhaustive count was refused because it exceeds the configured cap."""


class OrderingError(RuntimeError):
    pass


@dataclass
class Verdict:
    suite: str
    passed: bool
    margin: float
    trials: int
    seed: int | None = None
    detail: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_dict(self, with_detail=False):
        d = asdict(self)
        if not with_detail:
            d.pop("detail")
        d["margin"] = _json_float(d["margin"])
        return d

    def to_json(self, with_detail=False):
        return json.dumps(self.to_dict(with_detail), sort_keys=True)


def _json_float(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def _reduce(suite, records, trials, seed, nontrivial=None):
    """Fold per-record slacks into a Verdict (min over margins, order independent)."""
    slacks = [rec["slack"] for rec in records]
    margin = min(slacks) if slacks else math.inf
    warns = []
    near = [rec for rec in records
            if (nontrivial is None or nontrivial(rec)) and 0 <= rec["slack"] < NEAR_VIOLATION]
    if near:
        msg = f"{suite}: {len(near)} near-violation(s), smallest slack {min(r['slack'] for r in near):.3g}"
        log.warning(msg)
        warns.append(msg)
    return Verdict(suite=suite, passed=bool(margin >= 0), margin=float(margin),
                   trials=trials, seed=seed, detail=records, warnings=warns)


# --- integer points in ellipsoids ------------------------------------------------

def _integer_box(lo, hi, cap):
    lo = np.ceil(np.asarray(lo) - 1e-12).astype(int)
    hi = np.floor(np.asarray(hi) + 1e-12).astype(int)
    if np.any(hi < lo):
        return np.zeros((0, len(lo)), dtype=int)
    sizes = hi - lo + 1
    total = int(np.prod(sizes.astype(float)))
    if total > cap:
        raise VerificationCapError(f"bounding box holds {total} points, cap is {cap}")
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))


def count_ellipsoid_points(D, c, xi, eta=None, cap=DEFAULT_COUNT_CAP):
    """Count integer d with ||c - D d|| <= xi (and |d_i| <= eta when given)."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    smin = singular_values(D)[0]
    if smin <= 0:
        raise ValueError("D must be nonsingular")
    center = np.linalg.solve(D, c)
    half = xi / smin
    lo, hi = center - half, center + half
    if eta is not None:
        lo, hi = np.maximum(lo, -eta), np.minimum(hi, eta)
    pts = _integer_box(lo, hi, cap)
    if len(pts) == 0:
        return 0
    resid = c[None, :] - pts @ D.T
    return int(np.count_nonzero(np.sum(resid ** 2, axis=1) <= xi * xi))


def volume_upper_bound(D, xi, eta):
    n = D.shape[0]
    sv = singular_values(np.atleast_2d(D))
    return float(np.prod([math.sqrt(n) + min(2 * xi / s, 2 * math.sqrt(n) * eta) for s in sv]))


def volume_lower_bound(D, xi):
    n = D.shape[0]
    sv = singular_values(np.atleast_2d(D))
    return float(np.prod([max(2 * xi / (math.sqrt(n) * s) - math.sqrt(n), 0.0) for s in sv]))


def volume_instance(D, c, xi, eta, cap=DEFAULT_COUNT_CAP):
    """Counts and both bounds for one ellipsoid/box instance."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    inside_box = count_ellipsoid_points(D, c, xi, eta, cap)
    inside = count_ellipsoid_points(D, c, xi, None, cap)
    ub, lb = volume_upper_bound(D, xi, eta), volume_lower_bound(D, xi)
    return {"n": D.shape[0], "xi": float(xi), "eta": int(eta), "count_box": inside_box,
            "count": inside, "upper": ub, "lower": lb,
            "slack": min(ub - inside_box, inside - lb)}


def random_volume_instance(rng, n, xi_range=(0.1, 10.0), eta_range=(1, 8), axis_range=(0.05, 6.0)):
    """Random (D, c, xi, eta) whose ellipsoid semi-axes stay within ``axis_range``.

    D = U diag(sigma) V^T with Haar-like orthogonal U, V; the semi-axes
    xi/sigma_i are log-uniform so exhaustive counting stays cheap, and the
    centre is uniform over a box slightly larger than the hypercube.
    """
    xi = math.exp(rng.uniform(math.log(xi_range[0]), math.log(xi_range[1])))
    eta = int(rng.integers(eta_range[0], eta_range[1] + 1))
    axes = np.exp(rng.uniform(math.log(axis_range[0]), math.log(axis_range[1]), n))
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    D = U @ np.diag(xi / axes) @ V.T
    center = rng.uniform(-eta - 2, eta + 2, n)
    return D, D @ center, xi, eta


def check_volume_bounds(trials, seed=0, n_max=4, n=None, cap=DEFAULT_COUNT_CAP):
    """Check the lattice-point upper bound (ellipsoid and box) and lower bound (ellipsoid).

    Args:
        trials: number of random instances.
        seed: global seed; instance t uses its own counter-based stream.
        n_max: dimensions are drawn uniformly from 1..n_max unless ``n`` is set.
        n: fixed dimension (at most 6).
        cap: largest bounding box that will be enumerated.
    """
    if (n or n_max) > 6:
        raise ValueError("dimension must be at most 6")
    records = []
    for t in range(trials):
        rng = rng_stream(seed, STREAM_VOLUME, t)
        dim = n if n is not None else int(rng.integers(1, n_max + 1))
        # keep the widest bounding box, about (2*axis + 1)^n points, under the cap
        top = min(6.0, 0.5 * (cap ** (1.0 / dim) - 1.0) - 0.5)
        D, c, xi, eta = random_volume_instance(rng, dim, axis_range=(0.05, top))
        rec = volume_instance(D, c, xi, eta, cap)
        rec["trial"] = t
        records.append(rec)
    return _reduce("volume", records, trials, seed, nontrivial=_volume_nontrivial)


def _volume_nontrivial(rec):
    # an empty ellipsoid, or a fully covered box in one dimension (where the
    # upper bound is exactly 2*eta + 1), meets a bound with equality by design
    if rec["lower"] == 0 and rec["count_box"] == 0:
        return False
    return not (rec["n"] == 1 and rec["count_box"] == 2 * rec["eta"] + 1)


# --- singular values of trailing blocks ------------------------------------------

def interlacing_records(M, rel_tol=1e-8):
    """Slack of sigma_{i+kappa-k}(R) >= sigma_i(R_k) >= sigma_i(R) for all k and i."""
    _, R = qr_thin(M)
    kappa = R.shape[0]
    sR = singular_values(R)
    scale = max(sR[-1], np.finfo(float).tiny)
    tol = rel_tol * scale
    records = []
    for k in range(1, kappa + 1):
        sk = singular_values(R[kappa - k:, kappa - k:])
        upper = sR[np.arange(k) + kappa - k] - sk
        lower = sk - sR[:k]
        slack = (min(upper.min(), lower.min()) + tol) / scale
        records.append({"k": k, "slack": float(slack), "trivial": k == kappa})
    return records


def check_interlacing(trials, seed=0, kappa=8, rows=None):
    records = []
    for t in range(trials):
        rng = rng_stream(seed, STREAM_INTERLACE, t)
        m = rows if rows is not None else kappa + int(rng.integers(0, 3))
        M = complex_gaussian(rng, (m, kappa))
        for rec in interlacing_records(M):
            rec["trial"] = t
            records.append(rec)
    return _reduce("interlace", records, trials, seed, nontrivial=lambda rec: not rec["trivial"])


def perturbation_records(A, k, rel_tol=1e-8):
    """Slack of the R22 singular-value bound for a split with a k x k trailing block.

    Only indices i meeting the precondition sigma_i(A) < sigma_1(A_1) are
    checked; others are reported with ``applies=False``.
    """
    A = np.asarray(A, dtype=complex)
    n = A.shape[1]
    if not 1 <= k < n:
        raise ValueError("need 1 <= k < n")
    _, R = qr_thin(A)
    sA = singular_values(A)
    sA1 = singular_values(A[:, :n - k])[0]
    s22 = singular_values(R[n - k:, n - k:])
    records = []
    for i in range(k):
        applies = bool(sA[i] < sA1)
        bound = (sA[-1] / sA1 + 1.0) * sA[i] if sA1 > 0 else math.inf
        slack = (bound + rel_tol * sA[-1] - s22[i]) / max(sA[-1], np.finfo(float).tiny)
        records.append({"i": i + 1, "k": k, "applies": applies,
                        "slack": float(slack) if applies else math.inf})
    return records


def random_perturbation_matrix(rng, m, n):
    """Gaussian A, or (every other draw) one with several tiny singular values."""
    A = complex_gaussian(rng, (m, n))
    if rng.random() < 0.5:
        U, _ = np.linalg.qr(complex_gaussian(rng, (m, n)))
        V, _ = np.linalg.qr(complex_gaussian(rng, (n, n)))
        sv = np.exp(rng.uniform(math.log(1e-6), math.log(10.0), n))
        A = U @ np.diag(sv) @ V.conj().T
    return A


def check_perturbation_lemma(trials, seed=0, m=6, n=4, k=2):
    """Check the trailing-block bound; k=None draws the split uniformly per trial."""
    records = []
    for t in range(trials):
        rng = rng_stream(seed, STREAM_PERTURB, t)
        kk = k if k is not None else int(rng.integers(1, n))
        A = random_perturbation_matrix(rng, m, n)
        for rec in perturbation_records(A, kk):
            rec["trial"] = t
            records.append(rec)
    applied = [rec for rec in records if rec["applies"]]
    verdict = _reduce("perturb", applied, trials, seed)
    verdict.detail = records
    return verdict


# --- rank condition and column ordering -------------------------------------------

def haar_unitary(rng, n):
    """Haar-distributed n x n unitary from the phase-normalised QR of a Gaussian matrix."""
    Q, _ = qr_thin(complex_gaussian(rng, (n, n)))
    return Q


def rank_condition_sigma(G, nt, T, U_p):
    """Smallest singular value of (I_T kron U_p^H) G_{|p}, p = U_p.shape[1]."""
    p = U_p.shape[1]
    cols = [kron_identity_apply(U_p.conj().T, T, G[:, j]) for j in range(p * T)]
    return float(singular_values(np.column_stack(cols))[0])


def check_rank_condition(spec, trials=100, tol=1e-6, seed=0):
    """Per-p verdicts for the rank condition under Haar-random U_p.

    ``tol`` is relative to the spectral norm of G; margin is the smallest
    sigma_1 / ||G|| - tol over all draws.
    """
    if trials < 1 or tol <= 0:
        raise ValueError("need trials >= 1 and tol > 0")
    scale = spec.gmax
    verdicts = []
    for p in range(1, spec.nt + 1):
        records = []
        for t in range(trials):
            U = haar_unitary(rng_stream(seed, STREAM_RANK, p, t), spec.nt)[:, :p]
            s = rank_condition_sigma(spec.G, spec.nt, spec.T, U)
            records.append({"p": p, "trial": t, "sigma1": s, "slack": s / scale - tol})
        v = _reduce(f"rank[p={p}]", records, trials, seed)
        v.warnings = []  # margins here are not inequality slacks, no near-violation notion
        verdicts.append(v)
    return verdicts


def rank_condition_passes(spec, trials=100, tol=1e-6, seed=0):
    return all(v.passed for v in check_rank_condition(spec, trials, tol, seed))


def find_tight_ordering(spec, tol=1e-6, seed=0, trials=20):
    """Column permutation (0-based) under which the rank condition holds for every p.

    The identity is returned when it already passes. Otherwise, starting
    from a random unitary U_nt, U_{p-1} is U_p with its last column removed
    and pT columns are picked from the previous selection so that
    (I_T kron U_p^H) applied to them is invertible; pivoted QR does the
    picking. The final order lists S_1, then S_2 minus S_1, and so on.
    """
    if rank_condition_passes(spec, trials, tol, seed):
        return list(range(spec.kappa))
    nt, T = spec.nt, spec.T
    U = haar_unitary(rng_stream(seed, STREAM_ORDERING, 0), nt)
    selected = list(range(spec.kappa))
    chain = [selected]
    for p in range(nt - 1, 0, -1):
        Up = U[:, :p]
        A = np.column_stack([kron_identity_apply(Up.conj().T, T, spec.G[:, j]) for j in selected])
        _, R, piv = pivoted_qr(A, pivoting=True, mode="economic")
        keep = piv[:p * T]
        diag = np.abs(np.diag(R))[:p * T]
        if diag.min() <= tol * max(diag.max(), 1.0):
            raise OrderingError(f"no {p * T} independent columns found at p={p}")
        selected = sorted(selected[i] for i in keep)
        chain.append(selected)
    order, seen = [], set()
    for S in reversed(chain):
        for j in S:
            if j not in seen:
                order.append(j)
                seen.add(j)
    if not rank_condition_passes(permute_columns(spec, order), trials, tol, seed):
        raise OrderingError("constructed ordering does not satisfy the rank condition")
    return order


def shared_right_factor_generator(nt, T, seed=0):
    """Full-rank G whose first T columns are vec(b_j a^H) for one shared a.

    Then (I_T kron u^H) applied to those columns is (u^H b_j) vec(a^H), which
    has rank one, so the rank condition fails at p = 1 for every u when T >= 2.
    Needs T <= nt, since T matrices b_j a^H only span an nt-dimensional space.
    """
    if not 2 <= T <= nt:
        raise ValueError("need 2 <= T <= nt")
    rng = rng_stream(seed, STREAM_ORDERING, 1)
    kappa = nt * T
    a = complex_gaussian(rng, T)
    cols = [np.outer(complex_gaussian(rng, nt), a.conj()).T.reshape(-1) for _ in range(T)]
    G = np.column_stack(cols + [complex_gaussian(rng, kappa) for _ in range(kappa - T)])
    return G


# --- non-vanishing determinant probe ----------------------------------------------

def min_determinant_probe(spec, bound, cap=DEFAULT_COUNT_CAP):
    """Smallest |det X| over nonzero integer symbol vectors with |Re|, |Im| <= bound.

    A finite search, not a certificate: the NVD infimum ranges over all
    nonzero Gaussian-integer vectors.
    """
    if spec.nt != spec.T:
        raise ValueError("determinant probe needs square codewords (nt == T)")
    side = 2 * int(bound) + 1
    kappa = spec.kappa
    total = side ** (2 * kappa)
    if total > cap:
        raise VerificationCapError(f"{total} symbol vectors exceeds cap {cap}")
    levels = np.arange(-bound, bound + 1)
    points = (levels[:, None] + 1j * levels[None, :]).reshape(-1)
    best = math.inf
    chunk = 1 << 15
    n_pts = points.size
    weights = n_pts ** np.arange(kappa - 1, -1, -1)
    zero_index = sum(int(w) * (n_pts // 2) for w in weights)
    for start in range(0, n_pts ** kappa, chunk):
        idx = np.arange(start, min(start + chunk, n_pts ** kappa))
        idx = idx[idx != zero_index]
        S = points[(idx[:, None] // weights[None, :]) % n_pts]
        X = (S @ spec.G.T).reshape(len(idx), spec.T, spec.nt).transpose(0, 2, 1)
        dets = np.abs(np.linalg.det(X))
        if dets.size:
            best = min(best, float(dets.min()))
    return best


def codeword_matrix(spec, s):
    return devec(spec.G @ np.asarray(s, dtype=complex), spec.nt, spec.T)


SUITES = ("volume", "interlace", "perturb", "rank", "nvd")


def run_suite(name, spec=None, trials=None, seed=0, nvd_bound=1):
    """Run one named suite and return a list of Verdicts."""
    if name == "volume":
        return [check_volume_bounds(trials or 1000, seed)]
    if name == "interlace":
        return [check_interlacing(trials or 1000, seed)]
    if name == "perturb":
        return [check_perturbation_lemma(trials or 1000, seed)]
    if name == "rank":
        return check_rank_condition(spec, trials or 100, seed=seed)
    if name == "nvd":
        value = min_determinant_probe(spec, nvd_bound)
        return [Verdict(suite="nvd", passed=value > 0, margin=value, trials=1, seed=seed,
                        detail=[{"bound": nvd_bound, "min_abs_det": value}])]
    raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")
