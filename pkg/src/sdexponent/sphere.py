"""Depth-first sphere decoder with exact per-layer node accounting.

Layer k (1-based) of the search tree holds the partial vectors made of the
last k symbols. A node is *visited* iff its partial metric
||r_k - R_k s_k||^2 is within the squared radius; ``nodes_per_layer[k-1]``
counts exactly those nodes.
"""

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .matkernel import qr_thin

DECISION = "decision"
EMPTY_SPHERE = "empty_sphere"
BUDGET_OUTAGE = "budget_outage"

RADIUS_MODES = ("fixed", "adaptive_se", "infinite")

DEFAULT_ENUMERATION_CAP = 5_000_000


class EnumerationCapError(RuntimeError):
    """Raised instead of starting an exhaustive enumeration that is too large."""


@dataclass(frozen=True)
class SearchPolicy:
    """Radius rule and optional node budget.

    ``fixed`` uses xi^2 = z * log2(rho). ``adaptive_se`` starts from the same
    radius (or infinity when z is None) and shrinks it to every new leaf
    metric, visiting children in increasing-metric order. ``infinite``
    disables pruning.
    """

    radius_mode: str = "fixed"
    z: float | None = None
    budget: int | None = None

    def __post_init__(self):
        if self.radius_mode not in RADIUS_MODES:
            raise ValueError(f"radius_mode must be one of {RADIUS_MODES}")
        if self.radius_mode == "fixed" and (self.z is None or self.z <= 0):
            raise ValueError("fixed radius needs z > 0")
        if self.z is not None and self.z <= 0:
            raise ValueError("z must be positive")
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be nonnegative")

    def initial_radius_sq(self, rho):
        if self.radius_mode == "infinite" or self.z is None:
            return math.inf
        return self.z * math.log2(rho)


@dataclass
class SearchTrace:
    nodes_per_layer: np.ndarray
    outcome: str
    s_hat: np.ndarray | None
    metric: float
    radius_used: float
    degenerate: bool = False
    metric_evaluations: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def total_nodes(self):
        return int(self.nodes_per_layer.sum())

    @property
    def timed_out(self):
        return self.outcome == BUDGET_OUTAGE

    def to_dict(self):
        d = {
            "nodes_per_layer": [int(n) for n in self.nodes_per_layer],
            "total_nodes": self.total_nodes,
            "outcome": self.outcome,
            "radius_used": self.radius_used if math.isfinite(self.radius_used) else None,
            "metric": self.metric if math.isfinite(self.metric) else None,
            "degenerate": self.degenerate,
            "s_hat": None if self.s_hat is None else [[float(z.real), float(z.imag)] for z in self.s_hat],
        }
        d.update(self.meta)
        return d


class _BudgetExhausted(Exception):
    pass


def _lex_key(v):
    return tuple(itertools.chain.from_iterable((z.real, z.imag) for z in v))


def sd_search(M, y, constellation, policy, rho, R_tol=1e-12):
    """Sphere-decode y = M s + w over constellation^kappa.

    Returns a :class:`SearchTrace`. With a budget, the search stops as soon
    as one more visited node would exceed it; the trace then carries the
    best leaf found so far (if any) and outcome ``budget_outage``.
    """
    M = np.asarray(M, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if y.shape != (M.shape[0],):
        raise ValueError(f"y must have length {M.shape[0]}")
    Q, R = qr_thin(M)
    r = Q.conj().T @ y
    return search_triangular(R, r, constellation, policy, rho, R_tol=R_tol)


def search_triangular(R, r, constellation, policy, rho, R_tol=1e-12):
    """Same as :func:`sd_search` but on an already triangularised problem."""
    R = np.asarray(R, dtype=complex)
    r = np.asarray(r, dtype=complex)
    alphabet = np.asarray(constellation, dtype=complex)
    kappa = R.shape[1]
    diag = np.abs(np.diag(R))
    degenerate = bool(diag.min() <= R_tol * max(diag.max(), 1.0))

    se = policy.radius_mode == "adaptive_se"
    budget = policy.budget
    counts = np.zeros(kappa, dtype=np.int64)
    state = {"radius_sq": policy.initial_radius_sq(rho), "best": math.inf,
             "best_s": None, "total": 0, "evals": 0}
    s_hat = np.zeros(kappa, dtype=complex)

    def visit(level, partial):
        b = r[level] - R[level, level + 1:] @ s_hat[level + 1:]
        metrics = partial + np.abs(b - R[level, level] * alphabet) ** 2
        state["evals"] += alphabet.size
        order = np.argsort(metrics, kind="stable") if se else np.flatnonzero(metrics <= state["radius_sq"])
        layer = kappa - level - 1
        for idx in order:
            m = metrics[idx]
            if m > state["radius_sq"]:
                if se:
                    break
                continue
            if budget is not None and state["total"] >= budget:
                raise _BudgetExhausted
            state["total"] += 1
            counts[layer] += 1
            s_hat[level] = alphabet[idx]
            if level == 0:
                if m < state["best"] or (m == state["best"] and _lex_key(s_hat) < _lex_key(state["best_s"])):
                    state["best"] = m
                    state["best_s"] = s_hat.copy()
                    if se:
                        state["radius_sq"] = m
            else:
                visit(level - 1, m)

    try:
        visit(kappa - 1, 0.0)
        outcome = DECISION if state["best_s"] is not None else EMPTY_SPHERE
    except _BudgetExhausted:
        outcome = BUDGET_OUTAGE

    radius_sq = state["radius_sq"]
    return SearchTrace(
        nodes_per_layer=counts,
        outcome=outcome,
        s_hat=state["best_s"],
        metric=state["best"],
        radius_used=math.sqrt(radius_sq) if math.isfinite(radius_sq) else math.inf,
        degenerate=degenerate,
        metric_evaluations=state["evals"],
    )


def _enumerate_metrics(A, b, alphabet, k, cap, chunk=1 << 16):
    """Yield (index offset, metrics) for ||b - A s||^2 over all s in alphabet^k.

    Candidates are produced in lexicographic order of s.
    """
    n_alpha = alphabet.size
    total = n_alpha ** k
    if total > cap:
        raise EnumerationCapError(f"{n_alpha}^{k} = {total} candidates exceeds cap {cap}")
    weights = n_alpha ** np.arange(k - 1, -1, -1)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        digits = (idx[:, None] // weights[None, :]) % n_alpha
        S = alphabet[digits]
        resid = b[None, :] - S @ A.T
        yield start, np.sum(np.abs(resid) ** 2, axis=1), S


def brute_force_ml(M, y, constellation, cap=DEFAULT_ENUMERATION_CAP):
    """Exact argmin of ||y - M s||^2 by full enumeration.

    Exact ties go to the lexicographically smallest s (ordering points by
    real part, then imaginary part).
    """
    M = np.asarray(M, dtype=complex)
    y = np.asarray(y, dtype=complex)
    alphabet = np.asarray(sorted(np.asarray(constellation, dtype=complex),
                                 key=lambda z: (z.real, z.imag)))
    best, best_s = math.inf, None
    for _, metrics, S in _enumerate_metrics(M, y, alphabet, M.shape[1], cap):
        i = int(np.argmin(metrics))
        if metrics[i] < best:
            best, best_s = float(metrics[i]), S[i].copy()
    return best_s


def count_layer_nodes_oracle(R, r_vec, k, xi, constellation, cap=DEFAULT_ENUMERATION_CAP):
    """Count partial vectors of length k inside the layer-k sphere by enumeration."""
    R = np.asarray(R, dtype=complex)
    r_vec = np.asarray(r_vec, dtype=complex)
    alphabet = np.asarray(constellation, dtype=complex)
    if math.isinf(xi):
        total = alphabet.size ** k
        if total > cap:
            raise EnumerationCapError(f"{total} candidates exceeds cap {cap}")
        return int(total)
    Rk = R[-k:, -k:]
    rk = r_vec[-k:]
    count = 0
    for _, metrics, _ in _enumerate_metrics(Rk, rk, alphabet, k, cap):
        count += int(np.count_nonzero(metrics <= xi * xi))
    return count


def dump_traces(traces, path, seeds=None):
    """Write one JSON object per search."""
    with open(path, "w") as fh:
        for i, tr in enumerate(traces):
            d = tr.to_dict()
            if seeds is not None:
                d["seed"] = seeds[i]
            fh.write(json.dumps(d, sort_keys=True) + "\n")


def load_traces(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
