"""Analytical SD complexity exponents.

The central problem maximises the conditional exponent

    cbar(r : alpha) = sum_i T * clamp(r/nt - 1 + alpha_i, 0, r/nt)

over singularity levels alpha_1 >= ... >= alpha_nt >= 0 whose weighted
sum stays within a diversity budget d. The greedy solver raises alpha_1 to
1, then alpha_2, and so on until the budget is spent; a grid search is kept
alongside as an independent check.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

log = logging.getLogger(__name__)

GREEDY = "greedy"
GRID_ORACLE = "grid_oracle"


def rayleigh_weights(nt, nr):
    """Rate-function weights nr - nt + 2i - 1, i = 1..nt."""
    return np.array([nr - nt + 2 * i - 1 for i in range(1, nt + 1)], dtype=float)


def rate_function(alpha, nt, nr, weights=None):
    """Large-deviation rate of the singularity levels; +inf off the ordered cone."""
    a = np.asarray(alpha, dtype=float)
    if a.shape != (nt,):
        raise ValueError(f"alpha must have length {nt}")
    if np.any(np.diff(a) > 0) or a[-1] < 0:
        return math.inf
    w = rayleigh_weights(nt, nr) if weights is None else np.asarray(weights, float)
    return float(w @ a)


def conditional_exponent(r, alpha, nt, T):
    a = np.asarray(alpha, dtype=float)
    q = r / nt
    return float(T * np.sum(np.clip(q - 1.0 + a, 0.0, q)))


class DiversityModel:
    """Diversity gain d(r) as a piecewise-linear function.

    Use :meth:`dmt_optimal` for (nt - k)(nr - k) at integers k, or
    :meth:`explicit` for a user table of (r, d) breakpoints.
    """

    def __init__(self, rs, ds, kind="explicit"):
        rs = [float(r) for r in rs]
        ds = [float(d) for d in ds]
        if len(rs) != len(ds) or not rs:
            raise ValueError("need matching, non-empty breakpoint lists")
        if any(b <= a for a, b in zip(rs, rs[1:])):
            raise ValueError("breakpoints must be strictly increasing in r")
        if any(b > a + 1e-12 for a, b in zip(ds, ds[1:])):
            raise ValueError("d must be nonincreasing in r")
        self.rs, self.ds, self.kind = rs, ds, kind

    @classmethod
    def dmt_optimal(cls, nt, nr):
        ks = list(range(nt + 1))
        return cls(ks, [(nt - k) * (nr - k) for k in ks], kind="dmt_optimal")

    @classmethod
    def explicit(cls, table):
        table = sorted(table)
        return cls([r for r, _ in table], [d for _, d in table])

    def __call__(self, r):
        if r < self.rs[0] - 1e-12 or r > self.rs[-1] + 1e-12:
            raise ValueError(f"r = {r} outside [{self.rs[0]}, {self.rs[-1]}]")
        return float(np.interp(r, self.rs, self.ds))


def dmt_optimal_diversity(r, nt, nr):
    if not -1e-12 <= r <= nt + 1e-12:
        raise ValueError(f"r must be in [0, {nt}]")
    return DiversityModel.dmt_optimal(nt, nr)(r)


@dataclass
class ExponentResult:
    r: float
    cbar: float
    alpha_star: np.ndarray
    solver: str
    d: float = math.nan
    diagnostics: dict = field(default_factory=dict)


def greedy_alpha(d, weights, cap=1.0):
    """Fill alpha_1, alpha_2, ... up to ``cap`` in order until the budget is used."""
    alpha = np.zeros(len(weights))
    budget = max(float(d), 0.0)
    for i, w in enumerate(weights):
        if budget <= 0:
            break
        alpha[i] = min(cap, budget / w)
        budget -= w * alpha[i]
    return alpha


def _grid_search(r, d, nt, T, w, step):
    n_steps = int(round(1.0 / step))
    grid = np.arange(n_steps + 1) * step
    q = r / nt

    # ordered prefixes alpha_1 >= ... >= alpha_{nt-1} on the grid, within budget
    prefixes = np.zeros((1, 0))
    for _ in range(nt - 1):
        last = prefixes[:, -1] if prefixes.shape[1] else np.full(len(prefixes), grid[-1])
        rows = []
        for j, a_prev in enumerate(last):
            vals = grid[grid <= a_prev + 1e-15]
            rows.append(np.column_stack([np.repeat(prefixes[j:j + 1], len(vals), axis=0), vals]))
        prefixes = np.vstack(rows)
        cost = prefixes @ w[:prefixes.shape[1]]
        prefixes = prefixes[cost <= d + 1e-12]

    cost = prefixes @ w[:nt - 1]
    upper = prefixes[:, -1] if nt > 1 else np.full(len(prefixes), grid[-1])
    room = np.maximum(d - cost, 0.0) / w[-1]
    last = np.maximum(np.minimum(upper, np.floor(room / step + 1e-9) * step), 0.0)
    full = np.column_stack([prefixes, last])
    values = (T * np.clip(q - 1.0 + full, 0.0, q)).sum(axis=1)
    best = int(np.argmax(values))
    return float(values[best]), full[best]


def _region_lp(r, d, nt, T, w):
    """Exact optimum by linear programming on each piece of the objective.

    Each alpha_i is either saturated (>= 1), on the slope (1 - r/nt .. 1) or
    in the dead zone (<= 1 - r/nt). Ordering forces the pattern to be a run
    of saturated, then sloped, then dead coordinates; on every such piece
    the objective is linear, so one LP per pattern gives the exact maximum.
    """
    q = r / nt
    lo_knee = 1.0 - q
    best_val, best_alpha = -math.inf, None
    # ordering constraints alpha_{i+1} - alpha_i <= 0 and the budget w.alpha <= d
    A_ub = [np.eye(nt)[i + 1] - np.eye(nt)[i] for i in range(nt - 1)] + [w]
    b_ub = [0.0] * (nt - 1) + [d]
    cap = d / w.min() + 1.0
    for n_sat in range(nt + 1):
        for n_lin in range(nt - n_sat + 1):
            bounds, c, const = [], np.zeros(nt), 0.0
            for i in range(nt):
                if i < n_sat:
                    bounds.append((1.0, max(cap, 1.0)))
                    const += T * q
                elif i < n_sat + n_lin:
                    bounds.append((lo_knee, 1.0))
                    c[i] = -T
                    const += T * (q - 1.0)
                else:
                    bounds.append((0.0, lo_knee))
            res = linprog(c, A_ub=np.array(A_ub), b_ub=b_ub, bounds=bounds, method="highs")
            if res.status != 0:
                continue
            val = const - float(res.fun)
            if val > best_val + 1e-12:
                best_val, best_alpha = val, np.asarray(res.x)
    return best_val, best_alpha


def grid_oracle(r, d, nt, T, weights, step=1e-3, refine=True):
    """Independent maximiser of the conditional exponent under the budget.

    First an exhaustive search over ordered alpha on a per-coordinate grid
    of spacing ``step`` (the objective is nondecreasing in each coordinate,
    so the last one is set to its largest feasible grid value). A pure grid
    can miss an off-grid optimum by up to about nt*T*step, so with
    ``refine`` the exact per-piece LP optimum is also computed and the
    better of the two is returned. Returns (value, alpha).
    """
    w = np.asarray(weights, dtype=float)
    value, alpha = _grid_search(r, d, nt, T, w, step)
    if refine:
        lp_value, lp_alpha = _region_lp(r, d, nt, T, w)
        if lp_alpha is not None and lp_value > value:
            value, alpha = lp_value, lp_alpha
    return value, alpha


def _grid_step(nt, max_points=2_000_000):
    step = 1e-3
    while (1.0 / step) ** max(nt - 1, 1) / math.factorial(max(nt - 1, 1)) > max_points:
        step *= 2
    return step


def cbar_general(r, d, nt, nr, T, weights=None, validate=True):
    """Upper bound on the SD complexity exponent for diversity d at gain r.

    The greedy optimum is always cross-checked against :func:`grid_oracle`
    (when ``validate``); if the grid ever finds a larger value, that value
    is returned and the disagreement is logged and recorded.
    """
    if not -1e-12 <= r <= nt + 1e-12:
        raise ValueError(f"r must be in [0, {nt}]")
    if d < 0:
        raise ValueError("d must be nonnegative")
    if nr < nt:
        raise ValueError("need nr >= nt")
    w = rayleigh_weights(nt, nr) if weights is None else np.asarray(weights, float)
    alpha = greedy_alpha(d, w)
    value = conditional_exponent(r, alpha, nt, T)
    result = ExponentResult(r=r, cbar=value, alpha_star=alpha, solver=GREEDY, d=d)
    if validate:
        step = _grid_step(nt)
        g_value, g_alpha = grid_oracle(r, d, nt, T, w, step=step)
        result.diagnostics = {"grid_value": g_value, "grid_step": step}
        if g_value > value + 1e-9:
            log.warning("greedy (%.9g) below grid oracle (%.9g) at r=%g d=%g", value, g_value, r, d)
            result = ExponentResult(r=r, cbar=g_value, alpha_star=g_alpha, solver=GRID_ORACLE,
                                    d=d, diagnostics=dict(result.diagnostics, greedy_value=value))
    return result


def cbar_dmt_optimal(r, nt, T):
    """Closed-form bound for DMT-optimal codes; also the fading-agnostic bound."""
    k = math.floor(r)
    return (T / nt) * (r * (nt - k - 1) + max(nt * k - r * (nt - 1), 0.0))


def c_threaded_dmt(r, n):
    """Exact exponent for DMT-optimal threaded codes with nt = T = n."""
    k = math.floor(r)
    return r * (n - k - 1) + max(n * k - r * (n - 1), 0.0)


def c_2x2_universal(r):
    if not 0 <= r <= 2:
        raise ValueError("r must be in [0, 2]")
    return min(r, 2.0 - r)


def cbar_outage_form(r, nt, nr, T, validate=True):
    """Worst conditional exponent over non-outage singularity levels.

    For alpha >= 0, sum_i (1 - alpha_i)^+ >= r is the same as
    sum_i min(alpha_i, 1) <= nt - r, a unit-weight budget on alpha clipped
    at 1, so the greedy/grid machinery applies with unit weights.
    """
    if not -1e-12 <= r <= nt + 1e-12:
        raise ValueError(f"r must be in [0, {nt}]")
    result = cbar_general(r, max(nt - r, 0.0), nt, nr, T, weights=np.ones(nt), validate=validate)
    result.d = math.nan
    return result


def fastdec_comparison_curves(r_grid):
    """Rows (r, regular real SD worst case 2r, simplified SD r, c(r) = min(r, 2-r))."""
    rows = []
    for r in r_grid:
        if not 0 <= r <= 2:
            raise ValueError("r must be in [0, 2]")
        rows.append((float(r), 2.0 * r, float(r), c_2x2_universal(r)))
    return rows


@dataclass
class ExponentCurve:
    nt: int
    nr: int
    T: int
    results: list

    def header(self):
        return ["r", "cbar"] + [f"alpha_star_{i + 1}" for i in range(self.nt)] + ["solver"]

    def rows(self):
        return [[res.r, res.cbar] + [float(a) for a in res.alpha_star] + [res.solver]
                for res in self.results]


def exponent_curve(r_grid, nt, nr, T, diversity=None, validate=True):
    """cbar over a grid of r; ``diversity`` is a DiversityModel, a constant, or None (DMT optimal)."""
    if diversity is None:
        diversity = DiversityModel.dmt_optimal(nt, nr)
    results = []
    for r in r_grid:
        d = diversity(r) if callable(diversity) else float(diversity)
        results.append(cbar_general(r, d, nt, nr, T, validate=validate))
    return ExponentCurve(nt, nr, T, results)


def parse_grid(text):
    """'lo:hi:step' -> inclusive list of floats."""
    try:
        lo, hi, step = (float(p) for p in text.split(":"))
    except ValueError as exc:
        raise ValueError(f"grid must look like lo:hi:step, got {text!r}") from exc
    if step <= 0 or hi < lo:
        raise ValueError(f"bad grid {text!r}")
    n = int(math.floor((hi - lo) / step + 1e-9))
    return [round(lo + i * step, 12) for i in range(n + 1)]


def threaded_preset_rows(ns=range(2, 7), step=0.05):
    """(n, r, c(r)) rows for threaded DMT-optimal codes, n = 2..6 by default."""
    return [(n, r, c_threaded_dmt(r, n)) for n in ns for r in parse_grid(f"0:{n}:{step}")]
