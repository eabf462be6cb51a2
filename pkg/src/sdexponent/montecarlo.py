"""Monte Carlo estimates of complexity tails, their SNR slopes and the ML gap.

Every trial draws its channel, symbols and noise from counter-based
streams keyed by (seed, stream, snr index, trial), so results are identical
for any number of worker processes.
"""

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .channel import (STREAM_CHANNEL, STREAM_NOISE, STREAM_SYMBOLS, db_to_linear,
                      effective_matrix, receive, rng_stream, sample_channel)
from .codes import encode, scaling_for_rate
from .exponent import dmt_optimal_diversity
from .matkernel import vec
from .sphere import DEFAULT_ENUMERATION_CAP, EMPTY_SPHERE, SearchPolicy, brute_force_ml, sd_search

SCHEMA_VERSION = 1
CONFIDENCE = 0.95


class InsufficientDataError(ValueError):
    """Too few usable points for a regression."""


@dataclass
class ExperimentConfig:
    """One simulation experiment.

    Args:
        spec: the code.
        r: multiplexing gain.
        snr_db_list: SNR points in dB.
        x_list: complexity exponents x for the tail events N >= rho^x.
        trials: trials per SNR point.
        policy: search policy; default is a fixed radius with coefficient ``z``.
        z: radius coefficient; default d(r) + 1 with the DMT-optimal d.
        seed: global seed.
        jobs: worker processes (affects wall time only).
    """

    spec: object
    r: float
    snr_db_list: list
    x_list: list = field(default_factory=lambda: [0.0, 0.5, 1.0, 1.5, 2.0])
    trials: int = 1000
    policy: SearchPolicy | None = None
    z: float | None = None
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.z is None:
            self.z = dmt_optimal_diversity(self.r, self.spec.nt, self.spec.nr) + 1.0
        if self.z <= 0:
            raise ValueError("z must be positive")
        if self.policy is None:
            self.policy = SearchPolicy("fixed", z=self.z)
        if not self.snr_db_list:
            raise ValueError("need at least one SNR point")

    def rho(self, snr_db):
        return db_to_linear(snr_db)


def meets_threshold(n_nodes, rho, x):
    """The tail event N >= rho^x."""
    return np.asarray(n_nodes) >= rho ** x


def budget_for_exponent(rho, x):
    """Largest node budget that still lets a search with N < rho^x finish.

    An infinite exponent means no budget at all and returns None.
    """
    if math.isinf(x):
        return None
    return max(int(math.ceil(rho ** x)) - 1, 0)


def wilson_interval(k, n, confidence=CONFIDENCE):
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class TrialRecord:
    n_nodes: int
    nodes_per_layer: np.ndarray
    outcome: str
    s: np.ndarray
    s_hat: np.ndarray | None
    s_ml: np.ndarray | None = None
    degenerate: bool = False


def run_trial(spec, r, rho, policy, seed, snr_index, trial, with_ml=False, ml_cap=DEFAULT_ENUMERATION_CAP):
    """Draw H, s, w for one trial and sphere-decode it."""
    scaling = scaling_for_rate(spec, r, rho)
    alphabet = scaling.alphabet
    H = sample_channel(spec.nr, spec.nt, rng_stream(seed, STREAM_CHANNEL, snr_index, trial), rho).H
    picks = rng_stream(seed, STREAM_SYMBOLS, snr_index, trial).integers(0, alphabet.size, spec.kappa)
    s = alphabet[picks]
    _, X = encode(spec, scaling, s)
    Y = receive(H, X, rng_stream(seed, STREAM_NOISE, snr_index, trial))
    M = effective_matrix(H, spec, scaling.theta)
    y = vec(Y)
    trace = sd_search(M, y, alphabet, policy, rho)
    s_ml = brute_force_ml(M, y, alphabet, ml_cap) if with_ml else None
    return TrialRecord(trace.total_nodes, trace.nodes_per_layer, trace.outcome, s,
                       trace.s_hat, s_ml, trace.degenerate)


def _run_chunk(args):
    spec, r, rho, policy, seed, snr_index, lo, hi, with_ml = args
    return [run_trial(spec, r, rho, policy, seed, snr_index, t, with_ml) for t in range(lo, hi)]


def simulate(config, with_ml=False, chunk=250):
    """All trial records, keyed by SNR (dB), in trial order."""
    tasks = []
    for i, snr_db in enumerate(config.snr_db_list):
        rho = config.rho(snr_db)
        for lo in range(0, config.trials, chunk):
            tasks.append((config.spec, config.r, rho, config.policy, config.seed, i,
                          lo, min(lo + chunk, config.trials), with_ml))
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            chunks = list(pool.map(_run_chunk, tasks))
    else:
        chunks = [_run_chunk(t) for t in tasks]
    out = {snr_db: [] for snr_db in config.snr_db_list}
    for task, recs in zip(tasks, chunks):
        out[config.snr_db_list[task[5]]].extend(recs)
    return out


@dataclass
class TailCell:
    snr_db: float
    x: float
    count: int
    trials: int
    p_hat: float
    ci_low: float
    ci_high: float

    @property
    def halfwidth(self):
        return 0.5 * (self.ci_high - self.ci_low)


@dataclass
class TailEstimate:
    """Empirical P(N >= rho^x) per (SNR, x) with Wilson 95% intervals."""

    cells: list
    node_counts: dict = field(default_factory=dict)
    records: dict = field(default_factory=dict)

    kind = "tail"

    def cell(self, snr_db, x):
        for c in self.cells:
            if c.snr_db == snr_db and c.x == x:
                return c
        raise KeyError((snr_db, x))

    def columns(self):
        return ["snr_db", "x", "count", "trials", "p_hat", "ci_low", "ci_high", "halfwidth"]

    def rows(self):
        return [[c.snr_db, c.x, c.count, c.trials, c.p_hat, c.ci_low, c.ci_high, c.halfwidth]
                for c in self.cells]


def tail_cells(node_counts, x_list):
    """Build tail cells from per-SNR arrays of total node counts."""
    cells = []
    for snr_db, counts in node_counts.items():
        counts = np.asarray(counts)
        rho = db_to_linear(snr_db)
        for x in x_list:
            k = int(np.count_nonzero(meets_threshold(counts, rho, x)))
            lo, hi = wilson_interval(k, counts.size)
            cells.append(TailCell(float(snr_db), float(x), k, int(counts.size), k / counts.size, lo, hi))
    return cells


def tail_probability(config, keep_records=False):
    """Estimate P(N >= rho^x) on the config's (SNR, x) grid from unbudgeted searches."""
    records = simulate(config)
    counts = {snr: np.array([rec.n_nodes for rec in recs]) for snr, recs in records.items()}
    return TailEstimate(tail_cells(counts, config.x_list), counts, records if keep_records else {})


@dataclass
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    used_snr_db: list
    excluded_snr_db: list


def psi_slope(tail, x):
    """Least-squares slope of -log2 P-hat against log2 rho for one x.

    An estimate of an asymptotic quantity at finite SNR; cells with
    P-hat = 0 are left out and listed in ``excluded_snr_db``.
    """
    cells = sorted((c for c in tail.cells if c.x == x), key=lambda c: c.snr_db)
    used = [c for c in cells if c.p_hat > 0]
    excluded = [c.snr_db for c in cells if c.p_hat <= 0]
    if len({c.snr_db for c in used}) < 2:
        raise InsufficientDataError(f"need >= 2 SNR points with nonzero P-hat at x={x}, have {len(used)}")
    lr = math.log2(10.0) / 10.0
    u = np.array([c.snr_db * lr for c in used])
    v = np.array([-math.log2(c.p_hat) for c in used])
    fit = stats.linregress(u, v)
    stderr = float(fit.stderr) if len(used) > 2 else 0.0
    return SlopeFit(float(fit.slope), stderr, float(fit.intercept), [c.snr_db for c in used], excluded)


@dataclass
class GapRow:
    snr_db: float
    x: float
    trials: int
    ml_errors: int
    empty_sphere: int
    timeouts: int
    union: int
    sd_errors: int
    unbudgeted_union: int

    @property
    def ml_rate(self):
        return self.ml_errors / self.trials

    @property
    def sd_rate(self):
        return self.sd_errors / self.trials

    @property
    def g_hat(self):
        """P(ML error or empty sphere or N >= rho^x) / P(ML error); None if no ML errors."""
        return self.union / self.ml_errors if self.ml_errors else None

    @property
    def g_unbudgeted(self):
        return self.unbudgeted_union / self.ml_errors if self.ml_errors else None

    @property
    def union_bound_holds(self):
        return self.union <= self.ml_errors + self.empty_sphere + self.timeouts

    def unbudgeted_interval(self, confidence=CONFIDENCE):
        """Wilson interval of the unbudgeted numerator, expressed as a ratio."""
        if not self.ml_errors:
            return None
        lo, hi = wilson_interval(self.unbudgeted_union, self.trials, confidence)
        return lo / self.ml_rate, hi / self.ml_rate


@dataclass
class GapTable:
    rows_: list

    kind = "gap"

    def columns(self):
        return ["snr_db", "x", "trials", "ml_errors", "empty_sphere", "timeouts", "union",
                "sd_errors", "ml_rate", "sd_rate", "g_hat", "g_unbudgeted"]

    def rows(self):
        return [[g.snr_db, g.x, g.trials, g.ml_errors, g.empty_sphere, g.timeouts, g.union,
                 g.sd_errors, g.ml_rate, g.sd_rate, g.g_hat, g.g_unbudgeted] for g in self.rows_]

    def row(self, snr_db, x):
        for g in self.rows_:
            if g.snr_db == snr_db and g.x == x:
                return g
        raise KeyError((snr_db, x))


def gap_rows(records, snr_db, x_list):
    """Per-trial event bookkeeping for one SNR.

    A search with budget B stops exactly when its unbudgeted count exceeds
    B, and depth-first order does not depend on the budget, so one
    unbudgeted search per trial settles every x at once. A timed-out
    search is counted as an error.
    """
    rho = db_to_linear(snr_db)
    n = len(records)
    ml_err = np.array([not np.array_equal(rec.s_ml, rec.s) for rec in records])
    empty = np.array([rec.outcome == EMPTY_SPHERE for rec in records])
    wrong = np.array([rec.s_hat is None or not np.array_equal(rec.s_hat, rec.s) for rec in records])
    counts = np.array([rec.n_nodes for rec in records])
    rows = []
    for x in x_list:
        budget = budget_for_exponent(rho, x)
        timeout = np.zeros(counts.shape, bool) if budget is None else counts > budget
        union = ml_err | empty | timeout
        sd_err = timeout | empty | wrong
        rows.append(GapRow(float(snr_db), float(x), n, int(ml_err.sum()), int(empty.sum()),
                           int(timeout.sum()), int(union.sum()), int(sd_err.sum()),
                           int((ml_err | empty).sum())))
    return rows


def error_and_gap(config, keep_records=False):
    """ML and budgeted-SD error rates and the gap ratio per (SNR, x)."""
    records = simulate(config, with_ml=True)
    rows = []
    for snr_db in config.snr_db_list:
        rows.extend(gap_rows(records[snr_db], snr_db, config.x_list))
    table = GapTable(rows)
    if keep_records:
        table.records = records
    return table


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


@dataclass
class Table:
    """A plain named table, for results that have no dedicated type."""

    kind: str
    columns_: list
    rows_: list

    def columns(self):
        return list(self.columns_)

    def rows(self):
        return [list(r) for r in self.rows_]


def format_table(results, format="csv"):
    """Render a result table (tail, gap, exponent curve or Table) as CSV or JSON text.

    CSV output carries a trailing ``schema_version`` column; JSON output
    holds ``schema_version``, ``kind``, ``columns`` and ``rows``.
    """
    if format not in ("csv", "json"):
        raise ValueError("format must be csv or json")
    columns = list(results.columns()) if hasattr(results, "columns") else list(results.header())
    rows = results.rows()
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns + ["schema_version"])
        for row in rows:
            writer.writerow([_csv_value(v) for v in row] + [SCHEMA_VERSION])
        return buf.getvalue()
    payload = {"schema_version": SCHEMA_VERSION, "kind": getattr(results, "kind", "table"),
               "columns": columns,
               "rows": [[None if isinstance(v, float) and math.isnan(v) else v for v in row]
                        for row in rows]}
    return json.dumps(payload, sort_keys=True, indent=1) + "\n"


def export(results, path, format="csv"):
    """Write :func:`format_table` output to ``path``."""
    text = format_table(results, format)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def load_export(path):
    """Read back a JSON export as (columns, rows)."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {payload.get('schema_version')!r}")
    return payload["columns"], payload["rows"]
