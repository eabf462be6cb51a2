import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdexponent.channel import complex_gaussian, effective_matrix, rng_stream
from sdexponent.codes import qam_alphabet, scaling_for_rate
from sdexponent.matkernel import qr_thin
from sdexponent.sphere import (BUDGET_OUTAGE, DECISION, EMPTY_SPHERE, EnumerationCapError,
                               SearchPolicy, brute_force_ml, count_layer_nodes_oracle,
                               dump_traces, load_traces, sd_search, search_triangular)

from conftest import golden_code


def _layer_counts_by_itertools(R, r, xi2, alphabet):
    """Independent oracle: enumerate every partial vector with itertools."""
    kappa = R.shape[0]
    counts = []
    for k in range(1, kappa + 1):
        Rk, rk = R[kappa - k:, kappa - k:], r[kappa - k:]
        n = 0
        for tail in itertools.product(alphabet, repeat=k):
            if np.linalg.norm(rk - Rk @ np.array(tail)) ** 2 <= xi2:
                n += 1
        counts.append(n)
    return counts


def _instance(seed, t, kappa=4, snr_db=20.0, r=1.0, spec=None):
    rng = rng_stream(seed, 1, t)
    rho = 10 ** (snr_db / 10)
    if spec is None:
        M = complex_gaussian(rng, (kappa, kappa)) * math.sqrt(rho / kappa)
        alphabet = qam_alphabet(1)
    else:
        sc = scaling_for_rate(spec, r, rho)
        M = effective_matrix(complex_gaussian(rng, (spec.nr, spec.nt)), spec, sc.theta)
        alphabet = sc.alphabet
    s = alphabet[rng.integers(0, alphabet.size, M.shape[1])]
    y = M @ s + complex_gaussian(rng, M.shape[0])
    return M, y, s, alphabet, rho


def test_policy_validation():
    with pytest.raises(ValueError):
        SearchPolicy("fixed")
    with pytest.raises(ValueError):
        SearchPolicy("fixed", z=-1)
    with pytest.raises(ValueError):
        SearchPolicy("bogus")
    with pytest.raises(ValueError):
        SearchPolicy("infinite", budget=-1)
    assert SearchPolicy("fixed", z=2.0).initial_radius_sq(16.0) == pytest.approx(8.0)
    assert SearchPolicy("infinite").initial_radius_sq(16.0) == math.inf


def test_single_symbol_exact():
    # xi^2 = z log2(rho) = 0.25 log2(2) -> xi = 0.5
    tr = sd_search(np.array([[1.0]]), np.array([1 - 1j]), qam_alphabet(1), SearchPolicy("fixed", z=0.25), 2.0)
    assert tr.total_nodes == 1 and tr.outcome == DECISION
    assert tr.s_hat[0] == 1 - 1j
    assert tr.radius_used == pytest.approx(0.5)


@pytest.mark.parametrize("t", range(30))
def test_infinite_radius_equals_ml(t):
    M, y, s, alphabet, rho = _instance(1, t, kappa=2)
    tr = sd_search(M, y, alphabet, SearchPolicy("infinite"), rho)
    assert tr.outcome == DECISION
    np.testing.assert_array_equal(tr.s_hat, brute_force_ml(M, y, alphabet))
    assert list(tr.nodes_per_layer) == [9, 81]


@pytest.mark.parametrize("t", range(100))
def test_fixed_counts_match_layer_oracle(t, golden):
    M, y, s, alphabet, rho = _instance(2, t, spec=golden, snr_db=15.0)
    policy = SearchPolicy("fixed", z=2.0)
    tr = sd_search(M, y, alphabet, policy, rho)
    Q, R = qr_thin(M)
    r = Q.conj().T @ y
    xi = math.sqrt(policy.initial_radius_sq(rho))
    oracle = [count_layer_nodes_oracle(R, r, k, xi, alphabet) for k in range(1, 5)]
    assert list(tr.nodes_per_layer) == oracle
    assert tr.total_nodes == sum(oracle)


def test_layer_oracle_agrees_with_itertools(rng):
    R = np.triu(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))) * 2
    r = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    alphabet = qam_alphabet(1)
    for xi2 in (0.5, 3.0, 20.0):
        expected = _layer_counts_by_itertools(R, r, xi2, alphabet)
        got = [count_layer_nodes_oracle(R, r, k, math.sqrt(xi2), alphabet) for k in (1, 2, 3)]
        assert got == expected


def test_layer_oracle_zero_radius():
    R = np.triu(np.arange(1, 10).reshape(3, 3)).astype(complex)
    s = np.array([1, -1j, 0])
    r = R @ s
    assert count_layer_nodes_oracle(R, r, 2, 0.0, qam_alphabet(1)) >= 1
    assert count_layer_nodes_oracle(R, r, 3, 0.0, qam_alphabet(1)) == 1


def test_layer_oracle_infinite_radius():
    R = np.eye(3, dtype=complex)
    assert count_layer_nodes_oracle(R, np.zeros(3), 2, math.inf, qam_alphabet(1)) == 81


def test_layer_oracle_cap():
    with pytest.raises(EnumerationCapError):
        count_layer_nodes_oracle(np.eye(8), np.zeros(8), 8, 1.0, qam_alphabet(2), cap=1000)


def test_budget_contract(golden):
    # find an instance with more than 5 nodes, then cap it
    for t in range(200):
        M, y, s, alphabet, rho = _instance(3, t, spec=golden, snr_db=15.0)
        if sd_search(M, y, alphabet, SearchPolicy("fixed", z=2.0), rho).total_nodes > 5:
            break
    tr = sd_search(M, y, alphabet, SearchPolicy("fixed", z=2.0, budget=5), rho)
    assert tr.outcome == BUDGET_OUTAGE and tr.timed_out
    assert tr.total_nodes <= 5


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 400), st.integers(0, 60))
def test_budget_outage_iff_unbudgeted_count_exceeds(t, budget):
    M, y, s, alphabet, rho = _instance(4, t, spec=golden_code(), snr_db=15.0)
    full = sd_search(M, y, alphabet, SearchPolicy("fixed", z=2.0), rho)
    capped = sd_search(M, y, alphabet, SearchPolicy("fixed", z=2.0, budget=budget), rho)
    assert (capped.outcome == BUDGET_OUTAGE) == (full.total_nodes > budget)
    if capped.outcome != BUDGET_OUTAGE:
        np.testing.assert_array_equal(capped.nodes_per_layer, full.nodes_per_layer)
        assert capped.outcome == full.outcome


def test_brute_force_zero_noise(golden):
    sc = scaling_for_rate(golden, 1.0, 100.0)
    rng = rng_stream(5, 1)
    M = effective_matrix(complex_gaussian(rng, (2, 2)), golden, sc.theta)
    s = sc.alphabet[rng.integers(0, 9, 4)]
    np.testing.assert_array_equal(brute_force_ml(M, M @ s, sc.alphabet), s)


@pytest.mark.parametrize("y, expected", [(0.5, 0), (-0.5, -1), (0.5j, 0), (0.5 + 0.5j, 0)])
def test_brute_force_tie_break(y, expected):
    got = brute_force_ml(np.array([[1.0]]), np.array([y]), qam_alphabet(1))
    assert got[0] == expected


def test_brute_force_dominates_samples():
    for t in range(20):
        M, y, s, alphabet, rho = _instance(6, t)
        best = brute_force_ml(M, y, alphabet)
        best_metric = np.linalg.norm(y - M @ best) ** 2
        rng = rng_stream(6, 2, t)
        for _ in range(100):
            cand = alphabet[rng.integers(0, alphabet.size, 4)]
            assert best_metric <= np.linalg.norm(y - M @ cand) ** 2 + 1e-12


def test_brute_force_cap():
    with pytest.raises(EnumerationCapError):
        brute_force_ml(np.eye(8), np.zeros(8), qam_alphabet(2), cap=10_000)


def test_rank_deficient_is_flagged():
    M = np.zeros((4, 4), dtype=complex)
    M[:, 0] = 1.0
    tr = sd_search(M, np.ones(4), qam_alphabet(1), SearchPolicy("infinite"), 10.0)
    assert tr.degenerate
    assert tr.outcome == DECISION


@pytest.mark.parametrize("t", range(60))
def test_search_invariants(t, golden):
    M, y, s, alphabet, rho = _instance(7, t, spec=golden, snr_db=20.0)
    fixed = sd_search(M, y, alphabet, SearchPolicy("fixed", z=2.0), rho)
    se = sd_search(M, y, alphabet, SearchPolicy("adaptive_se", z=2.0), rho)
    n_alpha = alphabet.size
    assert fixed.total_nodes == int(fixed.nodes_per_layer.sum())
    assert fixed.total_nodes <= sum(n_alpha ** k for k in range(1, 5))
    assert se.total_nodes <= fixed.total_nodes
    counts = fixed.nodes_per_layer
    assert all(counts[k + 1] <= n_alpha * counts[k] for k in range(3))
    if fixed.outcome == DECISION:
        assert np.linalg.norm(y - M @ fixed.s_hat) ** 2 <= fixed.radius_used ** 2 + 1e-9
        np.testing.assert_array_equal(se.s_hat, fixed.s_hat)
    # if the transmitted vector lies inside the sphere, the sphere is not empty
    Q, _ = qr_thin(M)
    w = y - M @ s
    if np.linalg.norm(Q.conj().T @ w) <= fixed.radius_used:
        assert fixed.outcome != EMPTY_SPHERE


@pytest.mark.parametrize("t", range(20))
def test_se_unbounded_is_ml(t):
    M, y, s, alphabet, rho = _instance(8, t)
    tr = sd_search(M, y, alphabet, SearchPolicy("adaptive_se"), rho)
    np.testing.assert_array_equal(tr.s_hat, brute_force_ml(M, y, alphabet))


def test_empty_sphere():
    tr = sd_search(np.eye(2), np.array([10.0, 10.0]), qam_alphabet(1), SearchPolicy("fixed", z=0.1), 2.0)
    assert tr.outcome == EMPTY_SPHERE and tr.s_hat is None and tr.total_nodes == 0


def test_y_length_checked():
    with pytest.raises(ValueError):
        sd_search(np.eye(2), np.ones(3), qam_alphabet(1), SearchPolicy("infinite"), 2.0)


def test_search_triangular_matches(golden):
    M, y, s, alphabet, rho = _instance(9, 0, spec=golden)
    Q, R = qr_thin(M)
    a = sd_search(M, y, alphabet, SearchPolicy("fixed", z=2.0), rho)
    b = search_triangular(R, Q.conj().T @ y, alphabet, SearchPolicy("fixed", z=2.0), rho)
    np.testing.assert_array_equal(a.nodes_per_layer, b.nodes_per_layer)


def test_trace_dump_roundtrip(tmp_path, golden):
    traces = []
    for t in range(3):
        M, y, s, alphabet, rho = _instance(10, t, spec=golden)
        traces.append(sd_search(M, y, alphabet, SearchPolicy("fixed", z=2.0), rho))
    path = tmp_path / "traces.jsonl"
    dump_traces(traces, path, seeds=[0, 1, 2])
    back = load_traces(path)
    assert [d["nodes_per_layer"] for d in back] == [list(map(int, t.nodes_per_layer)) for t in traces]
    assert [d["seed"] for d in back] == [0, 1, 2]
    assert all(d["total_nodes"] == sum(d["nodes_per_layer"]) for d in back)
