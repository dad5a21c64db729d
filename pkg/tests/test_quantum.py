import math

import numpy as np
import pytest

import qsdecoder.quantum as quantum
from qsdecoder.decoder import Acceptor, TokenTable, enumerate_paths
from qsdecoder.errors import DomainError, InfeasibleError
from qsdecoder.quantum import (
    TRIAL_COLUMNS,
    advice_from_arrays,
    amplification_rounds,
    default_rounds,
    exponential_search,
    grover_iterate,
    prepare_advice,
    quantum_beam_decode,
    quantum_search_decode,
    retained_mask,
    run_trials,
    trials_to_csv,
)


def uniform(N, scores=None):
    return advice_from_arrays(np.full(N, 1 / N), np.arange(N, dtype=float) if scores is None else scores)


def tree(R=3, k=2.0, n=2, scores=None):
    dist = enumerate_paths(Acceptor.full(R), TokenTable.powerlaw(R, k, n))
    return prepare_advice(dist, dist.log_probs if scores is None else scores), dist


def test_prepare_point_mass_and_uniform():
    point = advice_from_arrays(np.array([1.0]), np.array([0.0]))
    assert point.amplitudes[0] == 1.0
    np.testing.assert_array_equal(uniform(4).amplitudes, 0.5)


def test_prepare_from_distribution():
    state, dist = tree()
    assert state.amplitudes[dist.argmax()].real == pytest.approx(36 / 49, rel=1e-14)
    np.testing.assert_allclose(np.abs(state.amplitudes) ** 2, dist.probabilities, atol=1e-10)
    assert state.norm() == pytest.approx(1.0, abs=1e-10)
    by_callable = prepare_advice(dist, lambda path: -sum(path))
    assert by_callable.scores[dist.index_of((2, 2))] == -4


def test_prepare_rejects_misaligned_scores():
    _, dist = tree()
    with pytest.raises(DomainError):
        prepare_advice(dist, np.zeros(3))


def test_textbook_four_element_grover():
    state = grover_iterate(uniform(4), np.array([False, False, True, False]), 1)
    assert abs(state.amplitudes[2]) ** 2 == pytest.approx(1.0, abs=1e-12)
    assert state.oracle_queries == 1


@pytest.mark.parametrize("j", range(0, 9))
def test_grover_angle_formula(j):
    N = 64
    mask = np.zeros(N, dtype=bool)
    mask[17] = True
    state = grover_iterate(uniform(N), mask, j)
    theta = math.asin(1 / 8)
    assert abs(state.amplitudes[17]) ** 2 == pytest.approx(math.sin((2 * j + 1) * theta) ** 2, abs=1e-12)


def test_empty_marked_set_leaves_distribution_unchanged():
    state, _ = tree(n=3)
    after = grover_iterate(state, np.zeros(state.size, dtype=bool), 5)
    np.testing.assert_allclose(after.measurement_probs(), state.measurement_probs(), atol=1e-12)
    assert after.oracle_queries == 5


def test_norm_preserved_over_many_iterations():
    state, _ = tree(k=1.0, n=6)
    rng = np.random.default_rng(0)
    mask = rng.random(state.size) < 0.05
    after = grover_iterate(state, mask, 2000)
    assert after.norm() == pytest.approx(1.0, abs=1e-9)


def test_marked_predicate_accepts_callable():
    a = grover_iterate(uniform(16), lambda idx: idx == 3, 2)
    b = grover_iterate(uniform(16), np.arange(16) == 3, 2)
    np.testing.assert_array_equal(a.amplitudes, b.amplitudes)


def test_exponential_search_all_marked_is_free():
    res = exponential_search(uniform(32), np.ones(32, dtype=bool), 0)
    assert res.found and res.queries == 0


def test_exponential_search_empty_marked_gives_up():
    N = 64
    res = exponential_search(uniform(N), np.zeros(N, dtype=bool), 0)
    assert not res.found
    assert res.queries > math.ceil(3 * math.sqrt(N))


def test_exponential_search_single_marked_mean_queries():
    N = 256
    mask = np.zeros(N, dtype=bool)
    mask[100] = True
    results = [exponential_search(uniform(N), mask, s) for s in range(1000)]
    found = [r for r in results if r.found]
    assert len(found) / len(results) >= 0.9
    assert np.mean([r.queries for r in found]) <= 4 * math.sqrt(N)


@pytest.mark.parametrize("p", [0.5, 0.1, 0.01])
def test_exponential_search_scales_with_marked_mass(p):
    N = 400
    probs = np.full(N, (1 - p) / (N - 1))
    probs[0] = p
    state = advice_from_arrays(probs, np.zeros(N))
    mask = np.arange(N) == 0
    queries = [exponential_search(state, mask, s).queries for s in range(1000)]
    assert np.mean(queries) <= 4 / math.sqrt(p)


def test_exponential_search_single_unmarked_element_terminates():
    res = exponential_search(advice_from_arrays(np.array([1.0]), np.array([0.0])), np.array([False]), 0)
    assert not res.found and res.queries == 0


def test_search_point_mass():
    out = quantum_search_decode(advice_from_arrays(np.array([1.0]), np.array([3.0])), 1, 0)
    assert out.success and out.best_index == 0 and out.oracle_queries == 0


def test_search_is_deterministic_per_seed():
    state, _ = tree(n=4)
    assert quantum_search_decode(state, None, 5) == quantum_search_decode(state, None, 5)
    assert default_rounds(81) == 10


def test_search_with_aligned_advice_within_envelope():
    state, dist = tree()
    outcomes = run_trials(state, 500, 1)
    top = dist.argmax()
    assert np.mean([o.success for o in outcomes]) >= 0.9
    bound = 10 * min(1 / state.overlap(top), math.sqrt(state.size))
    assert bound == pytest.approx(10 * 49 / 36)
    assert np.mean([o.queries_to_max for o in outcomes]) <= bound


def test_search_uniform_adversarial_scores():
    N = 2**10
    scores = np.random.default_rng(5).permutation(N).astype(float)
    outcomes = run_trials(uniform(N, scores), 200, 2)
    assert np.mean([o.success for o in outcomes]) >= 0.9
    assert np.mean([o.queries_to_max for o in outcomes]) <= 10 * math.sqrt(N)


def test_search_with_tied_scores_succeeds():
    state = uniform(32, np.zeros(32))
    outcomes = run_trials(state, 50, 0)
    assert all(o.success for o in outcomes)


def test_query_accounting_matches_recount(monkeypatch):
    applied = []
    original = quantum._iterate_inplace

    def counting(amp, prep, mask, iterations):
        applied.append(iterations)
        original(amp, prep, mask, iterations)

    monkeypatch.setattr(quantum, "_iterate_inplace", counting)
    state, _ = tree(k=2.91, n=5, scores=np.random.default_rng(1).random(3**5))
    for seed in range(20):
        applied.clear()
        out = quantum_search_decode(state, None, seed)
        assert out.oracle_queries == sum(applied)
        applied.clear()
        out = quantum_beam_decode(state, 1e-3, None, seed)
        assert out.oracle_queries == sum(applied)
        assert out.amplification_queries == applied[0]


def test_beam_without_pruning_matches_search():
    state, _ = tree(n=4, scores=np.random.default_rng(2).random(81))
    for seed in range(30):
        a = quantum_search_decode(state, None, seed)
        b = quantum_beam_decode(state, 0.0, None, seed)
        assert (a.best_index, a.oracle_queries, a.success) == (b.best_index, b.oracle_queries, b.success)
        assert b.amplification_queries == 0


def test_beam_single_survivor():
    state, dist = tree(k=2.0, n=3, scores=np.arange(27, dtype=float))
    top = dist.argmax()
    p_top = dist.probabilities[top]
    out = quantum_beam_decode(state, p_top - 1e-12, None, 0)
    assert out.best_index == top and out.success
    assert out.amplification_queries == math.floor((math.pi / 4) / math.asin(math.sqrt(p_top)))


def test_beam_empty_is_infeasible():
    state, _ = tree()
    with pytest.raises(InfeasibleError):
        quantum_beam_decode(state, 0.9, None, 0)
    with pytest.raises(DomainError):
        quantum_beam_decode(state, 1.5, None, 0)


def test_beam_returns_retained_optimum():
    scores = np.random.default_rng(4).random(3**6)
    state, dist = tree(k=2.91, n=6, scores=scores)
    order = np.sort(dist.probabilities)[::-1]
    p0 = order[np.searchsorted(np.cumsum(order), 0.5)]
    keep = retained_mask(state, p0)
    assert 0.45 <= dist.probabilities[keep].sum() <= 0.8
    retained_top = np.flatnonzero(keep)[np.argmax(scores[keep])]
    assert retained_top != np.argmax(scores)
    outcomes = run_trials(state, 500, 3, p0=p0)
    assert np.mean([o.best_index == retained_top for o in outcomes]) >= 0.9


def test_raising_cutoff_shrinks_beam():
    state, _ = tree(k=1.5, n=5)
    cutoffs = np.linspace(0, state.probs.max(), 40)
    sizes = [retained_mask(state, p).sum() for p in cutoffs]
    assert all(a >= b for a, b in zip(sizes, sizes[1:]))


def test_amplification_rounds():
    assert amplification_rounds(1.0) == 0
    assert amplification_rounds(0.25) == 1
    assert amplification_rounds(0.01) == 7
    assert amplification_rounds(0.02) == 5
    with pytest.raises(DomainError):
        amplification_rounds(0.0)


def test_amplification_lifts_retained_mass():
    for W in (0.9, 0.5, 0.3, 0.1, 0.02, 0.001, 1e-5):
        N = 1000
        probs = np.full(N, (1 - W) / (N - 1))
        probs[0] = W
        state = advice_from_arrays(probs, np.zeros(N))
        out = grover_iterate(state, np.arange(N) == 0, amplification_rounds(W))
        assert out.measurement_probs()[0] >= 1 - W


def test_trials_parallel_equals_serial():
    state, _ = tree(n=4, scores=np.random.default_rng(7).random(81))
    assert run_trials(state, 40, 11, threads=1) == run_trials(state, 40, 11, threads=4)


def test_trials_csv():
    state, _ = tree()
    outcomes = run_trials(state, 5, 0)
    lines = trials_to_csv(state, outcomes).splitlines()
    assert lines[0].split(",") == list(TRIAL_COLUMNS)
    assert len(lines) == 7 and lines[-1].startswith("mean,9,")
