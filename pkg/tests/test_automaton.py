import itertools
import json
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sclab.automaton import (
    AutomatonParseError,
    BlockTooShortError,
    CombingAutomaton,
    DeterminismError,
    ReachabilityError,
    SpectralConvergenceError,
    AutomatonError,
    analyze,
    antialign_fraction,
    chernoff_block_length,
    chernoff_experiment,
    count_subword,
    example_automaton,
    free_group_automaton,
    load_automaton,
    power_iteration,
    sample_geodesic,
    sample_paths,
    settled_fraction,
    validate,
)
from sclab.words import Word, invert, random_reduced_letters

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="module")
def free2():
    return analyze(free_group_automaton(2))


@pytest.fixture(scope="module")
def two():
    return analyze(example_automaton("two_components"))


# -- construction and parsing ------------------------------------------------------


def test_free_automaton_shape():
    a = free_group_automaton(2)
    assert a.vertex_count == 5
    assert len(a.edges) == 4 + 4 * 3


def test_free_automaton_rank_zero():
    with pytest.raises(AutomatonError):
        free_group_automaton(0)


def test_json_round_trip():
    a = free_group_automaton(2)
    assert load_automaton(a.to_json()) == a


def test_determinism_error():
    with pytest.raises(DeterminismError):
        CombingAutomaton(2, 0, 1, ((0, 1, 1), (0, 0, 1)))


def test_reachability_error():
    with pytest.raises(ReachabilityError):
        CombingAutomaton(3, 0, 1, ((0, 1, 1),))


def test_parse_error():
    with pytest.raises(AutomatonParseError):
        load_automaton("{not json")
    with pytest.raises(AutomatonParseError):
        load_automaton(json.dumps({"vertices": 2}))


def test_accepts_reduced_words_only():
    a = free_group_automaton(2)
    assert a.accepts(Word.parse("abAB"))
    assert not a.accepts(Word((1, 2, -2), 2, _checked=True))


def test_shipped_example_passes_validation():
    rep = validate(example_automaton("two_components"))
    assert rep.ok
    assert sum(c.maximal for c in rep.components) == 2


def test_coornaert_violation_detected():
    rep = validate((DATA / "coornaert_violation.json").read_text())
    assert rep.deterministic and rep.reachable
    assert not rep.coornaert and not rep.ok


# -- spectral analysis ----------------------------------------------------------------


def test_free_group_eigenvalue(free2):
    assert abs(free2.perron_eigenvalue - 3.0) < 1e-9


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_free_group_eigenvalue_general_rank(k):
    assert abs(analyze(free_group_automaton(k)).perron_eigenvalue - (2 * k - 1)) < 1e-9


def test_free_group_chain_is_uniform(free2):
    N = free2.stochastic_matrix
    assert np.allclose(N[0, 1:], 0.25, atol=1e-12)
    for i in range(1, 5):
        row = N[i, 1:]
        assert np.allclose(np.sort(row), [0, 1 / 3, 1 / 3, 1 / 3], atol=1e-12)
    assert np.allclose(free2.stationary, [0, 0.25, 0.25, 0.25, 0.25], atol=1e-12)


def test_single_loop():
    m = analyze(CombingAutomaton(1, 0, 1, ((0, 0, 1),)))
    assert abs(m.perron_eigenvalue - 1.0) < 1e-12
    assert np.allclose(m.stationary, [1.0])


def test_two_component_eigenvalues(two):
    lam = np.max(np.abs(np.linalg.eigvals(two.transition_counts)))
    assert abs(two.perron_eigenvalue - lam) < 1e-9
    assert abs(two.perron_eigenvalue - 2.0) < 1e-9
    for c in two.components:
        idx = list(c.vertices)
        sub = two.transition_counts[np.ix_(idx, idx)]
        assert np.max(np.abs(np.linalg.eigvals(sub))) <= two.perron_eigenvalue + 1e-9


@pytest.mark.parametrize("model", ["free2", "two"])
def test_markov_invariants(model, request):
    m = request.getfixturevalue(model)
    N, mu = m.stochastic_matrix, m.stationary
    support = N.sum(axis=1) > 0
    assert np.allclose(N.sum(axis=1)[support], 1.0, atol=1e-10)
    assert np.allclose(mu @ N, mu, atol=1e-10)
    assert abs(mu.sum() - 1) < 1e-12


def test_power_iteration_budget():
    with pytest.raises(SpectralConvergenceError):
        power_iteration(np.array([[1.0, 1.0], [1.0, 0.0]]), max_iter=3)


def test_periodic_matrix_converges():
    lam, _ = power_iteration(np.array([[0.0, 2.0], [2.0, 0.0]]))
    assert abs(lam - 2.0) < 1e-9


# -- sampling --------------------------------------------------------------------------


def test_sample_is_deterministic(free2):
    assert sample_geodesic(free2, 50, 11) == sample_geodesic(free2, 50, 11)


def test_sample_zero_length(free2):
    s = sample_geodesic(free2, 0, 1)
    assert s.empty and len(s.word) == 0


def test_sample_is_accepted(two):
    s = sample_geodesic(two, 40, 3)
    assert two.automaton.accepts(s.word)
    assert len(s.vertex_path) == 41


def test_length_three_uniform(free2):
    size = 10**6
    _, letters = sample_paths(free2, 3, size, np.random.default_rng(5))
    keys = Counter(map(bytes, letters.astype(np.int8)))
    assert len(keys) == 36
    p = 1 / 36
    se = np.sqrt(p * (1 - p) / size)
    assert max(abs(c / size - p) for c in keys.values()) <= 3 * se


def test_matches_direct_sphere_sampling(free2):
    size = 200_000
    _, a = sample_paths(free2, 4, size, np.random.default_rng(6))
    b = random_reduced_letters(2, 4, size, np.random.default_rng(7))
    ca, cb = Counter(map(bytes, a.astype(np.int8))), Counter(map(bytes, b))
    p = 1 / (4 * 27)
    se = np.sqrt(2 * p * (1 - p) / size)
    assert set(ca) == set(cb)
    assert max(abs(ca[k] - cb[k]) / size for k in ca) <= 4 * se


def test_block_symmetry(free2):
    # frequency of a length-3 block equals that of its inverse
    _, letters = sample_paths(free2, 30, 100_000, np.random.default_rng(8))
    blocks = letters.reshape(-1, 3)
    total = blocks.shape[0]
    counts = Counter(map(bytes, blocks.astype(np.int8)))
    for k, c in counts.items():
        w = Word(tuple(np.frombuffer(k, dtype=np.int8).tolist()), 2)
        ki = bytes(np.array(invert(w).letters, dtype=np.int8))
        p = (c + counts[ki]) / (2 * total)
        se = np.sqrt(2 * p * (1 - p) / total)
        assert abs(c - counts[ki]) / total <= 4 * se


def test_settles_in_one_maximal_component(two):
    rng = np.random.default_rng(9)
    fr = [settled_fraction(two, n, 4000, prefix=8, rng=rng) for n in (16, 64)]
    assert fr[1] >= 0.99
    # the single-branch restriction holds after a short prefix
    assert settled_fraction(two, 64, 4000, prefix=1, rng=rng) < fr[1]


# -- subword counts and concentration ---------------------------------------------------


def test_count_subword_empty_sigma():
    assert count_subword([], [0, 1, 2, 1, 2]) == 5


def test_count_subword_overlapping():
    assert count_subword([1, 1], [0, 1, 1, 1]) == 2


def test_free_group_path_measure(free2):
    rng = np.random.default_rng(10)
    for t in range(5):
        verts, _ = sample_paths(free2, t, 3, rng, start=np.array([1, 2, 3]))
        for row in verts:
            assert abs(free2.path_measure(row) - 0.25 * (1 / 3) ** t) < 1e-14


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=4), st.integers(0, 2**32))
def test_count_subword_against_naive(sigma, seed):
    path = np.random.default_rng(seed).integers(1, 5, size=60).tolist()
    naive = sum(path[i : i + len(sigma)] == sigma for i in range(len(path) - len(sigma) + 1))
    assert count_subword(sigma, path) == naive


def test_block_too_short():
    with pytest.raises(BlockTooShortError):
        chernoff_block_length(4, 3.0, 0.5)


def test_chernoff_small_run_is_deterministic(free2):
    a = chernoff_experiment(free2, 0.5, 0.1, 512, 60, seed=3)
    b = chernoff_experiment(free2, 0.5, 0.1, 512, 60, seed=3)
    assert np.array_equal(a.ratios, b.ratios)
    assert a.block_edges == chernoff_block_length(512, 3.0, 0.5)
    assert 0 <= a.violation_fraction <= 1


# -- anti-alignment ------------------------------------------------------------------------


def test_antialign_power_of_ab():
    g = Word.parse("ab" * 200)
    assert antialign_fraction(g, 2.5) == 0.0


def test_antialign_constructed_word():
    # blocks aa ab AA BA; their inverses AA BA aa ab all occur
    assert antialign_fraction(Word.parse("aaabAABA"), 2.5, block_length=2) == 1.0


def test_antialign_block_too_short():
    with pytest.raises(BlockTooShortError):
        antialign_fraction(Word.parse("abab"), 2.5, block_length=1)


def test_antialign_bruteforce_small():
    for t in itertools.islice(itertools.product("aAbB", repeat=6), 0, 4096, 37):
        w = Word.parse("".join(t))
        if len(w) < 4:
            continue
        blocks = [w.text[i : i + 2] for i in range(0, len(w) - 1, 2)]
        inv = [invert(Word.parse(b)).text for b in blocks]
        expect = sum(x in w.text for x in inv) / len(blocks)
        assert antialign_fraction(w, 2.5, block_length=2) == pytest.approx(expect)
