import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dp_disjoint
from sclab.words import (
    AbelianImage,
    InvalidAlphabetError,
    RankMismatchError,
    Word,
    WordError,
    abelianize,
    concat,
    concat_text,
    cyclic_reduce,
    invert,
    max_disjoint_occurrences,
    power,
    random_reduced_letters,
    random_walk_word,
    reduce,
    translation_length,
)

W = lambda s, k=2: Word.parse(s, k)  # noqa: E731

letters2 = st.lists(st.sampled_from([1, -1, 2, -2]), max_size=30)


# -- reduction ------------------------------------------------------------------


def test_reduce_examples():
    assert reduce([1, -1], 2).letters == ()
    assert W("abBa").text == "aa"
    assert W("aBbA") == Word.identity(2)


def test_invert_and_concat_examples():
    assert invert(W("ab")).text == "BA"
    assert concat(W("ab"), W("Ba")).text == "aa"


def test_invalid_alphabet():
    with pytest.raises(InvalidAlphabetError):
        reduce([3], 2)
    with pytest.raises(InvalidAlphabetError):
        reduce([0], 2)


def test_unreduced_word_rejected():
    with pytest.raises(WordError):
        Word((1, -1), 2)


def test_rank_mismatch():
    with pytest.raises(RankMismatchError):
        concat(W("a", 1), W("b", 2))


def test_concat_with_inverse_is_identity_many():
    rng = np.random.default_rng(0)
    rows = random_reduced_letters(2, 20, 10_000, rng)
    for row in rows:
        w = Word(tuple(row.tolist()), 2)
        assert len(concat(w, invert(w))) == 0


@given(letters2)
def test_reduced_output_has_no_cancelling_pair(xs):
    w = reduce(xs, 2)
    assert all(a != -b for a, b in zip(w.letters, w.letters[1:]))


@given(letters2, letters2)
def test_concat_matches_reduce_of_raw_concatenation(xs, ys):
    assert concat(reduce(xs, 2), reduce(ys, 2)) == reduce(xs + ys, 2)


@given(letters2)
def test_reduce_idempotent(xs):
    w = reduce(xs, 2)
    assert reduce(w.letters, 2) == w


@given(letters2, letters2)
def test_abelianization_is_homomorphism(xs, ys):
    u, v = reduce(xs, 2), reduce(ys, 2)
    assert abelianize(concat(u, v)) == abelianize(u) + abelianize(v)
    assert abelianize(invert(u)) == -abelianize(u)


def test_text_helpers_agree():
    assert concat_text("abA", "aB") == concat(W("abA"), W("aB")).text


# -- cyclic reduction, abelianization, translation length ------------------------------


def test_cyclic_reduce_examples():
    core, conj = cyclic_reduce(W("babAB"))
    assert core.text == "b" and conj.text == "ba"
    core, conj = cyclic_reduce(W("abAB"))
    assert core.text == "abAB" and conj.text == ""


@given(letters2)
def test_cyclic_reduce_recomposes(xs):
    w = reduce(xs, 2)
    core, conj = cyclic_reduce(w)
    assert concat(conj, core, invert(conj)) == w
    if len(core) >= 2:
        assert core.letters[0] != -core.letters[-1]


def test_abelianize_examples():
    assert abelianize(W("abAB")) == AbelianImage((0, 0))
    assert abelianize(W("aab")) == AbelianImage((2, 1))


def test_translation_length_examples():
    assert translation_length(W("abA")) == 1
    assert translation_length(W("abAB")) == 4


@given(letters2, st.integers(1, 5))
def test_translation_length_is_homogeneous(xs, n):
    w = reduce(xs, 2)
    assert translation_length(power(w, n)) == n * translation_length(w)


def test_random_walk_is_reduced():
    w = random_walk_word(2, 100, np.random.default_rng(1))
    assert all(a != -b for a, b in zip(w.letters, w.letters[1:]))


def test_random_reduced_letters_uniform_length_two():
    rows = random_reduced_letters(2, 2, 120_000, np.random.default_rng(2))
    _, counts = np.unique(rows[:, 0] * 10 + rows[:, 1], return_counts=True)
    assert counts.size == 12
    se = np.sqrt(120_000 / 12)
    assert np.abs(counts - 10_000).max() < 4 * se


# -- disjoint occurrences ---------------------------------------------------------


def test_disjoint_examples():
    assert max_disjoint_occurrences("ababab", ["ab"])[0] == 3
    assert max_disjoint_occurrences("ababab", ["abab"])[0] == 1


def test_short_family_member_rejected():
    with pytest.raises(WordError):
        max_disjoint_occurrences("abab", ["a"])


def test_cyclic_counts_seam():
    # "ba" only occurs across the seam
    assert max_disjoint_occurrences("aab", ["ba"], cyclic=True)[0] == 1
    assert max_disjoint_occurrences("aab", ["ba"], cyclic=False)[0] == 0


def test_positions_are_disjoint_occurrences():
    count, starts = max_disjoint_occurrences("abababAB", ["ab", "bA"])
    assert count == len(starts)
    ends = [s + 2 for s in starts]
    assert all(e <= s for e, s in zip(ends, starts[1:]))


texts = st.lists(st.sampled_from("aAbB"), min_size=0, max_size=14).map("".join).map(lambda s: W(s).text)
families = st.lists(
    st.lists(st.sampled_from("aAbB"), min_size=2, max_size=4).map("".join).map(lambda s: W(s).text), min_size=1, max_size=3
).map(lambda fs: [f for f in fs if len(f) >= 2] or ["ab"])


@settings(max_examples=300)
@given(texts, families)
def test_disjoint_matches_oracle(text, fam):
    assert max_disjoint_occurrences(text, fam)[0] == dp_disjoint(text, fam)


@settings(max_examples=300)
@given(texts, families)
def test_cyclic_disjoint_matches_oracle(text, fam):
    assert max_disjoint_occurrences(text, fam, cyclic=True)[0] == dp_disjoint(text, fam, cyclic=True)


def test_oracle_sanity_exhaustive_small():
    for text in ("".join(t) for t in itertools.product("ab", repeat=6)):
        assert dp_disjoint(text, ["ab"]) == text.count("ab")
