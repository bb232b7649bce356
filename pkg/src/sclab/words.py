"""Reduced words in a free group of rank k.

Letters are signed integers: ``+i`` is the i-th generator, ``-i`` its
inverse (1 <= i <= k).  The text format writes generator i as the i-th
lowercase letter and its inverse in uppercase, so ``"abAB"`` is the
commutator [a, b].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

MAX_TEXT_RANK = 26


class WordError(ValueError):
    """Base class for word-level errors."""


class InvalidAlphabetError(WordError):
    pass


class RankMismatchError(WordError):
    pass


def letter_to_char(x: int) -> str:
    c = chr(ord("a") + abs(x) - 1)
    return c if x > 0 else c.upper()


def char_to_letter(c: str) -> int:
    if "a" <= c <= "z":
        return ord(c) - ord("a") + 1
    if "A" <= c <= "Z":
        return -(ord(c) - ord("A") + 1)
    raise InvalidAlphabetError(f"not a generator symbol: {c!r}")


def _free_reduce(letters: Iterable[int]) -> list[int]:
    stack: list[int] = []
    for x in letters:
        if stack and stack[-1] == -x:
            stack.pop()
        else:
            stack.append(x)
    return stack


def invert_text(s: str) -> str:
    return s[::-1].swapcase()


def reduce_text(s: str) -> str:
    """Free reduction on the text form."""
    stack: list[str] = []
    for c in s:
        if stack and stack[-1] == c.swapcase():
            stack.pop()
        else:
            stack.append(c)
    return "".join(stack)


def concat_text(u: str, v: str) -> str:
    """Reduced product of two reduced text words (cancellation only at the seam)."""
    k = 0
    m = min(len(u), len(v))
    while k < m and u[-1 - k] == v[k].swapcase():
        k += 1
    return u[: len(u) - k] + v[k:]


@dataclass(frozen=True)
class Word:
    """A reduced word.  Build instances with :func:`reduce` or :meth:`parse`."""

    letters: tuple[int, ...]
    rank: int
    _checked: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        if self._checked:
            return
        if self.rank < 1:
            raise InvalidAlphabetError("rank must be >= 1")
        for x in self.letters:
            if x == 0 or abs(x) > self.rank:
                raise InvalidAlphabetError(f"letter {x} outside rank {self.rank}")
        for x, y in zip(self.letters, self.letters[1:]):
            if x == -y:
                raise WordError("word is not reduced; use reduce()")

    @classmethod
    def parse(cls, text: str, rank: int | None = None) -> "Word":
        """Parse ``"abAB"``-style text (spaces ignored) and freely reduce."""
        text = text.replace(" ", "")
        if text in ("", "e", "1"):
            return cls((), rank or 1, _checked=True)
        letters = [char_to_letter(c) for c in text]
        needed = max(abs(x) for x in letters)
        if rank is None:
            rank = needed
        if rank > MAX_TEXT_RANK:
            raise InvalidAlphabetError(f"text format supports rank <= {MAX_TEXT_RANK}")
        return reduce(letters, rank)

    @classmethod
    def from_text(cls, text: str, rank: int) -> "Word":
        """Wrap text that is already known to be reduced (no validation)."""
        return cls(tuple(char_to_letter(c) for c in text), rank, _checked=True)

    @classmethod
    def identity(cls, rank: int) -> "Word":
        return cls((), rank, _checked=True)

    @cached_property
    def text(self) -> str:
        if self.rank > MAX_TEXT_RANK:
            raise InvalidAlphabetError(f"text format supports rank <= {MAX_TEXT_RANK}")
        return "".join(letter_to_char(x) for x in self.letters)

    def __len__(self) -> int:
        return len(self.letters)

    def __str__(self) -> str:
        return self.text if self.letters else "e"

    def __mul__(self, other: "Word") -> "Word":
        return concat(self, other)

    def __invert__(self) -> "Word":
        return invert(self)

    def __pow__(self, n: int) -> "Word":
        return power(self, n)

    def array(self) -> np.ndarray:
        return np.asarray(self.letters, dtype=np.int8 if self.rank < 128 else np.int64)


@dataclass(frozen=True)
class AbelianImage:
    exponent_sums: tuple[int, ...]

    def is_zero(self) -> bool:
        return not any(self.exponent_sums)

    def __add__(self, other: "AbelianImage") -> "AbelianImage":
        return AbelianImage(tuple(a + b for a, b in zip(self.exponent_sums, other.exponent_sums)))

    def __neg__(self) -> "AbelianImage":
        return AbelianImage(tuple(-a for a in self.exponent_sums))

    def l1(self) -> int:
        return sum(abs(a) for a in self.exponent_sums)


def reduce(raw: Sequence[int], rank: int) -> Word:
    for x in raw:
        if x == 0 or abs(x) > rank:
            raise InvalidAlphabetError(f"letter {x} outside rank {rank}")
    return Word(tuple(_free_reduce(raw)), rank, _checked=True)


def _check_rank(*words: Word) -> int:
    ranks = {w.rank for w in words}
    if len(ranks) != 1:
        raise RankMismatchError(f"rank mismatch: {sorted(ranks)}")
    return ranks.pop()


def invert(w: Word) -> Word:
    return Word(tuple(-x for x in reversed(w.letters)), w.rank, _checked=True)


def concat(*words: Word) -> Word:
    rank = _check_rank(*words)
    out: list[int] = []
    for w in words:
        for x in w.letters:
            if out and out[-1] == -x:
                out.pop()
            else:
                out.append(x)
    return Word(tuple(out), rank, _checked=True)


def power(w: Word, n: int) -> Word:
    if n < 0:
        return power(invert(w), -n)
    if n == 0 or not w.letters:
        return Word.identity(w.rank)
    core, conj = cyclic_reduce(w)
    body = core.letters * n
    return concat(conj, Word(body, w.rank, _checked=True), invert(conj))


def cyclic_reduce(w: Word) -> tuple[Word, Word]:
    """Split ``w = conjugator * core * conjugator^-1`` with ``core`` cyclically reduced."""
    xs = w.letters
    i, j = 0, len(xs) - 1
    while i < j and xs[i] == -xs[j]:
        i += 1
        j -= 1
    core = Word(xs[i : j + 1], w.rank, _checked=True)
    conj = Word(xs[:i], w.rank, _checked=True)
    return core, conj


def is_cyclically_reduced(w: Word) -> bool:
    return len(w) < 2 or w.letters[0] != -w.letters[-1]


def abelianize(w: Word) -> AbelianImage:
    sums = [0] * w.rank
    for x in w.letters:
        sums[abs(x) - 1] += 1 if x > 0 else -1
    return AbelianImage(tuple(sums))


def translation_length(w: Word) -> int:
    """Translation length on the Cayley tree: the length of the cyclic core."""
    return len(cyclic_reduce(w)[0])


# -- disjoint occurrences -------------------------------------------------


def occurrence_intervals(text: str, patterns: Iterable[str], cyclic: bool = False) -> list[tuple[int, int]]:
    """All half-open intervals ``[s, s + len(p))`` where a pattern occurs.

    In cyclic mode starts range over ``0..n-1`` and an interval may run past
    ``n`` (it wraps); patterns longer than the word never occur.
    """
    n = len(text)
    by_len: dict[int, set[str]] = {}
    for p in patterns:
        by_len.setdefault(len(p), set()).add(p)
    hay = text + text if cyclic else text
    out = []
    for m, pats in by_len.items():
        if m == 0 or m > n:
            continue
        last = n if cyclic else n - m + 1
        if len(pats) == 1:
            (p,) = pats
            s = hay.find(p)
            while s != -1 and s < last:
                out.append((s, s + m))
                s = hay.find(p, s + 1)
        else:
            for s in range(last):
                if hay[s : s + m] in pats:
                    out.append((s, s + m))
    return out


def _greedy_linear(intervals: list[tuple[int, int]]) -> list[tuple[int, int]]:
    chosen = []
    end = -1
    for s, e in sorted(intervals, key=lambda iv: (iv[1], iv[0])):
        if s >= end:
            chosen.append((s, e))
            end = e
    return chosen


def _validate_family(patterns: Sequence[str]) -> None:
    for p in patterns:
        if len(p) < 2:
            raise WordError(f"family members must have length >= 2, got {p!r}")


def max_disjoint_occurrences(
    w: Word | str, family: Iterable[Word | str], cyclic: bool = False
) -> tuple[int, list[int]]:
    """Maximum number of pairwise disjoint occurrences of family members in ``w``.

    Returns ``(count, starts)``.  Linear words use earliest-endpoint interval
    scheduling.  On a cyclic word at most one chosen interval can cover the
    seam, so the optimum is the better of the seam-free greedy and, for each
    seam-crossing interval, one plus the greedy inside its complement.
    """
    text = w if isinstance(w, str) else w.text
    patterns = [p if isinstance(p, str) else p.text for p in family]
    _validate_family(patterns)
    n = len(text)
    ivs = occurrence_intervals(text, patterns, cyclic=cyclic)
    if not cyclic:
        chosen = _greedy_linear(ivs)
        return len(chosen), [s for s, _ in chosen]
    inner = [iv for iv in ivs if iv[1] <= n]
    best = _greedy_linear(inner)
    for s, e in ivs:
        if e <= n:
            continue
        lo, hi = e - n, s
        rest = _greedy_linear([iv for iv in inner if iv[0] >= lo and iv[1] <= hi])
        if 1 + len(rest) > len(best):
            best = [(s, e)] + rest
    starts = sorted(s for s, _ in best)
    return len(best), starts


def brute_force_disjoint(text: str, patterns: Iterable[str], cyclic: bool = False) -> int:
    """Exhaustive optimum over subsets of occurrence intervals (test oracle)."""
    n = len(text)
    ivs = occurrence_intervals(text, list(patterns), cyclic=cyclic)

    def cells(iv):
        return {i % n for i in range(iv[0], iv[1])}

    sets = [cells(iv) for iv in ivs]
    for r in range(len(sets), 0, -1):
        for combo in combinations(sets, r):
            total = set()
            ok = True
            for c in combo:
                if total & c:
                    ok = False
                    break
                total |= c
            if ok:
                return r
    return 0


# -- random words ----------------------------------------------------------


def alphabet(rank: int) -> np.ndarray:
    """Letters ordered ``1..k, -1..-k`` so index ``i`` has inverse ``(i + k) % 2k``."""
    gens = np.arange(1, rank + 1)
    return np.concatenate([gens, -gens])


def random_reduced_letters(rank: int, length: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` uniform reduced words of the given length, as a letter matrix."""
    two_k = 2 * rank
    if length == 0:
        return np.zeros((size, 0), dtype=np.int8)
    incr = rng.integers(2 * rank - 1, size=(size, length)) + rank + 1
    incr[:, 0] = rng.integers(two_k, size=size)
    idx = np.cumsum(incr, axis=1) % two_k
    return alphabet(rank).astype(np.int8)[idx]


def random_reduced_word(rank: int, length: int, rng: np.random.Generator) -> Word:
    """Uniform element of the sphere of the given radius."""
    row = random_reduced_letters(rank, length, 1, rng)[0]
    return Word(tuple(int(x) for x in row), rank, _checked=True)


def random_walk_word(rank: int, steps: int, rng: np.random.Generator) -> Word:
    """Simple random walk: ``steps`` uniform letters, then freely reduced."""
    raw = alphabet(rank)[rng.integers(2 * rank, size=steps)]
    return reduce([int(x) for x in raw], rank)
