"""Constructive upper bounds on commutator length and the scl sandwich.

Upper bounds come from pairing the letters of a cyclically reduced word
``w`` in ``[F, F]`` into disjoint segments that are exact inverses of each
other.  Gluing the sides of the polygon bounded by ``w`` along the pairing
gives a closed orientable surface.  The glued edges form a fat graph with a
single boundary component reading ``w``, so ``w`` is a product of ``genus``
commutators.  With ``p`` segment pairs and ``V`` corner classes,
``genus = (1 + p - V) / 2``.

Pairing runs in two phases: optional successive blocks of length
``floor(ell * log n / log(2k - 1))`` paired by value, then a greedy
longest-first match of the remaining letters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Sequence

import numpy as np

from .quasimorphism import LowerBoundCertificate, NotInCommutatorSubgroupError, bavard_lower
from .words import (
    Word,
    abelianize,
    concat,
    cyclic_reduce,
    invert,
    invert_text,
    letter_to_char,
    power,
    reduce_text,
)

MAX_PAIRING_LENGTH = 2_000_000
MAX_BUDGET = 6


class SandwichInconsistencyError(AssertionError):
    pass


class CertificateError(ValueError):
    pass


def _require_commutator(g: Word) -> None:
    if not abelianize(g).is_zero():
        raise NotInCommutatorSubgroupError(f"{g} has nonzero abelianization {abelianize(g).exponent_sums}")


def homology_correction(g: Word) -> Word:
    """Shortest word ``a^s1 b^s2 ...`` with the same abelianization as ``g``."""
    letters: list[int] = []
    for i, s in enumerate(abelianize(g).exponent_sums, start=1):
        letters.extend([i if s > 0 else -i] * abs(s))
    return Word(tuple(letters), g.rank, _checked=True)


def cl_trivial_bound(h: Word) -> int:
    """``ceil(|h|/2)``: match each letter with an inverse partner, one commutator per match."""
    _require_commutator(h)
    return math.ceil(len(h) / 2)


# -- pairing ----------------------------------------------------------------


def block_pairs(text: str, b: int, used: bytearray) -> list[tuple[int, int, int]]:
    """Pair successive length-``b`` blocks whose values are mutually inverse."""
    n = len(text)
    pending: dict[str, list[int]] = {}
    pairs = []
    for s in range(0, n - b + 1, b):
        blk = text[s : s + b]
        bucket = pending.get(invert_text(blk))
        if bucket:
            j = bucket.pop()
            pairs.append((j, s, b))
            used[j : j + b] = b"\x01" * b
            used[s : s + b] = b"\x01" * b
        else:
            pending.setdefault(blk, []).append(s)
    return pairs


def greedy_pairs(text: str, max_len: int, used: bytearray) -> list[tuple[int, int, int]]:
    """Pair free windows with free inverse windows, longest windows first."""
    n = len(text)
    pairs = []
    for L in range(min(max_len, n // 2), 0, -1):
        mask = np.frombuffer(bytes(used), dtype=np.uint8)
        if mask.all():
            break
        c = np.concatenate([[0], np.cumsum(mask, dtype=np.int64)])
        starts = np.flatnonzero(c[L:] - c[:-L] == 0)
        if starts.size == 0:
            continue
        index: dict[str, list[int]] = {}
        for i in starts.tolist():
            index.setdefault(text[i : i + L], []).append(i)
        for i in starts.tolist():
            if used[i] or used[i + L - 1] or any(used[i : i + L]):
                continue
            cands = index.get(invert_text(text[i : i + L]))
            while cands:
                j = cands[-1]
                if any(used[j : j + L]) or (j < i + L and i < j + L):
                    cands.pop()
                    continue
                break
            if not cands:
                continue
            j = cands.pop()
            used[i : i + L] = b"\x01" * L
            used[j : j + L] = b"\x01" * L
            pairs.append((i, j, L))
    return pairs


def corner_classes(n: int, pairs: Sequence[tuple[int, int, int]]) -> int:
    """Number of vertices of the glued polygon of valence > 2.

    Corner ``x`` sits before letter ``x``.  A pair ``(i, j, L)`` identifies
    corner ``i`` with ``j + L`` and ``i + L`` with ``j``; corners inside a
    segment only produce valence-2 vertices, which cancel against edges.
    """
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j, L in pairs:
        for a, b in ((i, (j + L) % n), ((i + L) % n, j)):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
    ends = {x % n for i, j, L in pairs for x in (i, i + L, j, j + L)}
    return len({find(x) for x in ends})


def genus_of(n: int, pairs: Sequence[tuple[int, int, int]]) -> int:
    if n == 0:
        return 0
    v = corner_classes(n, pairs)
    twice = 1 + len(pairs) - v
    if twice % 2 or twice < 0:
        raise CertificateError(f"Euler characteristic parity failure: p={len(pairs)}, V={v}")
    return twice // 2


@dataclass(frozen=True)
class PairingCertificate:
    word: str  # cyclic core of g^N, the polygon boundary
    rank: int
    power: int
    block_length: int
    pairs: tuple[tuple[int, int, int], ...]  # (i, j, length) with word[j:j+L] = word[i:i+L]^-1
    vertex_count: int
    leftover: str = ""
    commutator_count_bound: int = 0

    @property
    def scl_upper(self) -> Fraction:
        return Fraction(self.commutator_count_bound, self.power)

    def to_dict(self) -> dict:
        return {
            "power": self.power,
            "block_length": self.block_length,
            "pairs": [list(p) for p in self.pairs],
            "vertices": self.vertex_count,
            "leftover": self.leftover,
            "commutator_count_bound": self.commutator_count_bound,
            "scl_upper": str(self.scl_upper),
        }


def pairing_upper(
    g: Word, ell: float | None = 0.9, n_power: int = 1, max_length: int = MAX_PAIRING_LENGTH
) -> PairingCertificate:
    """Bound ``cl(g^N)`` by the genus of an inverse-segment gluing; ``scl(g) <= bound/N``.

    ``ell=None`` skips the block phase.  The greedy phase always covers every
    letter because the abelianization vanishes.
    """
    _require_commutator(g)
    if ell is not None and not 0 < ell < 1:
        raise ValueError("ell must lie in (0, 1)")
    if n_power < 1:
        raise ValueError("power must be >= 1")
    if len(g) * n_power > max_length:
        raise MemoryError(f"|g^{n_power}| exceeds the pairing budget {max_length}")
    core = cyclic_reduce(power(g, n_power))[0]
    text = core.text
    n = len(text)
    if n == 0:
        return PairingCertificate("", g.rank, n_power, 0, (), 0, "", 0)
    used = bytearray(n)
    b = 0
    pairs: list[tuple[int, int, int]] = []
    if ell is not None and g.rank > 1:
        b = math.floor(ell * math.log(n) / math.log(2 * g.rank - 1))
        if b >= 1:
            pairs += block_pairs(text, b, used)
    max_len = int(2 * math.log(n) / math.log(3)) + 2
    pairs += greedy_pairs(text, max_len, used)
    if not all(used):
        raise CertificateError("pairing failed to cover the word")
    v = corner_classes(n, pairs)
    cert = PairingCertificate(text, g.rank, n_power, b, tuple(pairs), v, "", genus_of(n, pairs))
    return cert


def verify_pairing(cert: PairingCertificate) -> bool:
    """Audit a pairing certificate from its stored data alone."""
    text = cert.word
    n = len(text)
    if n == 0:
        return cert.commutator_count_bound == 0 and not cert.pairs
    cover = bytearray(n)
    for i, j, L in cert.pairs:
        if L < 1 or i < 0 or j < 0 or i + L > n or j + L > n:
            return False
        if text[j : j + L] != invert_text(text[i : i + L]):
            return False
        for s in (i, j):
            if any(cover[s : s + L]):
                return False
            cover[s : s + L] = b"\x01" * L
    if not all(cover):
        return False
    # the boundary must be a reduced cyclic word in the commutator subgroup
    if reduce_text(text) != text or (n > 1 and text[0] == text[-1].swapcase()):
        return False
    try:
        genus = genus_of(n, cert.pairs)
    except CertificateError:
        return False
    return genus == cert.commutator_count_bound and corner_classes(n, cert.pairs) == cert.vertex_count


# -- exact commutator oracle ---------------------------------------------------


def _words_up_to(rank: int, length: int) -> list[str]:
    letters = [letter_to_char(x) for x in [*range(1, rank + 1), *range(-1, -rank - 1, -1)]]
    out = [""]
    frontier = [""]
    for _ in range(length):
        nxt = []
        for w in frontier:
            for c in letters:
                if not w or w[-1] != c.swapcase():
                    nxt.append(w + c)
        out += nxt
        frontier = nxt
    return out


@dataclass(frozen=True)
class CommutatorWitness:
    found: bool
    x: Word | None = None
    y: Word | None = None


def is_commutator_budget(w: Word, budget: int) -> CommutatorWitness:
    """Search reduced ``x, y`` with ``|x|, |y| <= budget`` and ``[x, y] = x y x^-1 y^-1 = w``.

    A negative answer only means no witness exists within the budget.
    """
    _require_commutator(w)
    if budget > MAX_BUDGET:
        raise ValueError(f"budget {budget} > {MAX_BUDGET} refused")
    target = w.text
    if not target:
        e = Word.identity(w.rank)
        return CommutatorWitness(True, e, e)
    words = _words_up_to(w.rank, budget)
    words.sort(key=len)
    for x, y in product(words, repeat=2):
        if not x or not y:
            continue
        xy = reduce_text(x + y)
        if reduce_text(xy + invert_text(x) + invert_text(y)) == target:
            return CommutatorWitness(True, Word.from_text(x, w.rank), Word.from_text(y, w.rank))
    return CommutatorWitness(False)


# -- sandwich ------------------------------------------------------------------


@dataclass(frozen=True)
class SclSandwich:
    word: Word
    lower: Fraction
    upper: Fraction
    lower_certificate: LowerBoundCertificate
    upper_certificate: PairingCertificate | None
    power_used: int
    upper_source: str = "pairing"

    def to_dict(self) -> dict:
        return {
            "word": str(self.word),
            "n": len(self.word),
            "lower": str(self.lower),
            "upper": str(self.upper),
            "lower_float": float(self.lower),
            "upper_float": float(self.upper),
            "lower_certificate": self.lower_certificate.to_dict(),
            "upper_certificate": self.upper_certificate.to_dict() if self.upper_certificate else None,
            "upper_source": self.upper_source,
            "power_used": self.power_used,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class SandwichParams:
    ells: tuple[float | None, ...] = (None, 0.9)
    powers: tuple[int, ...] = (1, 2, 4, 8)
    L: float = 2.5
    lower_powers: tuple[int, ...] = (1, 50)
    family: tuple[str, ...] | None = None
    oracle_budget: int = 2
    max_length: int = 200_000


def sandwich(g: Word, params: SandwichParams = SandwichParams()) -> SclSandwich:
    _require_commutator(g)
    if not g.letters:
        lb = bavard_lower(g)
        return SclSandwich(g, Fraction(0), Fraction(0), lb, None, 1, "identity")
    lb = bavard_lower(g, L=params.L, family=params.family, powers=params.lower_powers, max_length=params.max_length)
    best: PairingCertificate | None = None
    for ell in params.ells:
        for n_pow in params.powers:
            if n_pow > 1 and len(g) * n_pow > params.max_length:
                continue
            cert = pairing_upper(g, ell, n_pow, max_length=max(params.max_length, len(g)))
            if best is None or cert.scl_upper < best.scl_upper:
                best = cert
    upper, source = best.scl_upper, "pairing"
    core = cyclic_reduce(g)[0]
    if len(core) <= 4 * params.oracle_budget and params.oracle_budget > 0:
        wit = is_commutator_budget(core, params.oracle_budget)
        if wit.found and 1 < upper:
            upper, source = Fraction(1), f"commutator [{wit.x}, {wit.y}]"
    if lb.lower_bound > upper:
        raise SandwichInconsistencyError(f"lower {lb.lower_bound} > upper {upper} for {g}")
    return SclSandwich(g, lb.lower_bound, upper, lb, best, best.power, source)


def correction_pair(g: Word) -> tuple[Word, Word]:
    """``(h, g h^-1)``: the homology correction and the corrected word in ``[F, F]``."""
    h = homology_correction(g)
    return h, concat(g, invert(h))
