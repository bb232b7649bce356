"""Small counting quasimorphisms on free groups and Bavard-duality lower bounds.

For a family Sigma of reduced words, ``c_Sigma(g)`` is the maximal number of
disjoint copies of members of Sigma in the reduced word of ``g``.  In a tree
the geodesic is the only path worth considering: a detour of length ``2d``
can carry at most ``d`` extra copies of words of length >= 2, so it never
lowers ``length - c``.  The antisymmetrisation ``h = c_Sigma - c_{Sigma^-1}``
is a quasimorphism.

Defect.  The words ``g``, ``h`` and ``gh`` form a tripod.  Each leg can
break at most two disjoint copies at its junction end (one per counting
orientation), which gives the certified bound 6 used throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .words import (
    Word,
    WordError,
    abelianize,
    concat_text,
    invert_text,
    max_disjoint_occurrences,
    power,
    random_reduced_letters,
)

DEFECT_BOUND = Fraction(6)
MAX_POWER_LENGTH = 10**7


class NotInCommutatorSubgroupError(ValueError):
    pass


class PowerLengthError(ValueError):
    pass


@dataclass(frozen=True)
class CountingFamily:
    sigma: tuple[str, ...]
    rank: int

    def __post_init__(self):
        for s in self.sigma:
            if len(s) < 2:
                raise WordError(f"family members must have length >= 2, got {s!r}")
            w = Word.parse(s, self.rank)
            if w.text != s:
                raise WordError(f"family member {s!r} is not reduced")

    @classmethod
    def of(cls, words: Iterable[Word | str], rank: int) -> "CountingFamily":
        texts = sorted({w if isinstance(w, str) else w.text for w in words})
        return cls(tuple(texts), rank)

    def inverse(self) -> "CountingFamily":
        return CountingFamily(tuple(sorted(invert_text(s) for s in self.sigma)), self.rank)


@dataclass(frozen=True)
class QuasimorphismEval:
    c_sigma: int
    c_sigma_inv: int
    h_sigma: int
    certified_defect: Fraction


def small_count(g: Word, family: CountingFamily) -> int:
    if not family.sigma:
        return 0
    return max_disjoint_occurrences(g, family.sigma)[0]


def evaluate(g: Word, family: CountingFamily) -> QuasimorphismEval:
    c = small_count(g, family)
    ci = small_count(g, family.inverse())
    return QuasimorphismEval(c, ci, c - ci, defect_certificate(family))


def h_sigma(g: Word, family: CountingFamily) -> int:
    return evaluate(g, family).h_sigma


def defect_certificate(family: CountingFamily) -> Fraction:
    return DEFECT_BOUND


def empirical_defect(
    family: CountingFamily, trials: int, seed: int, max_length: int = 12
) -> tuple[int, tuple[str, str] | None]:
    """Largest observed ``|h(gh) - h(g) - h(h)|`` over random pairs of mixed lengths.

    Returns the maximum and a witness pair (as text).
    """
    rng = np.random.default_rng(seed)
    k = family.rank
    pats, inv = family.sigma, family.inverse().sigma
    cache: dict[str, int] = {}

    def h(text: str) -> int:
        v = cache.get(text)
        if v is None:
            v = max_disjoint_occurrences(text, pats)[0] - max_disjoint_occurrences(text, inv)[0]
            if len(cache) < 200_000:
                cache[text] = v
        return v

    best, witness = 0, None
    batch = 10_000
    done = 0
    while done < trials:
        m = min(batch, trials - done)
        lens = rng.integers(0, max_length + 1, size=(m, 2))
        gs = [_rand_text(k, int(a), rng) for a in lens[:, 0]]
        hs = [_rand_text(k, int(b), rng) for b in lens[:, 1]]
        for x, y in zip(gs, hs):
            d = abs(h(concat_text(x, y)) - h(x) - h(y))
            if d > best:
                best, witness = d, (x, y)
        done += m
    return best, witness


def _rand_text(k: int, length: int, rng: np.random.Generator) -> str:
    row = random_reduced_letters(k, length, 1, rng)[0]
    return "".join(chr(96 + x) if x > 0 else chr(64 - x) for x in row.tolist())


def homogenize_estimate(
    family: CountingFamily, g: Word, n: int, max_length: int = MAX_POWER_LENGTH
) -> tuple[Fraction, Fraction]:
    """``h(g^n)/n`` and the error bound ``D/n`` against the homogenisation."""
    if n < 1:
        raise ValueError("power must be >= 1")
    if len(g) * n > max_length:
        raise PowerLengthError(f"|g^{n}| would exceed {max_length}")
    return Fraction(h_sigma(power(g, n), family), n), defect_certificate(family) / n


# -- lower bounds -------------------------------------------------------------


@dataclass(frozen=True)
class LowerBoundCertificate:
    word: str
    rank: int
    family: tuple[str, ...]
    power: int
    c: int
    c_inv: int
    defect_bound: Fraction
    lower_bound: Fraction
    source: str

    def to_dict(self) -> dict:
        return {
            "family": list(self.family),
            "power": self.power,
            "c": self.c,
            "c_inv": self.c_inv,
            "defect_bound": str(self.defect_bound),
            "lower_bound": str(self.lower_bound),
            "source": self.source,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def bound_from_counts(h: int, n: int, defect: Fraction = DEFECT_BOUND) -> Fraction:
    """``(h(g^n) - D) / (4 D n)``, clipped at 0.

    The homogenisation satisfies ``phi(g) >= (h(g^n) - D)/n`` and has defect at
    most ``2D``; Bavard duality gives ``scl(g) >= phi(g) / (2 D(phi))``.
    """
    val = (Fraction(h) - defect) / (4 * defect * n)
    return max(val, Fraction(0))


def recipe_family(g: Word, L: float = 2.5, lam: float | None = None) -> tuple[CountingFamily, int]:
    """Successive blocks of ``g`` whose inverse does not occur in ``g``."""
    n = len(g)
    lam = lam if lam is not None else 2 * g.rank - 1
    if n < 2:
        return CountingFamily((), g.rank), 0
    b = math.floor(L * math.log(n) / math.log(lam)) if lam > 1 else n
    if b < 2:
        return CountingFamily((), g.rank), b
    text = g.text
    keep = set()
    for s in range(0, n - b + 1, b):
        blk = text[s : s + b]
        if invert_text(blk) not in text:
            keep.add(blk)
    return CountingFamily(tuple(sorted(keep)), g.rank), b


def _best_single_block(g: Word, b: int) -> CountingFamily:
    text = g.text
    b = max(b, 2)
    best, best_h = None, None
    for s in range(0, len(text) - b + 1, b):
        fam = CountingFamily((text[s : s + b],), g.rank)
        hv = h_sigma(g, fam)
        if best_h is None or hv > best_h:
            best, best_h = fam, hv
    return best if best is not None else CountingFamily((), g.rank)


def bavard_lower(
    g: Word,
    L: float = 2.5,
    family: CountingFamily | Iterable[str] | None = None,
    powers: Sequence[int] = (1,),
    lam: float | None = None,
    max_length: int = MAX_POWER_LENGTH,
) -> LowerBoundCertificate:
    """Certified lower bound on ``scl(g)`` for ``g`` in the commutator subgroup.

    Candidate families are the block recipe, its single-best-block fallback
    when the recipe is empty, and an optional user family.  The best bound
    over candidates and configured powers is returned with its counts.
    """
    if not abelianize(g).is_zero():
        raise NotInCommutatorSubgroupError(f"{g} has nonzero abelianization")
    if not g.letters:
        return LowerBoundCertificate("", g.rank, (), 1, 0, 0, DEFECT_BOUND, Fraction(0), "identity")
    cands: list[tuple[str, CountingFamily]] = []
    rec, b = recipe_family(g, L, lam)
    if rec.sigma:
        cands.append(("recipe", rec))
    elif len(g) >= 2:
        cands.append(("best-block", _best_single_block(g, b if b >= 2 else 2)))
    if family is not None:
        if not isinstance(family, CountingFamily):
            family = CountingFamily.of(family, g.rank)
        cands.append(("user", family))

    best = None
    for src, fam in cands:
        for n in powers:
            if n < 1 or len(g) * n > max_length:
                continue
            gn = power(g, n)
            ev = evaluate(gn, fam)
            lb = bound_from_counts(ev.h_sigma, n, ev.certified_defect)
            if best is None or lb > best.lower_bound:
                best = LowerBoundCertificate(
                    g.text, g.rank, fam.sigma, n, ev.c_sigma, ev.c_sigma_inv, ev.certified_defect, lb, src
                )
    if best is None:
        best = LowerBoundCertificate(g.text, g.rank, (), 1, 0, 0, DEFECT_BOUND, Fraction(0), "none")
    return best


def verify_lower_certificate(cert: LowerBoundCertificate) -> bool:
    """Recount from the stored data and check the bound is reproduced exactly."""
    if not cert.word:
        return cert.lower_bound == 0
    g = Word.parse(cert.word, cert.rank)
    if not abelianize(g).is_zero():
        return False
    fam = CountingFamily(tuple(cert.family), cert.rank)
    ev = evaluate(power(g, cert.power), fam)
    if (ev.c_sigma, ev.c_sigma_inv) != (cert.c, cert.c_inv):
        return False
    return bound_from_counts(ev.h_sigma, cert.power, defect_certificate(fam)) == cert.lower_bound
