"""Reproducible parallel trial runner and the statistical fits used by the experiments."""

from __future__ import annotations

import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats

MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(master: int, index: int) -> int:
    """Per-trial seed depending only on the master seed and the trial index."""
    return _splitmix64(_splitmix64(master & MASK64) ^ (index & MASK64))


@dataclass(frozen=True)
class TrialFailure:
    index: int
    error: str


@dataclass
class RunResult:
    values: list[Any]
    failures: list[TrialFailure] = field(default_factory=list)
    indices: list[int] = field(default_factory=list)


def _run_chunk(fn: Callable, master: int, idx: Sequence[int], pass_index: bool = False) -> list[tuple[int, bool, Any]]:
    out = []
    for i in idx:
        try:
            seed = derive_seed(master, i)
            out.append((i, True, fn(i, seed) if pass_index else fn(seed)))
        except Exception as exc:  # recorded per trial, never silently dropped
            out.append((i, False, f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=2)}"))
    return out


def run_trials(
    fn: Callable[..., Any], trials: int, seed: int, workers: int = 1, chunk: int = 64, pass_index: bool = False
) -> RunResult:
    """Run ``fn(trial_seed)`` (or ``fn(index, trial_seed)``) for ``trials`` indices.

    Results are ordered by trial index and do not depend on ``workers``.
    ``fn`` must be picklable when ``workers > 1``.
    """
    chunks = [range(s, min(s + chunk, trials)) for s in range(0, trials, chunk)]
    rows: list[tuple[int, bool, Any]] = []
    if workers <= 1:
        for c in chunks:
            rows.extend(_run_chunk(fn, seed, c, pass_index))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            n = len(chunks)
            for part in pool.map(_run_chunk, [fn] * n, [seed] * n, chunks, [pass_index] * n):
                rows.extend(part)
    rows.sort(key=lambda r: r[0])
    res = RunResult([])
    for i, ok, v in rows:
        if ok:
            res.values.append(v)
            res.indices.append(i)
        else:
            res.failures.append(TrialFailure(i, v))
    return res


# -- fits ---------------------------------------------------------------------


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    slope_se: float


def powerlaw_fit(x: Sequence[float], y: Sequence[float]) -> PowerLawFit:
    """Least-squares line through ``(log x, log y)``; needs at least 4 positive points."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size != y.size or x.size < 4:
        raise ValueError("need at least 4 matching points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive data")
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    r = stats.linregress(lx, ly)
    return PowerLawFit(float(r.slope), float(r.intercept), float(r.stderr))


@dataclass(frozen=True)
class NormalFit:
    mean: float
    sd: float
    var: float
    skew: float
    ks_statistic: float
    ks_pvalue: float
    degenerate: bool = False


def normal_fit_tests(samples: Sequence[float], min_samples: int = 100) -> NormalFit:
    """Fit a normal by moments and report the Kolmogorov-Smirnov distance to it."""
    x = np.asarray(samples, dtype=float)
    if x.size < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {x.size}")
    mu, sd = float(x.mean()), float(x.std(ddof=1))
    if sd == 0:
        return NormalFit(mu, 0.0, 0.0, 0.0, 1.0, 0.0, degenerate=True)
    ks = stats.kstest(x, "norm", args=(mu, sd))
    return NormalFit(mu, sd, sd * sd, float(stats.skew(x)), float(ks.statistic), float(ks.pvalue))


def lattice_ks(samples: Sequence[float], mean: float, sd: float) -> float:
    """KS distance to a normal for integer-valued samples, compared at half-integers.

    Integer samples have a step CDF, so comparing at the jumps overstates the
    distance by half a lattice atom; evaluating at ``k + 1/2`` is the
    continuity-corrected version.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    grid = np.arange(math.floor(x[0]) - 1, math.ceil(x[-1]) + 1) + 0.5
    emp = np.searchsorted(x, grid, side="right") / x.size
    return float(np.max(np.abs(emp - stats.norm.cdf(grid, mean, sd))))


def binomial_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n)


# -- conditioning on the commutator subgroup --------------------------------------


class AcceptanceStarvationError(RuntimeError):
    def __init__(self, rate: float, attempts: int):
        super().__init__(f"acceptance rate {rate:.3g} after {attempts} attempts")
        self.rate = rate
        self.attempts = attempts


@dataclass
class AcceptanceStats:
    attempted: int = 0
    accepted: int = 0

    @property
    def rate(self) -> float:
        return self.accepted / self.attempted if self.attempted else float("nan")


def zero_abelianization(letters: np.ndarray, rank: int) -> np.ndarray:
    """Row mask: exponent sum of every generator vanishes."""
    ok = np.ones(letters.shape[0], dtype=bool)
    for i in range(1, rank + 1):
        ok &= (letters == i).sum(axis=1) == (letters == -i).sum(axis=1)
    return ok


def conditioned_sampler(
    base: Callable[[np.random.Generator, int], np.ndarray],
    condition: Callable[[np.ndarray], np.ndarray],
    batch: int = 4096,
    probe: int = 10**6,
    min_rate: float = 1e-6,
):
    """Wrap a batch sampler ``base(rng, size) -> rows`` into a rejection sampler.

    The returned ``sample(rng, size)`` yields ``(rows, stats)`` and aborts
    once ``probe`` attempts have been made at an acceptance rate below
    ``min_rate``.
    """

    def sample(rng: np.random.Generator, size: int):
        stats_ = AcceptanceStats()
        out = []
        got = 0
        while got < size:
            rows = base(rng, batch)
            mask = condition(rows)
            stats_.attempted += rows.shape[0]
            stats_.accepted += int(mask.sum())
            if mask.any():
                out.append(rows[mask][: size - got])
                got += out[-1].shape[0]
            if got < size and stats_.attempted >= probe and stats_.rate < min_rate:
                raise AcceptanceStarvationError(stats_.rate, stats_.attempted)
        return np.concatenate(out)[:size], stats_

    return sample


def _lo_bound(m: np.ndarray) -> np.ndarray:
    """Erdos' Littlewood-Offord bound ``C(m, m//2)/2^m`` on any atom of a signed sum."""
    m = np.asarray(m, dtype=float)
    return np.exp(
        _lgamma(m + 1) - _lgamma(np.floor(m / 2) + 1) - _lgamma(np.ceil(m / 2) + 1) - m * math.log(2)
    )


def _lgamma(x):
    from scipy.special import gammaln

    return gammaln(x)


def zero_sum_probability(mags: np.ndarray) -> float:
    """``P(sum eps_i e_i = 0)`` for independent uniform signs, by discrete Fourier inversion."""
    mags = np.asarray(mags, dtype=np.int64)
    if mags.size == 0:
        return 1.0
    s = int(mags.sum())
    if s % 2:
        return 0.0
    vals, cnt = np.unique(mags, return_counts=True)
    K = 2 * s + 2
    k = np.arange(K)[:, None]
    terms = np.prod(np.cos(2 * np.pi * k * vals[None, :] / K) ** cnt[None, :], axis=1)
    return float(max(terms.sum() / K, 0.0))


def _syllable_weights(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Proposal over (number of syllables s) with the Littlewood-Offord tilt."""
    s = np.arange(1, n + 1)
    logc = _lgamma(n) - _lgamma(s) - _lgamma(n - s + 1) + s * math.log(2)
    ma, mb = np.ceil(s / 2), np.floor(s / 2)  # syllable counts when starting with a
    bound = _lo_bound(ma) * _lo_bound(mb)
    logw = logc + np.log(bound)
    w = np.exp(logw - logw.max())
    return s, w / w.sum(), bound


def commutator_geodesic(n: int, rng: np.random.Generator, stats_: AcceptanceStats | None = None) -> np.ndarray:
    """Uniform reduced word of length ``n`` in F_2 conditioned on zero abelianization.

    A reduced word is an alternating sequence of nonzero powers of ``a`` and
    ``b``.  The syllable structure is drawn by rejection against the exact
    zero-sum probability of its signs, then signs are drawn conditionally.
    """
    if n % 2 or n < 4:
        raise AcceptanceStarvationError(0.0, 0)
    s_vals, probs, bound = _syllable_weights(n)
    while True:
        s = int(rng.choice(s_vals, p=probs))
        if s < 4:
            continue
        cuts = np.sort(rng.choice(n - 1, size=s - 1, replace=False)) + 1
        mags = np.diff(np.concatenate([[0], cuts, [n]]))
        first = int(rng.integers(2))  # 0: starts with a
        ma, mb = mags[0::2], mags[1::2]
        q = zero_sum_probability(ma) * zero_sum_probability(mb)
        if stats_ is not None:
            stats_.attempted += 1
        if rng.random() * bound[s - 1] < q:
            if stats_ is not None:
                stats_.accepted += 1
            break
    signs = np.empty(s, dtype=np.int64)
    signs[0::2] = _zero_sum_signs(ma, rng)
    signs[1::2] = _zero_sum_signs(mb, rng)
    even = np.arange(s) % 2 == 0
    gens = np.where(even, 2, 1) if first else np.where(even, 1, 2)
    return np.repeat(signs * gens, mags).astype(np.int8)


def _zero_sum_signs(mags: np.ndarray, rng: np.random.Generator, batch: int = 256) -> np.ndarray:
    while True:
        eps = rng.choice(np.array([-1, 1]), size=(batch, mags.size))
        hit = np.flatnonzero(eps @ mags == 0)
        if hit.size:
            return eps[hit[0]]


def commutator_walk(n: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    """Simple random walk of ``n`` steps conditioned to end in the commutator subgroup (unreduced letters)."""
    if n % 2:
        raise AcceptanceStarvationError(0.0, 0)
    half = n // 2
    # counts c_1..c_k of each generator (and equally many inverses), P ∝ multinomial with squared factorials
    if rank == 1:
        counts = np.array([half])
    elif rank == 2:
        i = np.arange(half + 1)
        logw = -2 * _lgamma(i + 1) - 2 * _lgamma(half - i + 1)
        w = np.exp(logw - logw.max())
        a = int(rng.choice(i, p=w / w.sum()))
        counts = np.array([a, half - a])
    else:
        raise ValueError("exact walk conditioning implemented for rank <= 2")
    letters = np.concatenate([np.repeat(np.arange(1, rank + 1), counts), np.repeat(-np.arange(1, rank + 1), counts)])
    return rng.permutation(letters).astype(np.int8)
