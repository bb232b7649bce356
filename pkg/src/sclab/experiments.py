"""Experiment drivers shared by the command line and the acceptance suite.

Every driver takes a master seed and derives per-trial or per-chunk seeds
from it, so results do not depend on the number of workers.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from .montecarlo import (
    commutator_geodesic,
    commutator_walk,
    derive_seed,
    powerlaw_fit,
    run_trials,
    zero_abelianization,
)
from .scl_bounds import SandwichParams, sandwich
from .words import Word, random_reduced_letters, reduce, translation_length

HOMOLOGY_CHUNK = 10_000


# -- homology exponent ---------------------------------------------------------------


def _homology_chunk(rank: int, n: int, size: int, mode: str, seed: int) -> int:
    rng = np.random.default_rng(seed)
    if mode == "geodesic":
        letters = random_reduced_letters(rank, n, size, rng)
    else:
        gens = np.concatenate([np.arange(1, rank + 1), -np.arange(1, rank + 1)]).astype(np.int8)
        letters = gens[rng.integers(2 * rank, size=(size, n))]
    return int(zero_abelianization(letters, rank).sum())


def _homology_task(rank, mode, tasks, index, seed):
    n, size = tasks[index]
    return _homology_chunk(rank, n, size, mode, seed)


@dataclass
class HomologyReport:
    rank: int
    mode: str
    n_list: list[int]
    trials: int
    hits: list[int]
    probabilities: list[float]
    slope: float
    slope_se: float
    expected_slope: float


def homology_experiment(
    rank: int, n_list: Sequence[int], trials: int, seed: int, mode: str = "geodesic", workers: int = 1
) -> HomologyReport:
    """``Pr(abelianization = 0)`` against ``n`` and the fitted log-log slope."""
    tasks = []
    for n in n_list:
        for lo in range(0, trials, HOMOLOGY_CHUNK):
            tasks.append((int(n), min(HOMOLOGY_CHUNK, trials - lo)))
    run = run_trials(partial(_homology_task, rank, mode, tuple(tasks)), len(tasks), seed, workers, chunk=1, pass_index=True)
    if run.failures:
        raise RuntimeError(run.failures[0].error)
    hits = {int(n): 0 for n in n_list}
    for (n, _), h in zip(tasks, run.values):
        hits[n] += h
    probs = [hits[int(n)] / trials for n in n_list]
    ok = [(n, p) for n, p in zip(n_list, probs) if p > 0]
    if len(ok) >= 4:
        fit = powerlaw_fit([n for n, _ in ok], [p for _, p in ok])
        slope, se = fit.slope, fit.slope_se
    else:
        slope, se = float("nan"), float("nan")
    return HomologyReport(rank, mode, list(map(int, n_list)), trials, [hits[int(n)] for n in n_list], probs, slope, se, -rank / 2)


# -- growth sandwich -----------------------------------------------------------------


def sample_commutator_word(n: int, rank: int, mode: str, rng: np.random.Generator) -> Word:
    if rank != 2:
        raise ValueError("exact conditioned sampling is implemented for rank 2")
    if mode == "geodesic":
        return Word(tuple(commutator_geodesic(n, rng).tolist()), 2, _checked=True)
    if mode == "walk":
        return reduce(commutator_walk(n, 2, rng).tolist(), 2)
    raise ValueError(f"unknown mode {mode!r}")


def _growth_trial(n_list, trials, rank, mode, params, index, seed):
    n = n_list[index // trials]
    rng = np.random.default_rng(seed)
    g = sample_commutator_word(n, rank, mode, rng)
    sw = sandwich(g, params)
    m = len(g)
    scale = m / math.log(m) if m > 1 else float("nan")
    return {
        "n": n,
        "n_reduced": m,
        "lower": float(sw.lower),
        "upper": float(sw.upper),
        "lower_ratio": float(sw.lower) / scale,
        "upper_ratio": float(sw.upper) / scale,
        "consistent": sw.lower <= sw.upper,
        "seed": seed,
    }


GROWTH_PARAMS = SandwichParams(ells=(None,), powers=(1,), lower_powers=(1,), oracle_budget=0)


@dataclass
class GrowthReport:
    mode: str
    n_list: list[int]
    trials: int
    rows: list[dict] = field(repr=False)
    failures: int = 0

    def per_n(self) -> list[dict]:
        out = []
        for n in self.n_list:
            rs = [r for r in self.rows if r["n"] == n]
            out.append(
                {
                    "n": n,
                    "trials": len(rs),
                    "consistent_fraction": float(np.mean([r["consistent"] for r in rs])),
                    "median_upper_ratio": float(np.median([r["upper_ratio"] for r in rs])),
                    "median_lower_ratio": float(np.median([r["lower_ratio"] for r in rs])),
                    "mean_reduced_fraction": float(np.mean([r["n_reduced"] / n for r in rs])),
                }
            )
        return out


def growth_experiment(
    n_list: Sequence[int], trials: int, seed: int, mode: str = "geodesic", rank: int = 2,
    params: SandwichParams = GROWTH_PARAMS, workers: int = 1,
) -> GrowthReport:
    ns = tuple(int(n) for n in n_list)
    fn = partial(_growth_trial, ns, trials, rank, mode, params)
    run = run_trials(fn, len(ns) * trials, seed, workers, chunk=8, pass_index=True)
    return GrowthReport(mode, list(ns), trials, run.values, len(run.failures))


# -- translation length -----------------------------------------------------------------


def _translation_chunk(rank, n, size, condition, seed):
    rng = np.random.default_rng(seed)
    if condition:
        steps = [commutator_walk(n, rank, rng) for _ in range(size)]
    else:
        gens = np.concatenate([np.arange(1, rank + 1), -np.arange(1, rank + 1)])
        steps = gens[rng.integers(2 * rank, size=(size, n))]
    return [translation_length(reduce(row.tolist(), rank)) for row in steps]


def _translation_task(rank, n, sizes, condition, index, seed):
    return _translation_chunk(rank, n, sizes[index], condition, seed)


@dataclass
class TranslationReport:
    rank: int
    n: int
    trials: int
    threshold: float
    fraction_below: float
    mean_ratio: float
    conditioned: bool = False
    samples: list[int] = field(default_factory=list, repr=False)


def translation_experiment(
    rank: int, n: int, trials: int, seed: int, threshold: float = 0.4, workers: int = 1, condition: bool = False
) -> TranslationReport:
    """Simple random walk: how often the translation length falls below ``threshold * n``.

    With ``condition`` the walk is conditioned to end in the commutator subgroup.
    """
    sizes = tuple(min(1000, trials - lo) for lo in range(0, trials, 1000))
    fn = partial(_translation_task, rank, n, sizes, condition)
    run = run_trials(fn, len(sizes), seed, workers, chunk=1, pass_index=True)
    if run.failures:
        raise RuntimeError(run.failures[0].error)
    tau = np.concatenate([np.asarray(v) for v in run.values])
    return TranslationReport(
        rank, n, trials, threshold, float((tau <= threshold * n).mean()), float(tau.mean() / n), condition, tau.tolist()
    )


# -- anti-alignment trend -------------------------------------------------------------


def _antialign_task(rank, n_list, trials, L, index, seed):
    from .automaton import antialign_fraction

    n = n_list[index // trials]
    rng = np.random.default_rng(seed)
    row = random_reduced_letters(rank, n, 1, rng)[0]
    g = Word(tuple(row.tolist()), rank, _checked=True)
    return antialign_fraction(g, L)


@dataclass
class AntialignReport:
    n_list: list[int]
    trials: int
    L: float
    mean_fraction: list[float]
    slope: float
    slope_se: float


def antialign_experiment(
    rank: int, n_list: Sequence[int], trials: int, L: float, seed: int, workers: int = 1
) -> AntialignReport:
    ns = tuple(int(n) for n in n_list)
    run = run_trials(partial(_antialign_task, rank, ns, trials, L), len(ns) * trials, seed, workers, chunk=16, pass_index=True)
    vals = np.asarray(run.values).reshape(len(ns), trials)
    means = vals.mean(axis=1)
    pos = means > 0
    if pos.sum() >= 4:
        fit = powerlaw_fit(np.asarray(ns)[pos], means[pos])
        slope, se = fit.slope, fit.slope_se
    else:
        slope, se = float("nan"), float("nan")
    return AntialignReport(list(ns), trials, L, means.tolist(), slope, se)


def as_dict(report) -> dict:
    d = asdict(report)
    d.pop("rows", None)
    d.pop("samples", None)
    return d
