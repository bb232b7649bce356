"""Lifts of circle homeomorphisms to the line, rotation numbers and random products.

The circle is ``R/Z``; a lift ``h`` is an increasing map of ``R`` with
``h(t + 1) = h(t) + 1``.  Mobius maps act on the boundary of the Poincare
disk, parametrised by ``t = angle / 2 pi``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hyperbolic import Mobius


class InvalidMapError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LiftedCircleMap:
    """A degree-one lift.  ``kind`` is ``"mobius"``, ``"pl"``, ``"compose"`` or ``"callable"``."""

    kind: str
    label: str = ""
    p: complex = 0j  # disk form w -> (p w + q)/(conj(q) w + conj(p))
    q: complex = 0j
    shift: float = 0.0  # additive constant fixing the branch of a mobius lift
    knots: np.ndarray | None = field(default=None, repr=False)
    values: np.ndarray | None = field(default=None, repr=False)
    parts: tuple["LiftedCircleMap", ...] = ()
    fn: Callable | None = field(default=None, repr=False)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "mobius":
            r = self.q / self.p
            return t + self.shift + np.angle(1 + r * np.exp(-2j * np.pi * t)) / np.pi
        if self.kind == "pl":
            x, y = self.knots, self.values
            k = np.floor(t - x[0])
            return k + np.interp(t - k, x, y)
        if self.kind == "compose":
            for h in reversed(self.parts):
                t = h(t)
            return t
        return np.asarray(self.fn(t), dtype=float)

    def __matmul__(self, other: "LiftedCircleMap") -> "LiftedCircleMap":
        """Composition ``self o other``."""
        return LiftedCircleMap("compose", f"{self.label}*{other.label}", parts=(self, other))

    def inverse(self) -> "LiftedCircleMap":
        if self.kind == "mobius":
            p, q = np.conj(self.p), -self.q
            # choose the branch with h^-1(h(0)) = 0
            base = LiftedCircleMap("mobius", p=p, q=q, shift=2 * np.angle(p) / (2 * np.pi))
            h0 = float(self(0.0))
            k = round(float(base(h0)))
            return LiftedCircleMap("mobius", f"{self.label}^-1", p=p, q=q, shift=base.shift - k)
        if self.kind == "pl":
            return LiftedCircleMap("pl", f"{self.label}^-1", knots=self.values, values=self.knots)
        if self.kind == "compose":
            return LiftedCircleMap("compose", f"({self.label})^-1", parts=tuple(h.inverse() for h in reversed(self.parts)))
        raise InvalidMapError("callable lifts have no stored inverse")


def lift_mobius(m: Mobius, branch: str = "nearest") -> LiftedCircleMap:
    """Boundary action of ``m`` on ``R/Z`` lifted to ``R``.

    ``branch`` fixes the lift by the displacement of ``0``: ``"nearest"``
    in ``[-1/2, 1/2)``, ``"positive"`` in ``[0, 1)``, ``"negative"`` in ``(-1, 0]``.
    """
    p, q = m.su11()
    raw = LiftedCircleMap("mobius", p=p, q=q, shift=np.angle(p) / np.pi)
    d0 = float(raw(0.0))
    if branch == "nearest":
        k = math.floor(d0 + 0.5)
    elif branch == "positive":
        k = math.floor(d0)
    elif branch == "negative":
        k = math.ceil(d0)
    else:
        raise ValueError(f"unknown branch {branch!r}")
    return LiftedCircleMap("mobius", f"mobius({m.a:.3g},{m.b:.3g},{m.c:.3g},{m.d:.3g})", p=p, q=q, shift=raw.shift - k)


def rotation(beta: float) -> LiftedCircleMap:
    return piecewise_linear([0.0, 1.0], [beta, 1.0 + beta], label=f"rot({beta:g})")


def piecewise_linear(knots: Sequence[float], values: Sequence[float], label: str = "pl") -> LiftedCircleMap:
    """PL lift with ``h(knots[i]) = values[i]``; requires ``knots`` from 0 to 1 and ``values[-1] = values[0] + 1``."""
    x, y = np.asarray(knots, float), np.asarray(values, float)
    if x.size < 2 or x.size != y.size:
        raise InvalidMapError("need matching knot and value lists of length >= 2")
    if x[0] != 0 or x[-1] != 1:
        raise InvalidMapError("knots must run from 0 to 1")
    if abs(y[-1] - y[0] - 1) > 1e-12:
        raise InvalidMapError("values must satisfy h(1) = h(0) + 1")
    if np.any(np.diff(x) <= 0) or np.any(np.diff(y) <= 0):
        raise InvalidMapError("PL lift must be strictly increasing")
    y = y.copy()
    y[-1] = y[0] + 1
    return LiftedCircleMap("pl", label, knots=x, values=y)


def from_function(f: Callable, label: str = "callable") -> LiftedCircleMap:
    """Wrap an arbitrary function; monotonicity is only checked during iteration."""
    return LiftedCircleMap("callable", label, fn=f)


def is_monotone(h: LiftedCircleMap, grid: int = 10_000, tol: float = 1e-12) -> bool:
    t = np.linspace(0, 1, grid + 1)
    return bool(np.all(np.diff(h(t)) >= -tol))


def rotation_number(h: LiftedCircleMap, N: int, x0: float = 0.0) -> tuple[float, float]:
    """``(h^N(x0) - x0) / N`` and its error bound ``1/N``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    x = float(x0)
    eps = 1e-9
    for _ in range(N):
        y = float(h(x))
        if float(h(x + eps)) < y - 1e-12:
            raise InvalidMapError(f"map decreases near {x}")
        x = y
    return (x - x0) / N, 1.0 / N


# -- random products -------------------------------------------------------------


def _apply_choice(maps: Sequence[LiftedCircleMap], idx: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    for j, h in enumerate(maps):
        sel = idx == j
        if sel.any():
            out[sel] = h(x[sel])
    return out


def _check_weights(maps, weights) -> np.ndarray:
    w = np.asarray(weights, float)
    if w.shape != (len(maps),) or np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
        raise ValueError("weights must be a probability vector, one entry per map")
    return w


def random_orbit(
    maps: Sequence[LiftedCircleMap], weights: Sequence[float], n: int, size: int, rng: np.random.Generator,
    checkpoints: Sequence[int] = (), x0=None,
) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    """Forward iterates ``x_k = s_k(x_{k-1})`` for ``size`` independent sequences.

    ``x_n`` has the law of ``g_n(x_0)`` for the right-multiplied product
    ``g_n = s_1 ... s_n`` since the factors are i.i.d.
    """
    w = _check_weights(maps, weights)
    x = np.zeros(size) if x0 is None else np.asarray(x0, float).copy()
    cps = set(checkpoints)
    saved = {}
    for k in range(1, n + 1):
        idx = rng.choice(len(maps), size=size, p=w)
        x = _apply_choice(maps, idx, x)
        if k in cps:
            saved[k] = x.copy()
    return x, saved


@dataclass(frozen=True)
class RotationReport:
    n: int
    trials: int
    drift: float
    drift_se: float
    sigma: float
    samples: np.ndarray  # (x_n - drift * n) / sqrt(n)
    ks_distance: float

    def summary(self) -> dict:
        return {
            "n": self.n,
            "trials": self.trials,
            "drift": self.drift,
            "drift_se": self.drift_se,
            "sigma": self.sigma,
            "ks": self.ks_distance,
        }


ROT_CHUNK = 10_000


def _rot_chunk(maps, weights, n, size, seed):
    rng = np.random.default_rng(seed)
    x, saved = random_orbit(maps, weights, n, size, rng, checkpoints=(n // 2,))
    return saved[n // 2], x


def random_rot_clt(
    maps: Sequence[LiftedCircleMap], weights: Sequence[float], n: int, trials: int, seed: int, workers: int = 1
) -> RotationReport:
    """Random products and the normalised displacement of ``0``.

    ``g_n(0)`` is within 1 of ``rot(g_n)``, which is negligible after the
    ``1/sqrt(n)`` scaling.  The drift is the slope between ``n/2`` and ``n``.
    """
    from functools import partial

    from .montecarlo import normal_fit_tests, run_trials

    if trials < 100:
        raise ValueError("trials must be >= 100")
    if n < 2:
        raise ValueError("n must be >= 2")
    _check_weights(maps, weights)
    nchunks = math.ceil(trials / ROT_CHUNK)
    sizes = [min(ROT_CHUNK, trials - c * ROT_CHUNK) for c in range(nchunks)]
    fn = partial(_rot_chunk_indexed, tuple(maps), tuple(weights), n, tuple(sizes))
    run = run_trials(fn, nchunks, seed, workers=workers, chunk=1, pass_index=True)
    if run.failures:
        raise RuntimeError(run.failures[0].error)
    half = np.concatenate([v[0] for v in run.values])
    full = np.concatenate([v[1] for v in run.values])
    h = n // 2
    inc = full - half
    drift = float(inc.mean() / (n - h))
    se = float(inc.std(ddof=1) / math.sqrt(trials) / (n - h))
    z = (full - drift * n) / math.sqrt(n)
    fit = normal_fit_tests(z)
    return RotationReport(n, trials, drift, se, fit.sd, z, fit.ks_statistic)


def _rot_chunk_indexed(maps, weights, n, sizes, index, seed):
    return _rot_chunk(maps, weights, n, sizes[index], seed)


@dataclass(frozen=True)
class StationaryHistogram:
    edges: np.ndarray
    mass: np.ndarray
    samples: int
    invariance_residual: float


def stationary_measure_histogram(
    maps: Sequence[LiftedCircleMap], weights: Sequence[float], burn_in: int, samples: int, bins: int, seed: int
) -> StationaryHistogram:
    """Empirical stationary measure of the circle chain, from independent chains after ``burn_in`` steps.

    The residual compares the histogram with its push-forward by one averaged step.
    """
    if bins < 10:
        raise ValueError("bins must be >= 10")
    rng = np.random.default_rng(seed)
    x, _ = random_orbit(maps, weights, burn_in, samples, rng, x0=rng.random(samples))
    x = np.mod(x, 1.0)
    edges = np.linspace(0, 1, bins + 1)
    mass = np.histogram(x, edges)[0] / samples
    pushed = np.zeros(bins)
    for w, h in zip(weights, maps):
        pushed += w * np.histogram(np.mod(h(x), 1.0), edges)[0] / samples
    return StationaryHistogram(edges, mass, samples, float(np.abs(pushed - mass).max()))


# -- generator-set files ---------------------------------------------------------


def load_generator_set(text: str) -> tuple[list[LiftedCircleMap], list[float]]:
    """``{"generators": [{"mobius": [a,b,c,d]} | {"pl": {"breakpoints": [...], "values": [...]}}], "weights": [...]}``."""
    data = json.loads(text)
    gens = data["generators"] if isinstance(data, dict) else data
    maps = []
    for g in gens:
        if "mobius" in g:
            a, b, c, d = g["mobius"]
            maps.append(lift_mobius(Mobius(a, b, c, d), branch=g.get("branch", "nearest")))
        elif "pl" in g:
            maps.append(piecewise_linear(g["pl"]["breakpoints"], g["pl"]["values"]))
        else:
            raise InvalidMapError(f"unknown generator entry {g}")
    weights = data.get("weights") if isinstance(data, dict) else None
    if weights is None:
        weights = [1 / len(maps)] * len(maps)
    return maps, [float(w) for w in weights]
