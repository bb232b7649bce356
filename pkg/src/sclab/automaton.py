"""Combing automata viewed as topological Markov chains.

A :class:`CombingAutomaton` is a finite digraph with a distinguished initial
vertex whose edges carry generator labels, deterministic per label.  Paths
from the initial vertex spell words of the language.  :func:`analyze`
computes the transition-count matrix, its Perron eigenvalue, the strongly
connected components and the maximal-entropy Markov chain on them.
"""

from __future__ import annotations

import json
import math
from importlib import resources
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .words import Word, char_to_letter, letter_to_char

EIG_TOL = 1e-9


class AutomatonError(ValueError):
    pass


class DeterminismError(AutomatonError):
    pass


class ReachabilityError(AutomatonError):
    pass


class AutomatonParseError(AutomatonError):
    pass


class SpectralConvergenceError(ArithmeticError):
    pass


class BlockTooShortError(ValueError):
    pass


@dataclass(frozen=True)
class CombingAutomaton:
    vertex_count: int
    initial: int
    rank: int
    edges: tuple[tuple[int, int, int], ...]  # (from, to, signed letter)

    def __post_init__(self):
        if not 0 <= self.initial < self.vertex_count:
            raise AutomatonError("initial vertex out of range")
        seen = set()
        for u, v, x in self.edges:
            if not (0 <= u < self.vertex_count and 0 <= v < self.vertex_count):
                raise AutomatonError(f"edge ({u}, {v}) out of range")
            if x == 0 or abs(x) > self.rank:
                raise AutomatonError(f"label {x} outside rank {self.rank}")
            if (u, x) in seen:
                raise DeterminismError(f"vertex {u} has two out-edges labelled {letter_to_char(x)!r}")
            seen.add((u, x))
        unreachable = set(range(self.vertex_count)) - _reachable(self.vertex_count, self.edges, [self.initial])
        if unreachable:
            raise ReachabilityError(f"vertices unreachable from the initial vertex: {sorted(unreachable)}")

    def transition_counts(self) -> np.ndarray:
        m = np.zeros((self.vertex_count, self.vertex_count))
        for u, v, _ in self.edges:
            m[u, v] += 1
        return m

    def accepts(self, w: Word) -> bool:
        step = {(u, x): v for u, v, x in self.edges}
        state = self.initial
        for x in w.letters:
            if (state, x) not in step:
                return False
            state = step[(state, x)]
        return True

    def to_json(self) -> str:
        return json.dumps(
            {
                "vertices": self.vertex_count,
                "initial": self.initial,
                "rank": self.rank,
                "edges": [{"from": u, "to": v, "label": letter_to_char(x)} for u, v, x in self.edges],
            }
        )


def _reachable(n: int, edges, sources) -> set[int]:
    adj: dict[int, list[int]] = {}
    for u, v, _ in edges:
        adj.setdefault(u, []).append(v)
    seen = set(sources)
    stack = list(sources)
    while stack:
        u = stack.pop()
        for v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def free_group_automaton(k: int) -> CombingAutomaton:
    """Canonical combing of F_k: vertex 0 is initial, vertex i remembers the last letter."""
    if k < 1:
        raise AutomatonError("rank must be >= 1")
    letters = [*range(1, k + 1), *range(-1, -k - 1, -1)]
    vid = {x: i + 1 for i, x in enumerate(letters)}
    edges = [(0, vid[x], x) for x in letters]
    for x in letters:
        for y in letters:
            if y != -x:
                edges.append((vid[x], vid[y], y))
    return CombingAutomaton(2 * k + 1, 0, k, tuple(edges))


def load_automaton(text: str) -> CombingAutomaton:
    try:
        data = json.loads(text)
        edges = tuple((int(e["from"]), int(e["to"]), char_to_letter(e["label"])) for e in data["edges"])
        return CombingAutomaton(int(data["vertices"]), int(data["initial"]), int(data["rank"]), edges)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise AutomatonParseError(f"malformed automaton JSON: {exc}") from exc


def shipped_automata() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("sclab").joinpath("data").iterdir() if p.name.endswith(".json"))


def example_automaton(name: str) -> CombingAutomaton:
    """Load a shipped automaton by name, e.g. ``"two_components"``."""
    if name not in shipped_automata():
        raise AutomatonError(f"no shipped automaton {name!r}; have {shipped_automata()}")
    return load_automaton(resources.files("sclab").joinpath("data", f"{name}.json").read_text())


# -- spectral analysis -------------------------------------------------------


def power_iteration(m: np.ndarray, tol: float = 1e-12, max_iter: int = 10**6) -> tuple[float, np.ndarray]:
    """Perron root and growth vector of a nonnegative matrix.

    Iterates ``x <- (M + I) x`` from the all-ones vector.  Adding the
    identity averages successive iterates, which kills periodicity without
    moving the Perron eigenvector.  The limit direction is the projection of
    the ones vector on the Perron eigenspace, i.e. the asymptotic path-count
    vector ``lim M^n 1 / lambda^n`` up to scale.
    """
    x = np.ones(m.shape[0])
    lam_prev = None
    for _ in range(max_iter):
        mx = m @ x
        lam = mx.sum() / x.sum()
        y = mx + x
        y /= y.sum()
        if lam_prev is not None and abs(lam - lam_prev) <= tol * max(lam, 1.0) and np.abs(y - x).sum() <= tol:
            return float(lam), y
        lam_prev = lam
        x = y
    raise SpectralConvergenceError(f"power iteration did not converge in {max_iter} iterations")


def spectral_radius(m: np.ndarray) -> float:
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(m))))


@dataclass(frozen=True)
class Component:
    vertices: tuple[int, ...]
    eigenvalue: float
    maximal: bool


@dataclass(frozen=True)
class ValidationReport:
    deterministic: bool
    reachable: bool
    coornaert: bool
    components: tuple[Component, ...]
    problems: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.deterministic and self.reachable and self.coornaert


@dataclass(frozen=True, eq=False)
class MarkovModel:
    automaton: CombingAutomaton
    transition_counts: np.ndarray
    perron_eigenvalue: float
    components: tuple[Component, ...]
    component_of: np.ndarray
    growth_vector: np.ndarray  # right Perron vector, zero off the cone of maximal components
    stochastic_matrix: np.ndarray
    stationary: np.ndarray
    initial_distribution: np.ndarray
    # sampling tables, one row per vertex, padded to the maximal out-degree
    _targets: np.ndarray = field(repr=False)
    _labels: np.ndarray = field(repr=False)
    _cumprob: np.ndarray = field(repr=False)

    @property
    def maximal_components(self) -> list[Component]:
        return [c for c in self.components if c.maximal]

    def path_measure(self, path: Sequence[int]) -> float:
        """Stationary measure of a vertex path: mu(start) * product of N."""
        p = self.stationary[path[0]]
        for a, b in zip(path, path[1:]):
            p *= self.stochastic_matrix[a, b]
        return float(p)


def _components(a: CombingAutomaton, m: np.ndarray, lam: float) -> tuple[list[Component], np.ndarray]:
    ncomp, labels = connected_components(csr_matrix(m), directed=True, connection="strong")
    comps = []
    for c in range(ncomp):
        vs = tuple(int(v) for v in np.flatnonzero(labels == c))
        rho = spectral_radius(m[np.ix_(vs, vs)])
        comps.append(Component(vs, rho, lam > 0 and abs(rho - lam) <= EIG_TOL * max(lam, 1.0)))
    return comps, labels


def _condensation_reach(a: CombingAutomaton, comps, labels) -> list[set[int]]:
    """For each component, the set of components reachable by a nonempty path."""
    succ: dict[int, set[int]] = {i: set() for i in range(len(comps))}
    for u, v, _ in a.edges:
        cu, cv = labels[u], labels[v]
        if cu != cv:
            succ[cu].add(cv)
    reach = []
    for i in range(len(comps)):
        seen: set[int] = set()
        stack = list(succ[i])
        while stack:
            c = stack.pop()
            if c not in seen:
                seen.add(c)
                stack.extend(succ[c])
        reach.append(seen)
    return reach


def coornaert_holds(a: CombingAutomaton, comps, labels) -> bool:
    """Every directed path of the condensation meets at most one maximal component."""
    reach = _condensation_reach(a, comps, labels)
    for i, c in enumerate(comps):
        if c.maximal and any(comps[j].maximal for j in reach[i]):
            return False
    return True


def validate(a: CombingAutomaton | str) -> ValidationReport:
    """Structural report.  Accepts an automaton or its JSON text."""
    problems = []
    if isinstance(a, str):
        try:
            a = load_automaton(a)
        except DeterminismError as exc:
            return ValidationReport(False, True, False, (), (str(exc),))
        except ReachabilityError as exc:
            return ValidationReport(True, False, False, (), (str(exc),))
    m = a.transition_counts()
    lam = spectral_radius(m)
    comps, labels = _components(a, m, lam)
    coor = coornaert_holds(a, comps, labels)
    if not coor:
        problems.append("a directed path of the condensation meets two maximal components")
    return ValidationReport(True, True, coor, tuple(comps), tuple(problems))


def analyze(a: CombingAutomaton, tol: float = 1e-12, max_iter: int = 10**6) -> MarkovModel:
    """Perron data, components and the maximal-entropy chain of a combing digraph."""
    m = a.transition_counts()
    nv = a.vertex_count
    try:
        lam, w = power_iteration(m, tol=tol, max_iter=max_iter)
    except SpectralConvergenceError:
        # eigensolve fallback: growth vector from the Perron eigenspace
        lam = spectral_radius(m)
        vals, vecs = np.linalg.eig(m)
        sel = np.abs(vals - lam) <= 1e-8 * max(lam, 1.0)
        basis = np.real(vecs[:, sel])
        coef, *_ = np.linalg.lstsq(basis, np.ones(nv), rcond=None)
        w = np.abs(basis @ coef)
    if lam <= EIG_TOL:
        raise AutomatonError("language is finite (Perron eigenvalue 0)")
    comps, labels = _components(a, m, lam)
    if not coornaert_holds(a, comps, labels):
        raise AutomatonError("Coornaert property fails; not a combing of a hyperbolic group")

    max_ids = [i for i, c in enumerate(comps) if c.maximal]
    reach = _condensation_reach(a, comps, labels)
    live_comp = {i for i in range(len(comps)) if i in max_ids or any(j in max_ids for j in reach[i])}
    live = np.array([labels[v] in live_comp for v in range(nv)])
    w = np.where(live, w, 0.0)
    if w[a.initial] <= 0:
        raise AutomatonError("initial vertex cannot reach a maximal component")

    n = np.zeros_like(m)
    for i in range(nv):
        if w[i] > 0:
            n[i] = m[i] * w / (lam * w[i])
            n[i] /= n[i].sum()

    mu = np.zeros(nv)
    comp_weight = _absorption(n, labels, max_ids, a.initial, live)
    for cid in max_ids:
        vs = list(comps[cid].vertices)
        pi = _stationary(n[np.ix_(vs, vs)])
        mu[vs] += comp_weight[cid] * pi

    outdeg = max(int((m > 0).sum(axis=1).max()), 1)
    targets = np.zeros((nv, outdeg), dtype=np.int64)
    labels_tab = np.zeros((nv, outdeg), dtype=np.int8)
    cum = np.ones((nv, outdeg))
    by_vertex: dict[int, list[tuple[int, int]]] = {}
    for u, v, x in a.edges:
        by_vertex.setdefault(u, []).append((v, x))
    for u, outs in by_vertex.items():
        outs.sort(key=lambda t: t[1])
        probs = np.array([n[u, v] / m[u, v] if m[u, v] else 0.0 for v, _ in outs])
        c = np.cumsum(probs)
        for j, (v, x) in enumerate(outs):
            targets[u, j] = v
            labels_tab[u, j] = x
            cum[u, j] = c[j]
        cum[u, len(outs) - 1 :] = 1.0
        targets[u, len(outs) :] = outs[-1][0]
        labels_tab[u, len(outs) :] = outs[-1][1]

    return MarkovModel(
        automaton=a,
        transition_counts=m,
        perron_eigenvalue=float(lam),
        components=tuple(comps),
        component_of=labels,
        growth_vector=w,
        stochastic_matrix=n,
        stationary=mu,
        initial_distribution=n[a.initial].copy(),
        _targets=targets,
        _labels=labels_tab,
        _cumprob=cum,
    )


def _stationary(p: np.ndarray) -> np.ndarray:
    k = p.shape[0]
    lhs = np.vstack([p.T - np.eye(k), np.ones(k)])
    rhs = np.zeros(k + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()


def _absorption(n, labels, max_ids, start, live) -> dict[int, float]:
    """Probability that the chain started at ``start`` ends in each maximal component."""
    in_max = np.isin(labels, max_ids)
    if in_max[start]:
        return {cid: float(labels[start] == cid) for cid in max_ids}
    trans = [v for v in range(len(labels)) if live[v] and not in_max[v]]
    pos = {v: i for i, v in enumerate(trans)}
    q = n[np.ix_(trans, trans)]
    out = {}
    for cid in max_ids:
        cols = np.flatnonzero(labels == cid)
        r = n[np.ix_(trans, cols)].sum(axis=1)
        h = np.linalg.solve(np.eye(len(trans)) - q, r)
        out[cid] = float(h[pos[start]])
    return out


# -- sampling ----------------------------------------------------------------


@dataclass(frozen=True)
class PathSample:
    vertex_path: tuple[int, ...]
    word: Word
    component: int | None
    empty: bool = False


def sample_paths(model: MarkovModel, n: int, size: int, rng: np.random.Generator, start=None):
    """Vectorised sampler: ``size`` paths of ``n`` steps.

    Starts at the initial vertex (the nu-measure) unless ``start`` gives an
    array of start vertices.  Returns ``(vertices, letters)`` with shapes
    ``(size, n + 1)`` and ``(size, n)``.
    """
    verts = np.empty((size, n + 1), dtype=np.int32)
    letters = np.empty((size, n), dtype=np.int8)
    state = np.full(size, model.automaton.initial, dtype=np.int64) if start is None else np.asarray(start)
    verts[:, 0] = state
    cum, tg, lb = model._cumprob, model._targets, model._labels
    for t in range(n):
        u = rng.random(size)
        j = (u[:, None] >= cum[state]).sum(axis=1)
        np.minimum(j, cum.shape[1] - 1, out=j)
        letters[:, t] = lb[state, j]
        state = tg[state, j]
        verts[:, t + 1] = state
    return verts, letters


def sample_geodesic(model: MarkovModel, n: int, seed: int) -> PathSample:
    a = model.automaton
    if n == 0:
        return PathSample((a.initial,), Word.identity(a.rank), None, empty=True)
    if n < 0:
        raise ValueError("n must be >= 0")
    verts, letters = sample_paths(model, n, 1, np.random.default_rng(seed))
    last = int(verts[0, -1])
    cid = int(model.component_of[last])
    comp = cid if model.components[cid].maximal else None
    word = Word(tuple(int(x) for x in letters[0]), a.rank, _checked=True)
    return PathSample(tuple(int(v) for v in verts[0]), word, comp)


def settled_fraction(model: MarkovModel, n: int, size: int, prefix: int, rng: np.random.Generator) -> float:
    """Fraction of nu-random paths that lie in one maximal component after ``prefix`` steps."""
    verts, _ = sample_paths(model, n, size, rng)
    comp = model.component_of[verts[:, prefix:]]
    maxflag = np.array([c.maximal for c in model.components])
    same = (comp == comp[:, :1]).all(axis=1) & maxflag[comp[:, 0]]
    return float(same.mean())


# -- subword counts and the Chernoff-type experiment --------------------------


def count_subword(sigma: Sequence[int], path: Sequence[int] | PathSample) -> int:
    """Number of (possibly overlapping) occurrences of vertex path ``sigma`` in ``path``."""
    seq = np.asarray(path.vertex_path if isinstance(path, PathSample) else path)
    sig = np.asarray(sigma)
    if sig.size == 0:
        return int(seq.size)
    if sig.size > seq.size:
        return 0
    win = np.lib.stride_tricks.sliding_window_view(seq, sig.size)
    return int((win == sig).all(axis=1).sum())


def chernoff_block_length(n: int, lam: float, ell: float) -> int:
    if not 0 < ell < 1:
        raise ValueError("ell must lie in (0, 1)")
    t = math.floor(ell * math.log(n) / math.log(lam))
    if t < 1:
        raise BlockTooShortError(f"block length ell*log(n)/log(lambda) < 1 at n={n}")
    return t


@dataclass(frozen=True)
class ChernoffReport:
    n: int
    ell: float
    epsilon: float
    block_edges: int
    threshold: float
    ratios: np.ndarray  # per-trial max |C - n mu| / threshold
    violation_fraction: float


def chernoff_batch(
    model: MarkovModel, n: int, t: int, size: int, sigmas: int, rng: np.random.Generator
) -> np.ndarray:
    """Max over ``sigmas`` mu-random blocks of ``|C_sigma(gamma) - n mu(sigma)|``, for ``size`` nu-random gamma."""
    gamma, _ = sample_paths(model, n, size, rng)
    starts = rng.choice(len(model.stationary), size=size * sigmas, p=model.stationary)
    sig, _ = sample_paths(model, t, size * sigmas, rng, start=starts)
    sig = sig.reshape(size, sigmas, t + 1)
    win = np.lib.stride_tricks.sliding_window_view(gamma, t + 1, axis=1)  # (size, n - t + 1, t + 1)
    worst = np.zeros(size)
    for j in range(sigmas):
        s = sig[:, j, :]
        counts = (win == s[:, None, :]).all(axis=2).sum(axis=1)
        nmu = n * np.array([model.path_measure(row) for row in s])
        worst = np.maximum(worst, np.abs(counts - nmu))
    return worst


CHERNOFF_CHUNK = 50


def chernoff_experiment(
    model: MarkovModel,
    ell: float,
    epsilon: float,
    n: int,
    trials: int,
    seed: int,
    sigmas: int = 1,
) -> ChernoffReport:
    """Per trial: one nu-random geodesic, ``sigmas`` mu-random blocks, worst normalised deviation.

    Trials run in fixed chunks seeded from ``(seed, chunk index)``.
    """
    from .montecarlo import derive_seed

    t = chernoff_block_length(n, model.perron_eigenvalue, ell)
    thr = n ** (epsilon + (1 - ell) / 2)
    parts = []
    for c, lo in enumerate(range(0, trials, CHERNOFF_CHUNK)):
        rng = np.random.default_rng(derive_seed(seed, c))
        parts.append(chernoff_batch(model, n, t, min(CHERNOFF_CHUNK, trials - lo), sigmas, rng))
    ratios = np.concatenate(parts) / thr if parts else np.empty(0)
    return ChernoffReport(n, ell, epsilon, t, thr, ratios, float((ratios >= 1).mean()) if trials else 0.0)


# -- anti-alignment in the tree ------------------------------------------------


def antialign_block_length(n: int, L: float, lam: float) -> int:
    return math.floor(L * math.log(n) / math.log(lam))


def antialign_fraction(g: Word, L: float, lam: float | None = None, block_length: int | None = None) -> float:
    """Fraction of successive blocks of ``g`` whose inverse occurs in ``g``.

    In the Cayley tree two segments are anti-aligned exactly when one is a
    translate of the other reversed, so the test is an inverse-substring test.
    """
    if block_length is None:
        if L <= 2:
            raise ValueError("L must exceed 2")
        lam = lam if lam is not None else 2 * g.rank - 1
        block_length = antialign_block_length(max(len(g), 2), L, lam)
    b = block_length
    if b < 2:
        raise BlockTooShortError("anti-alignment blocks must have length >= 2")
    text = g.text
    nblocks = len(text) // b
    if nblocks == 0:
        return 0.0
    hits = 0
    for i in range(nblocks):
        blk = text[i * b : (i + 1) * b]
        if blk[::-1].swapcase() in text:
            hits += 1
    return hits / nblocks
