"""Hyperbolic plane geometry for the random turtle.

Isometries are real 2x2 matrices acting on the upper half-plane; points are
reported in the Poincare disk via the Cayley map ``z -> (z - i)/(z + i)``,
which sends ``i`` to the origin.

A turtle word ``X_1 ... X_n`` with ``X_j`` in ``{R, L}`` gives vertices
``p_j = X_1 ... X_j (p_0)``: the turtle moves forward ``step`` and then turns
by ``+alpha`` (``R``, counter-clockwise) or ``-alpha`` (``L``).  The polygon
``P_n`` has vertices ``p_0 .. p_n`` and is closed by the geodesic ``p_n -> p_0``;
the turning angles at ``p_0`` and ``p_n`` are the geometric ones, so
Gauss-Bonnet ``2 pi W - sum(turning) = -A`` holds exactly.

Two engines compute ``(W, A)``:

* a vertex engine working on disk coordinates, for arbitrary polygons of
  moderate diameter;
* a local-frame engine that only tracks the distance ``b`` to ``p_0`` and the
  bearing ``theta`` of ``p_0`` relative to the heading.  It never forms
  coordinates, so it is stable for ``n`` in the tens of thousands, and it is
  vectorised across trials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TWO_PI = 2 * math.pi
RESIDUE_AUDIT = 1e-6
RESIDUE_ERROR = 1e-4


class GeometryError(ArithmeticError):
    pass


class DegeneratePolygonError(GeometryError):
    pass


class GaussBonnetError(GeometryError):
    pass


def wrap(x):
    """Reduce angles to ``(-pi, pi]``."""
    y = np.mod(np.asarray(x) + math.pi, TWO_PI) - math.pi
    y = np.where(y == -math.pi, math.pi, y)
    return y if np.ndim(y) else float(y)


# -- isometries ------------------------------------------------------------


@dataclass(frozen=True)
class Mobius:
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        det = self.a * self.d - self.b * self.c
        if not det > 0:
            raise GeometryError(f"determinant {det} is not positive")
        if abs(det - 1) > 1e-15:
            s = 1 / math.sqrt(det)
            for k in "abcd":
                object.__setattr__(self, k, getattr(self, k) * s)

    @classmethod
    def identity(cls) -> "Mobius":
        return cls(1.0, 0.0, 0.0, 1.0)

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    @property
    def trace(self) -> float:
        return self.a + self.d

    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    @classmethod
    def _unit(cls, a: float, b: float, c: float, d: float) -> "Mobius":
        # products of unimodular matrices: det is 1 by construction, and
        # recomputing it from large entries would only measure rounding
        m = object.__new__(cls)
        for k, v in zip("abcd", (a, b, c, d)):
            object.__setattr__(m, k, v)
        return m

    def __matmul__(self, o: "Mobius") -> "Mobius":
        return Mobius._unit(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )

    def inverse(self) -> "Mobius":
        return Mobius._unit(self.d, -self.b, -self.c, self.a)

    def apply_uhp(self, z):
        return (self.a * z + self.b) / (self.c * z + self.d)

    def su11(self) -> tuple[complex, complex]:
        """Disk-model form ``w -> (p w + q)/(conj(q) w + conj(p))``."""
        a, b, c, d = self.a, self.b, self.c, self.d
        p = ((a + d) + 1j * (b - c)) / 2
        q = ((a - d) - 1j * (b + c)) / 2
        return p, q

    def apply_disk(self, w):
        p, q = self.su11()
        return (p * w + q) / (np.conj(q) * w + np.conj(p))


def cayley(z):
    return (z - 1j) / (z + 1j)


def inverse_cayley(w):
    return 1j * (1 + w) / (1 - w)


def disk_distance(z, w):
    z, w = np.asarray(z, complex), np.asarray(w, complex)
    r = np.abs(z - w) / np.abs(1 - np.conj(z) * w)
    return 2 * np.arctanh(np.minimum(r, 1.0))


def turtle_step_maps(alpha: float, step: float) -> tuple[Mobius, Mobius]:
    """``(R, L)``: move forward ``step`` then turn by ``+alpha`` / ``-alpha``."""
    if step <= 0:
        raise ValueError("step must be positive")
    if not 0 <= alpha < math.pi:
        raise ValueError("alpha must lie in [0, pi)")
    ep, em = math.exp(step / 2), math.exp(-step / 2)
    c, s = math.cos(alpha / 2), math.sin(alpha / 2)
    return Mobius(ep * c, ep * s, -em * s, em * c), Mobius(ep * c, -ep * s, em * s, em * c)


def phase_threshold(alpha: float) -> float:
    """Step length above which the winding number stays bounded."""
    if not 0 < alpha < math.pi:
        raise ValueError("alpha must lie in (0, pi)")
    return 2 * math.acosh(1 / math.sin(alpha / 2))


# -- polygons -----------------------------------------------------------------


def _direction(z: complex, w: complex) -> float:
    """Argument of the initial tangent of the geodesic from ``z`` to ``w``."""
    return float(np.angle((w - z) / (1 - np.conj(z) * w)))


def triangle_angles(p: complex, q: complex, r: complex) -> tuple[float, float, float]:
    out = []
    for v, x, y in ((p, q, r), (q, r, p), (r, p, q)):
        out.append(abs(float(wrap(_direction(v, y) - _direction(v, x)))))
    return tuple(out)


def triangle_signed_area(p: complex, q: complex, r: complex) -> float:
    """Angle defect with sign by orientation (counter-clockwise positive)."""
    if p == q or q == r or r == p:
        return 0.0
    turn = wrap(_direction(p, r) - _direction(p, q))
    if turn == 0 or abs(turn) == math.pi:
        return 0.0
    return math.copysign(math.pi - sum(triangle_angles(p, q, r)), turn)


@dataclass(frozen=True)
class PolygonGeometry:
    turning_angles: np.ndarray  # one per vertex, in vertex order
    area: float
    winding: int
    residue: float


def polygon_geometry(vertices: Sequence[complex], check: bool = True) -> PolygonGeometry:
    """Turning angles, fan-triangulated algebraic area and Gauss-Bonnet winding number.

    ``vertices`` are disk points of a closed polygon (last joined to first).
    Cusps, where the path exactly reverses, are assigned ``+pi`` and ``-pi``
    alternately so that a retraced path has winding number 0.
    """
    z = np.asarray(vertices, dtype=complex)
    m = z.size
    if m < 2:
        raise DegeneratePolygonError("need at least two vertices")
    for k in range(m):
        if z[k] == z[(k + 1) % m]:
            raise DegeneratePolygonError(f"vertices {k} and {(k + 1) % m} coincide")
    turns = np.empty(m)
    cusp = 1.0
    for k in range(m):
        v, u, w = z[k], z[k - 1], z[(k + 1) % m]
        incoming = _direction(v, u) + math.pi
        t = float(wrap(_direction(v, w) - incoming))
        if abs(abs(t) - math.pi) < 1e-12:
            t, cusp = cusp * math.pi, -cusp
        turns[k] = t
    area = sum(triangle_signed_area(z[0], z[k], z[k + 1]) for k in range(1, m - 1))
    total = (turns.sum() - area) / TWO_PI
    w = int(round(total))
    res = abs(total - w)
    if check and res > RESIDUE_ERROR:
        raise GaussBonnetError(f"Gauss-Bonnet residue {res:.3g}")
    return PolygonGeometry(turns, float(area), w, float(res))


@dataclass(frozen=True)
class TurtlePolygon:
    alpha: float
    step: float
    signs: tuple[int, ...]
    vertices: np.ndarray | None  # disk coordinates, present for the vertex engine
    turning_angles: np.ndarray  # at p_0, p_1, ..., p_n
    area: float
    winding: int
    residue: float

    @property
    def n(self) -> int:
        return len(self.signs)


def turtle_vertices(alpha: float, step: float, signs: Sequence[int]) -> np.ndarray:
    """Disk coordinates of ``p_0 .. p_n``.  Loses precision once points near the ideal boundary."""
    R, L = turtle_step_maps(alpha, step)
    w = Mobius.identity()
    pts = [0j]
    for s in signs:
        w = w @ (R if s > 0 else L)
        pts.append(complex(cayley(w.apply_uhp(1j))))
    return np.array(pts)


def _check_signs(signs) -> np.ndarray:
    s = np.asarray(signs, dtype=np.int64)
    if s.ndim == 0 or s.shape[-1] == 0:
        raise ValueError("signs must be nonempty")
    if not np.isin(s, (-1, 1)).all():
        raise ValueError("signs must be +1 or -1")
    return s


def run_turtle(alpha: float, step: float, signs: Sequence[int], engine: str = "auto") -> TurtlePolygon:
    """Build ``P_n`` for ``n = len(signs)`` and compute its area and winding number.

    The last sign only affects the heading after ``p_n``; it does not change
    ``P_n``.
    """
    s = _check_signs(signs)
    n = s.size
    if engine == "auto":
        engine = "disk" if n * step <= 12 else "frame"
    if engine == "disk":
        verts = turtle_vertices(alpha, step, s)
        if n == 1:
            return TurtlePolygon(alpha, step, tuple(s.tolist()), verts, np.array([math.pi, -math.pi]), 0.0, 0, 0.0)
        g = polygon_geometry(verts)
        return TurtlePolygon(alpha, step, tuple(s.tolist()), verts, g.turning_angles, g.area, g.winding, g.residue)
    if engine != "frame":
        raise ValueError(f"unknown engine {engine!r}")
    res = turtle_frames(alpha, step, s[None, :], [n], keep_turning=True)
    return TurtlePolygon(
        alpha, step, tuple(s.tolist()), None, res.turning[0], float(res.area[0, 0]), int(res.winding[0, 0]),
        float(res.residue[0, 0]),
    )


def signed_area(poly: TurtlePolygon) -> float:
    return poly.area


def winding_number(poly: TurtlePolygon) -> int:
    if poly.residue > RESIDUE_ERROR:
        raise GaussBonnetError(f"Gauss-Bonnet residue {poly.residue:.3g}")
    return poly.winding


# -- local-frame engine -------------------------------------------------------------


@dataclass(frozen=True)
class FrameResult:
    checkpoints: tuple[int, ...]
    winding: np.ndarray  # (trials, checkpoints)
    area: np.ndarray
    residue: np.ndarray
    turning: np.ndarray | None = None  # full turning sequence, single final checkpoint only


def _closure(turn_sum, area, phi, beta):
    tau_n = wrap(math.pi + beta)
    tau_0 = wrap(math.pi - phi)
    total = (turn_sum + tau_n + tau_0 - area) / TWO_PI
    w = np.rint(total)
    return w.astype(np.int64), np.abs(total - w), tau_0, tau_n


def turtle_frames(
    alpha: float, step: float, signs: np.ndarray, checkpoints: Sequence[int], keep_turning: bool = False
) -> FrameResult:
    """Winding numbers and areas of ``P_j`` for each checkpoint ``j``, for every row of ``signs``.

    State per trial at vertex ``p_i``: ``b = d(p_i, p_0)`` and ``theta``, the
    signed angle from the heading to the direction of ``p_0``.  One step gives
    the fan triangle ``(p_0, p_i, p_{i+1})`` in closed form: its angle at
    ``p_{i+1}`` from the frame, ``d(p_{i+1}, p_0)`` by the law of cosines
    written in ``e^{-b}`` form, and its angle at ``p_0`` by combining the laws
    of sines and cosines.
    """
    s = _check_signs(signs)
    if s.ndim == 1:
        s = s[None, :]
    m, n = s.shape
    cps = sorted(set(int(c) for c in checkpoints))
    if not cps or cps[0] < 1 or cps[-1] > n:
        raise ValueError("checkpoints must lie in 1..n")
    ch, sh = math.cosh(step), math.sinh(step)
    wins = np.zeros((m, len(cps)), dtype=np.int64)
    areas = np.zeros((m, len(cps)))
    resid = np.zeros((m, len(cps)))
    turning = np.zeros((m, n + 1)) if keep_turning else None
    ci = 0
    if cps[0] == 1:  # digon p_0 p_1: cusps +pi and -pi
        ci = 1
        if keep_turning:
            turning[:, 0], turning[:, 1] = math.pi, -math.pi

    sa = s * alpha
    theta = wrap(math.pi - sa[:, 0])
    b = np.full(m, step)
    turn_sum = sa[:, 0].astype(float).copy()
    area = np.zeros(m)
    phi = np.zeros(m)
    if keep_turning and n > 1:
        turning[:, 1] = sa[:, 0]
    big_b = max(5.0, 2 * step + 1)
    for i in range(1, n):
        t = np.tanh(b)
        st, ct = np.sin(theta), np.cos(theta)
        beta = np.arctan2(-t * st, sh - ch * t * ct)
        # new distance a = d(p_{i+1}, p_0)
        eb = np.exp(-2 * b)
        K = (1 + eb) * ch - (1 - eb) * sh * ct
        x = np.cosh(np.minimum(b, 350.0)) * ch - np.sinh(np.minimum(b, 350.0)) * sh * ct
        a_small = np.arccosh(np.maximum(x, 1.0))
        a_large = b + np.log(K / 2) + np.log1p(np.sqrt(np.maximum(1 - 4 * eb / (K * K), 0.0)))
        a = np.where(b < 20, a_small, a_large)
        if np.any(a < 1e-9):
            raise DegeneratePolygonError(f"vertex p_{i + 1} returns to p_0")
        ea = np.exp(-2 * a)
        sin_c = np.abs(st) * sh * 2 * np.exp(-a) / (1 - ea)
        cos_c = ((1 + eb) * (1 + ea) - 4 * ch * np.exp(-a - b)) / ((1 - eb) * (1 - ea))
        C = np.arctan2(sin_c, cos_c)
        sgn = np.sign(st)
        phi += sgn * C
        area += sgn * (math.pi - np.abs(theta) - np.abs(beta) - C)
        j = i + 1
        if ci < len(cps) and cps[ci] == j:
            w, r, tau0, taun = _closure(turn_sum, area, phi, beta)
            wins[:, ci], areas[:, ci], resid[:, ci] = w, area, r
            if keep_turning and j == n:
                turning[:, 0], turning[:, n] = tau0, taun
            ci += 1
        if j < n:
            theta = wrap(math.pi + beta - sa[:, i])
            turn_sum += sa[:, i]
            if keep_turning:
                turning[:, j] = sa[:, i]
        b = a
    if np.any(resid > RESIDUE_ERROR):
        raise GaussBonnetError(f"Gauss-Bonnet residue {resid.max():.3g}")
    return FrameResult(tuple(cps), wins, areas, resid, turning)


# -- rotation number cross-check --------------------------------------------------


def lifted_rotation(alpha: float, step: float, signs: np.ndarray, iterations: int = 64) -> np.ndarray:
    """``rot`` of the lifted product ``X_1 ... X_n`` per row of ``signs``.

    ``R`` and ``L`` are lifted to move the basepoint ``0`` of the ideal circle
    forward and backward respectively by less than one turn.
    """
    from .circle import lift_mobius

    s = _check_signs(signs)
    if s.ndim == 1:
        s = s[None, :]
    R, L = turtle_step_maps(alpha, step)
    fr, fl = lift_mobius(R, branch="positive"), lift_mobius(L, branch="negative")
    x = np.zeros(s.shape[0])
    n = s.shape[1]
    for _ in range(iterations):
        for j in range(n - 1, -1, -1):
            x = np.where(s[:, j] > 0, fr(x), fl(x))
    return x / iterations


def rotation_gap(alpha: float, step: float, signs: np.ndarray, iterations: int = 1000) -> np.ndarray:
    """``|W_n - rot(X_1 ... X_{n-1})|`` per row of ``signs``.

    Only the first ``n - 1`` turns shape ``P_n``, so the comparison uses that
    product.  The gap is at most 1, up to the ``1/iterations`` error of the
    rotation-number estimate.
    """
    s = _check_signs(signs)
    if s.ndim == 1:
        s = s[None, :]
    n = s.shape[1]
    W = turtle_frames(alpha, step, s, [n]).winding[:, 0]
    if n == 1:
        return np.abs(W).astype(float)
    return np.abs(W - lifted_rotation(alpha, step, s[:, :-1], iterations))


# -- experiments ----------------------------------------------------------------


CHUNK = 500


def turtle_chunk(alpha: float, step: float, n: int, size: int, checkpoints: Sequence[int], seed: int) -> FrameResult:
    rng = np.random.default_rng(seed)
    signs = rng.choice(np.array([-1, 1], dtype=np.int8), size=(size, n))
    return turtle_frames(alpha, step, signs, checkpoints)


@dataclass(frozen=True)
class TurtleReport:
    alpha: float
    step: float
    n: int
    trials: int
    winding: np.ndarray
    area: np.ndarray
    max_residue: float
    seeds: tuple[int, ...]

    def summary(self) -> dict:
        from scipy import stats

        from .montecarlo import lattice_ks, normal_fit_tests

        out = {"alpha": self.alpha, "step": self.step, "n": self.n, "trials": self.trials}
        for name, x in (("winding", self.winding.astype(float)), ("area", self.area)):
            fit = normal_fit_tests(x / math.sqrt(self.n))
            out[name] = {
                "mean": float(x.mean()),
                "var": float(x.var(ddof=1)),
                "skew": float(stats.skew(x)),
                "mean_se": float(x.std(ddof=1) / math.sqrt(x.size)),
                "ks": fit.ks_statistic,
            }
        w = self.winding.astype(float)
        out["winding"]["ks_lattice"] = lattice_ks(w, w.mean(), w.std(ddof=1))
        out["max_residue"] = self.max_residue
        return out


def turtle_clt_experiment(
    alpha: float, step: float, n: int, trials: int, seed: int, workers: int = 1, checkpoints=None
) -> dict[int, TurtleReport]:
    """Independent uniform sign sequences; reports ``W_j`` and ``A_j`` at each checkpoint (default ``n``)."""
    from functools import partial

    from .montecarlo import derive_seed, run_trials

    if trials < 100:
        raise ValueError("trials must be >= 100")
    cps = tuple(sorted(set(checkpoints or (n,))))
    nchunks = math.ceil(trials / CHUNK)
    sizes = [min(CHUNK, trials - c * CHUNK) for c in range(nchunks)]
    fn = partial(_chunk_by_index, alpha, step, cps[-1], tuple(sizes), cps)
    run = run_trials(fn, nchunks, seed, workers=workers, chunk=1, pass_index=True)
    if run.failures:
        raise GeometryError(run.failures[0].error)
    reports = {}
    for k, c in enumerate(cps):
        W = np.concatenate([r.winding[:, k] for r in run.values])
        A = np.concatenate([r.area[:, k] for r in run.values])
        res = max(float(r.residue[:, k].max()) for r in run.values)
        reports[c] = TurtleReport(alpha, step, c, trials, W, A, res, tuple(derive_seed(seed, i) for i in range(nchunks)))
    return reports


def _chunk_by_index(alpha, step, n, sizes, cps, index, chunk_seed):
    return turtle_chunk(alpha, step, n, sizes[index], cps, chunk_seed)
