import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sclab.hyperbolic import (
    DegeneratePolygonError,
    GaussBonnetError,
    Mobius,
    TurtlePolygon,
    disk_distance,
    phase_threshold,
    polygon_geometry,
    rotation_gap,
    run_turtle,
    signed_area,
    triangle_signed_area,
    turtle_clt_experiment,
    turtle_frames,
    turtle_step_maps,
    turtle_vertices,
    winding_number,
)

signs_st = st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=40)
alpha_st = st.floats(0.2, 2.8)
step_st = st.floats(0.1, 1.5)


def translation(ell):
    return np.diag([math.exp(ell / 2), math.exp(-ell / 2)])


def rotation_about_i(theta):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, s], [-s, c]])


# -- step maps ---------------------------------------------------------------------


@pytest.mark.parametrize("alpha,step", [(math.pi / 2, 0.3), (1.0, 2.5), (0.1, 1.0)])
def test_step_maps_are_translate_then_rotate(alpha, step):
    R, L = turtle_step_maps(alpha, step)
    assert np.allclose(R.matrix(), translation(step) @ rotation_about_i(alpha), atol=1e-14)
    assert np.allclose(L.matrix(), translation(step) @ rotation_about_i(-alpha), atol=1e-14)


@given(alpha_st, step_st)
def test_trace_formula(alpha, step):
    R, L = turtle_step_maps(alpha, step)
    want = 2 * math.cosh(step / 2) * math.cos(alpha / 2)
    assert abs(R.trace - want) < 1e-12 and abs(L.trace - want) < 1e-12


@given(alpha_st, step_st, st.complex_numbers(max_magnitude=0.9))
def test_reflection_conjugates_r_to_l(alpha, step, w):
    R, L = turtle_step_maps(alpha, step)
    assert abs(np.conj(R.apply_disk(np.conj(w))) - L.apply_disk(w)) < 1e-9


def test_zero_turn_is_translation():
    R, L = turtle_step_maps(0.0, 0.7)
    assert np.allclose(R.matrix(), L.matrix())
    assert abs(disk_distance(0j, R.apply_disk(0j)) - 0.7) < 1e-12
    # fixes the endpoints of its axis
    assert abs(R.apply_disk(1 + 0j) - 1) < 1e-12 and abs(R.apply_disk(-1 + 0j) + 1) < 1e-12


def test_mobius_normalises_determinant():
    m = Mobius(2.0, 0.0, 0.0, 2.0)
    assert abs(m.det - 1) < 1e-15


# -- phase threshold ------------------------------------------------------------------


def test_phase_threshold_right_angle():
    assert abs(phase_threshold(math.pi / 2) - 2 * math.acosh(math.sqrt(2))) < 1e-12
    assert abs(phase_threshold(math.pi / 2) - 1.7627) < 1e-4


def test_phase_threshold_near_pi():
    assert phase_threshold(math.pi - 1e-6) < 1e-5


def test_products_above_threshold_are_hyperbolic():
    alpha, step = math.pi / 2, 2.5
    R, L = turtle_step_maps(alpha, step)
    rng = np.random.default_rng(1)
    for _ in range(500):
        m = Mobius.identity()
        for s in rng.choice([-1, 1], size=int(rng.integers(1, 30))):
            m = m @ (R if s > 0 else L)
        assert abs(m.trace) > 2


# -- polygons ------------------------------------------------------------------------------


@pytest.mark.parametrize("alpha,step,s", [(math.pi / 2, 0.3, 1), (1.0, 2.0, -1), (2.5, 0.8, 1)])
def test_triangle_against_law_of_cosines(alpha, step, s):
    poly = run_turtle(alpha, step, [s, 1], engine="disk")
    cosh_c = math.cosh(step) ** 2 + math.sinh(step) ** 2 * math.cos(alpha)
    c = math.acosh(cosh_c)
    cos_base = (math.cosh(step) * cosh_c - math.cosh(step)) / (math.sinh(step) * math.sinh(c))
    base = math.acos(cos_base)
    assert abs(poly.area - s * (alpha - 2 * base)) < 1e-10
    assert poly.winding == s
    assert abs(poly.area) < math.pi


def is_convex(z):
    """Every vertex lies strictly left of every edge geodesic (edge moved to the real axis)."""
    m = len(z)
    for k in range(m):
        u, v = z[k], z[(k + 1) % m]
        to0 = lambda w: (w - u) / (1 - np.conj(u) * w)  # noqa: E731
        rot = np.exp(-1j * np.angle(to0(v)))
        others = [rot * to0(z[j]) for j in range(m) if j not in (k, (k + 1) % m)]
        if any(w.imag <= 0 for w in others):
            return False
    return True


def test_convex_all_left_polygons_wind_once():
    convex = 0
    for alpha in (0.8, math.pi / 2, 2.2):
        for step in (0.3, 1.0):
            for n in range(2, 9):
                poly = run_turtle(alpha, step, [1] * n, engine="disk")
                if is_convex(poly.vertices):
                    convex += 1
                    assert poly.winding == 1 and poly.area > 0
    assert convex >= 10


def test_retraced_path_has_zero_area_and_winding():
    poly = run_turtle(1.0, 0.5, [1])
    assert poly.winding == 0 and poly.area == 0
    z = turtle_vertices(1.0, 0.5, [1, -1])
    g = polygon_geometry([z[0], z[1], z[2], z[1]])
    assert g.winding == 0 and abs(g.area) < 1e-12


def test_degenerate_polygon():
    with pytest.raises(DegeneratePolygonError):
        polygon_geometry([0j, 0.1 + 0j, 0.1 + 0j])


def test_winding_number_refuses_bad_residue():
    poly = TurtlePolygon(1.0, 1.0, (1,), None, np.zeros(2), 0.0, 0, 0.3)
    with pytest.raises(GaussBonnetError):
        winding_number(poly)


def test_signs_validated():
    with pytest.raises(ValueError):
        run_turtle(1.0, 1.0, [])
    with pytest.raises(ValueError):
        run_turtle(1.0, 1.0, [1, 0])


def test_step_lengths():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        z = turtle_vertices(float(rng.uniform(0.1, 3.0)), 0.4, rng.choice([-1, 1], size=n))
        assert np.abs(disk_distance(z[:-1], z[1:]) - 0.4).max() < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.complex_numbers(max_magnitude=0.8), st.floats(0, 2 * math.pi), signs_st)
def test_isometry_invariance(center, angle, signs):
    z = turtle_vertices(math.pi / 2, 0.3, signs)
    if len(signs) < 2:
        return
    g = polygon_geometry(z)
    # disk isometry w -> e^{i angle} (w - c)/(1 - conj(c) w)
    moved = np.exp(1j * angle) * (z - center) / (1 - np.conj(center) * z)
    h = polygon_geometry(moved)
    assert h.winding == g.winding
    assert abs(h.area - g.area) < 1e-8


@settings(max_examples=100, deadline=None)
@given(alpha_st, step_st, signs_st)
def test_mirror_symmetry(alpha, step, signs):
    a = run_turtle(alpha, step, signs, engine="frame")
    b = run_turtle(alpha, step, [-s for s in signs], engine="frame")
    assert b.winding == -a.winding
    assert abs(b.area + a.area) < 1e-12


@settings(max_examples=100, deadline=None)
@given(alpha_st, st.floats(0.1, 0.5), st.lists(st.sampled_from([-1, 1]), min_size=2, max_size=25))
def test_engines_agree(alpha, step, signs):
    d = run_turtle(alpha, step, signs, engine="disk")
    f = run_turtle(alpha, step, signs, engine="frame")
    assert d.winding == f.winding
    assert abs(d.area - f.area) < 1e-7
    assert np.allclose(d.turning_angles, f.turning_angles, atol=1e-7)


def test_fan_triangles_sum_to_area():
    z = turtle_vertices(1.3, 0.6, [1, 1, -1, 1, -1, -1, 1])
    area = sum(triangle_signed_area(z[0], z[k], z[k + 1]) for k in range(1, len(z) - 1))
    assert abs(area - signed_area(run_turtle(1.3, 0.6, [1, 1, -1, 1, -1, -1, 1]))) < 1e-12


def test_gauss_bonnet_residue_audit():
    rng = np.random.default_rng(3)
    signs = rng.choice(np.array([-1, 1], dtype=np.int8), size=(10_000, 1000))
    cps = [2, 10, 50, 200, 1000]
    for step in (0.3, 1.0):
        res = turtle_frames(math.pi / 2, step, signs, cps)
        assert res.residue.max() <= 1e-6


def test_winding_close_to_rotation_number():
    rng = np.random.default_rng(4)
    for step, n in ((0.3, 40), (1.0, 25), (2.5, 10)):
        signs = rng.choice([-1, 1], size=(1000, n))
        iters = 1000
        gap = rotation_gap(math.pi / 2, step, signs, iterations=iters)
        assert gap.max() < 1 + 1 / iters + 1e-6


def test_clt_experiment_deterministic_and_symmetric():
    a = turtle_clt_experiment(math.pi / 2, 0.3, 200, 400, seed=5)[200]
    b = turtle_clt_experiment(math.pi / 2, 0.3, 200, 400, seed=5, workers=2)[200]
    assert np.array_equal(a.winding, b.winding) and np.array_equal(a.area, b.area)
    s = a.summary()
    assert abs(s["winding"]["mean"]) <= 4 * s["winding"]["mean_se"]
    assert a.max_residue <= 1e-6


def test_clt_experiment_needs_trials():
    with pytest.raises(ValueError):
        turtle_clt_experiment(1.0, 0.3, 10, 50, seed=1)
