import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sclab.circle import (
    InvalidMapError,
    from_function,
    is_monotone,
    lift_mobius,
    load_generator_set,
    piecewise_linear,
    random_rot_clt,
    rotation,
    rotation_number,
    stationary_measure_histogram,
)
from sclab.hyperbolic import Mobius, turtle_step_maps

entries = st.floats(-3, 3)


@st.composite
def mobius(draw):
    a, b, c = draw(entries), draw(entries), draw(entries)
    d = draw(entries)
    if a * d - b * c < 0.1:
        a, d = abs(a) + 1, abs(d) + 1
        b, c = b * 0.1, c * 0.1
    return Mobius(a, b, c, d)


def boundary_action(m, t):
    z = np.exp(2j * np.pi * t)
    return np.mod(np.angle(m.apply_disk(z)) / (2 * np.pi), 1.0)


def elliptic(theta):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return Mobius(c, s, -s, c)


def test_identity_lift():
    h = lift_mobius(Mobius.identity())
    assert np.allclose(h(np.linspace(0, 1, 11)), np.linspace(0, 1, 11))
    assert rotation_number(h, 100)[0] == 0


@pytest.mark.parametrize("p,q", [(1, 3), (1, 4), (2, 5)])
def test_elliptic_rotation_number(p, q):
    m = elliptic(2 * math.pi * p / q)
    h = lift_mobius(m, branch="positive")
    # the boundary displacement of a rigid rotation is constant
    shift = float(h(0.0))
    assert np.allclose(h(np.linspace(0, 1, 7)) - np.linspace(0, 1, 7), shift, atol=1e-12)
    est, _ = rotation_number(h, 1000)
    assert abs(est - shift) < 1e-9
    assert min(abs(est - p / q), abs(est - (1 - p / q))) < 1e-9


def test_parabolic_rotation_number():
    N = 10_000
    est, err = rotation_number(lift_mobius(Mobius(1, 1, 0, 1)), N)
    assert abs(est) <= err


def test_rotation_by_third():
    est, err = rotation_number(rotation(1 / 3), 300)
    assert err == 1 / 300
    assert abs(est - 1 / 3) <= err


def test_non_monotone_map_detected():
    h = from_function(lambda t: t + 0.5 * np.sin(2 * np.pi * t))
    assert not is_monotone(h)
    with pytest.raises(InvalidMapError):
        rotation_number(h, 50, x0=0.4)


def test_piecewise_linear_validation():
    with pytest.raises(InvalidMapError):
        piecewise_linear([0, 0.5, 1], [0, 0.7, 1.5])
    with pytest.raises(InvalidMapError):
        piecewise_linear([0, 0.5, 1], [0, -0.1, 1])
    h = piecewise_linear([0, 0.5, 1], [0.1, 0.3, 1.1])
    assert abs(h(1.25) - (1 + h(0.25))) < 1e-12


@settings(max_examples=100, deadline=None)
@given(mobius(), st.floats(0, 1))
def test_lift_covers_boundary_action(m, t):
    h = lift_mobius(m)
    got = np.mod(h(t), 1.0)
    want = boundary_action(m, t)
    d = abs(got - want)
    assert min(d, 1 - d) < 1e-9


@settings(max_examples=100, deadline=None)
@given(mobius(), st.floats(-2, 2))
def test_lift_is_degree_one_and_increasing(m, t):
    h = lift_mobius(m)
    assert abs(h(t + 1) - h(t) - 1) < 1e-9
    assert h(t + 1e-6) > h(t)


@settings(max_examples=100, deadline=None)
@given(mobius(), mobius())
def test_lift_of_product_differs_by_integer(m1, m2):
    t = np.linspace(0, 1, 9)
    d = (lift_mobius(m1) @ lift_mobius(m2))(t) - lift_mobius(m1 @ m2)(t)
    assert np.allclose(d, np.round(d[0]), atol=1e-8)


@settings(max_examples=100, deadline=None)
@given(mobius())
def test_inverse_lift(m):
    h = lift_mobius(m)
    t = np.linspace(-1, 1, 9)
    assert np.allclose(h.inverse()(h(t)), t, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(mobius(), mobius())
def test_rotation_number_quasimorphism(m1, m2):
    N = 400
    f, g = lift_mobius(m1), lift_mobius(m2)
    rf, rg, rfg = (rotation_number(h, N)[0] for h in (f, g, f @ g))
    assert abs(rfg - rf - rg) <= 1 + 3 / N


def test_rotation_clt_commuting_rotations():
    beta = 0.1
    rep = random_rot_clt([rotation(beta), rotation(-beta)], [0.5, 0.5], 400, 2000, seed=1)
    assert abs(rep.drift) <= 3 * rep.drift_se
    assert abs(rep.sigma - beta) < 0.01


def test_rotation_clt_turtle_lifts_mean_zero():
    R, L = turtle_step_maps(math.pi / 2, 0.3)
    maps = [lift_mobius(R, "positive"), lift_mobius(L, "negative")]
    rep = random_rot_clt(maps, [0.5, 0.5], 400, 2000, seed=2)
    assert abs(rep.drift) <= 3 * rep.drift_se


def test_rotation_clt_deterministic_across_workers():
    maps = [rotation(0.1), rotation(-0.1)]
    a = random_rot_clt(maps, [0.5, 0.5], 50, 300, seed=3, workers=1)
    b = random_rot_clt(maps, [0.5, 0.5], 50, 300, seed=3, workers=2)
    assert np.array_equal(a.samples, b.samples)


def test_rotation_clt_validates():
    with pytest.raises(ValueError):
        random_rot_clt([rotation(0.1)], [1.0], 10, 50, seed=1)
    with pytest.raises(ValueError):
        random_rot_clt([rotation(0.1), rotation(0.2)], [0.7, 0.7], 10, 200, seed=1)


def test_stationary_irrational_rotation_is_uniform():
    samples, bins = 20_000, 20
    hist = stationary_measure_histogram([rotation(math.sqrt(2) - 1)], [1.0], 500, samples, bins, seed=4)
    assert np.abs(hist.mass - 1 / bins).max() <= 3 / math.sqrt(samples) + 1 / bins


def test_stationary_common_fixed_point_concentrates():
    # both maps fix infinity in the upper half-plane, which is t = 0 on the circle, and attract to it
    maps = [lift_mobius(Mobius(math.e**0.5, 0, 0, math.e**-0.5)), lift_mobius(Mobius(1, 1, 0, 1))]
    hist = stationary_measure_histogram(maps, [0.5, 0.5], 400, 5000, 20, seed=5)
    assert hist.mass[0] + hist.mass[-1] > 0.9


def test_generator_file():
    text = '{"generators": [{"mobius": [1, 1, 0, 1]}, {"pl": {"breakpoints": [0, 1], "values": [0.2, 1.2]}}]}'
    maps, weights = load_generator_set(text)
    assert len(maps) == 2 and weights == [0.5, 0.5]
    with pytest.raises(InvalidMapError):
        load_generator_set('{"generators": [{"bogus": 1}]}')
