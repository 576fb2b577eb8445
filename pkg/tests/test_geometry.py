import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ringcap.geometry import (BoxCondenserParams, Grid, ball, box, box_condenser_volume,
                              contained_in, make_ball_ring, make_box_condenser, measure, plate,
                              polyline_distance, preimage, pullback_condenser, tube)
from ringcap.mappings import identity, linear, radial_stretch


def test_ball_ring_clearance():
    R = make_ball_ring((0, 0), 0.5, 1.0, ambient=box((-2, -2), (2, 2)))
    assert R.clearance() == pytest.approx(0.5)
    assert R.is_concentric_balls()


def test_ball_ring_errors():
    with pytest.raises(ValueError, match="radius ordering"):
        make_ball_ring((0, 0), 1.0, 0.5)
    with pytest.raises(ValueError, match="escapes ambient"):
        make_ball_ring((0, 0), 1.0, 3.0, ambient=box((-2, -2), (2, 2)))


def test_box_condenser_volume_examples():
    assert box_condenser_volume(BoxCondenserParams((1, 1), 1, 0.5)) == pytest.approx(3.0)
    assert box_condenser_volume(BoxCondenserParams((1, 1, 1), 1, 1)) == pytest.approx(32.0)
    with pytest.raises(ValueError, match="t must be positive"):
        BoxCondenserParams((2, 1), 1, 0)
    with pytest.raises(ValueError, match="sorted"):
        BoxCondenserParams((1, 2), 1, 0.5)


@given(l1=st.floats(0.5, 3), ratio=st.floats(0.2, 1), r=st.floats(0.2, 2), t=st.floats(0.1, 1),
       angle=st.floats(0, math.pi))
def test_box_condenser_volume_matches_monte_carlo(l1, ratio, r, t, angle):
    Q = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    params = BoxCondenserParams((l1, l1 * ratio), r, t, (0.3, -0.1), tuple(map(tuple, Q)))
    R = make_box_condenser(params)
    m = measure(R.G, samples=200_000, seed=1)
    exact = box_condenser_volume(params)
    assert abs(m.value - exact) <= 5 * m.error + 1e-9 * exact


def test_plate_has_no_volume_but_thickens():
    P = plate((0, 0), (0.5,))
    assert P.volume == 0.0
    assert P.surface_area() == pytest.approx(2.0)
    T = P.thicken(0.1)
    assert T.contains(np.array([[0.2, 0.049]]))[0]
    assert not T.contains(np.array([[0.2, 0.06]]))[0]


def test_measure_examples():
    m = measure(ball((0, 0), 1.0), samples=1_000_000)
    assert abs(m.value - math.pi) < 0.01
    g = measure(box((0, 0), (1, 1)), method="grid", h=1 / 128)
    assert g.value == pytest.approx(1.0, abs=1e-12)
    ann = (measure(ball((0, 0), 1.0), samples=400_000).value
           - measure(ball((0, 0), 0.5), samples=400_000).value)
    assert ann == pytest.approx(0.75 * math.pi, abs=0.02)
    with pytest.raises(ValueError):
        measure(ball((0, 0), 1.0), samples=10)


@given(r1=st.floats(0.1, 1.0), dr=st.floats(0.05, 1.0))
def test_measure_monotone_under_inclusion(r1, dr):
    a = measure(ball((0, 0), r1), samples=50_000, seed=2)
    b = measure(ball((0, 0), r1 + dr), samples=50_000, seed=2)
    assert a.value <= b.value + 3 * (a.error + b.error)


def test_grid_measure_bias_bound_covers_error():
    m = measure(ball((0.1, 0.2), 0.7), method="grid", h=0.02)
    assert abs(m.value - math.pi * 0.49) <= m.error


def test_grid_around_puts_node_on_center():
    g = Grid.around((-1, -1), (1, 1), 0.3, center=(0.05, 0.1))
    X = g.nodes().reshape(-1, 2)
    assert np.min(np.linalg.norm(X - (0.05, 0.1), axis=1)) < 1e-12
    lo, hi = g.extent
    assert np.all(lo <= -1) and np.all(hi >= 1)


def test_pullback_identity_is_identity():
    R = make_ball_ring((0.2, 0.1), 0.3, 0.8)
    P = pullback_condenser(identity(2), R)
    X = np.random.default_rng(0).uniform(-1.5, 1.5, (10_000, 2))
    assert np.array_equal(P.F.contains(X), R.F.contains(X))
    assert np.array_equal(P.G.contains(X), R.G.contains(X))


def test_pullback_radial_origin_ring_is_ball_ring():
    R = make_ball_ring((0, 0), 0.0625, 1.0)
    P = pullback_condenser(radial_stretch(4.0), R)
    assert P.F.ball[1] == pytest.approx(0.5)
    assert P.G.ball[1] == pytest.approx(1.0)
    assert P.is_concentric_balls()


def test_pullback_linear_gives_ellipse():
    R = make_ball_ring((0, 0), 0.4, 1.0)
    P = pullback_condenser(linear([[2, 0], [0, 1]]), R)
    assert P.F.contains(np.array([[0.199, 0], [0, 0.399]])).all()
    assert not P.F.contains(np.array([[0.201, 0], [0, 0.401]])).any()
    assert P.F.volume == pytest.approx(math.pi * 0.2 * 0.4)
    assert P.F.ball is None and P.F.convex


@given(cx=st.floats(-0.5, 0.5), cy=st.floats(-0.5, 0.5), alpha=st.floats(0.5, 4))
def test_pullback_preserves_inclusion(cx, cy, alpha):
    R = make_ball_ring((cx, cy), 0.1, 0.3)
    P = pullback_condenser(radial_stretch(alpha), R)
    assert contained_in(P.F, P.G, 41)


def test_preimage_membership_matches_forward_map():
    phi = radial_stretch(2.0)
    S = preimage(ball((0.3, 0.2), 0.2), phi)
    X = np.random.default_rng(3).uniform(-1, 1, (5000, 2))
    inside = np.linalg.norm(phi.forward(X) - (0.3, 0.2), axis=1) <= 0.2
    assert np.array_equal(S.contains(X), inside)
    # bounding box covers every member
    assert np.all((X[inside] >= S.lo) & (X[inside] <= S.hi))


def test_tube_and_polyline_distance():
    V = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    d = polyline_distance(np.array([[0.5, 0.3], [2.0, 0.5], [-1.0, 0.0]]), V)
    np.testing.assert_allclose(d, [0.3, 1.0, 1.0])
    T = tube(V, 0.1)
    assert T.contains(np.array([[0.5, 0.09], [1.05, 0.5]])).all()
    assert not T.contains(np.array([[0.5, 0.11]])).any()


def test_condenser_requires_inclusion():
    from ringcap.geometry import RingCondenser

    with pytest.raises(ValueError, match="not contained"):
        RingCondenser(ball((0, 0), 1.0), ball((0, 0), 0.5, closed=False))
