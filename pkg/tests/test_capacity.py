import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from ringcap.capacity import (CondenserTooThin, ONE, ScalarField, SolverOptions, ZERO,
                              cap_lower_bound_diam, cap_lower_bound_measure, cap_numeric,
                              cap_radial_closed_form, cap_radial_oracle, cap_upper_bound,
                              capacity, condenser_grid, p_energy)
from ringcap.geometry import (BoxCondenserParams, Grid, RingCondenser, ball, make_ball_ring,
                              make_box_condenser, preimage)
from ringcap.mappings import radial_stretch


def opts(res, p=2.0):
    return SolverOptions(p=p, res=res)


# ---------------------------------------------------------------- oracles

@pytest.mark.parametrize("r_F, r_G, n, p, frozen", [
    (0.5, 1.0, 2, 2.0, oracles.ANNULUS_05_1_P2),
    (1.0, math.e, 2, 2.0, oracles.ANNULUS_1_E_P2),
    (0.5, 1.0, 2, 1.5, oracles.ANNULUS_05_1_P15),
    (0.5, 1.0, 2, 3.0, oracles.ANNULUS_05_1_P3),
    (1.0, 2.0, 3, 2.0, oracles.SHELL_1_2_P2_3D),
])
def test_radial_oracle_matches_bruteforce(r_F, r_G, n, p, frozen):
    assert cap_radial_oracle(r_F, r_G, n, p) == pytest.approx(frozen, rel=1e-8)
    assert oracles.radial_bruteforce(r_F, r_G, n, p) == pytest.approx(frozen, rel=1e-12)


def test_radial_oracle_known_values():
    assert cap_radial_oracle(0.5, 1.0, 2, 2.0) == pytest.approx(2 * math.pi / math.log(2), rel=1e-12)
    assert cap_radial_oracle(1.0, 2.0, 3, 2.0) == pytest.approx(8 * math.pi, rel=1e-12)


@given(r_F=st.floats(0.05, 0.9), k=st.floats(1.05, 10), p=st.floats(1.1, 5.0),
       n=st.sampled_from([2, 3]))
def test_radial_quadrature_agrees_with_closed_form(r_F, k, p, n):
    a = cap_radial_oracle(r_F, r_F * k, n, p)
    b = cap_radial_closed_form(r_F, r_F * k, n, p)
    assert a == pytest.approx(b, rel=1e-7)


def test_radial_oracle_rejects_bad_input():
    with pytest.raises(ValueError, match="p must exceed 1"):
        cap_radial_oracle(0.5, 1.0, 2, 1.0)
    with pytest.raises(ValueError):
        cap_radial_oracle(1.0, 0.5, 2, 2.0)


# ---------------------------------------------------------------- energy

def test_energy_of_constant_and_linear_fields():
    g = Grid(np.zeros(2), 1 / 64, (65, 65))
    mask = np.zeros(g.shape, dtype=np.int8)
    assert p_energy(ScalarField(g, np.ones(g.shape), mask), 2.0) == 0.0
    x = g.nodes()[..., 0]
    for p in (1.5, 2.0, 3.0):
        assert p_energy(ScalarField(g, x, mask), p) == pytest.approx(1.0, rel=1e-12)


def test_solver_options_validation():
    with pytest.raises(ValueError, match="p must exceed 1"):
        SolverOptions(p=0.5)
    with pytest.raises(ValueError):
        SolverOptions(tol=0.0)


# ---------------------------------------------------------------- solver vs oracle

@pytest.mark.parametrize("r_F, r_G, p, tol", [
    (0.5, 1.0, 2.0, 0.02),
    (1.0, math.e, 2.0, 0.02),
    (0.5, 1.0, 1.5, 0.03),
    (0.5, 1.0, 3.0, 0.03),
])
def test_annulus_matches_oracle_at_res_256(r_F, r_G, p, tol):
    out = cap_numeric(make_ball_ring((0, 0), r_F, r_G), opts(256, p))
    assert out.converged
    assert out.value == pytest.approx(cap_radial_oracle(r_F, r_G, 2, p), rel=tol)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_error_decreases_under_refinement(p):
    R = make_ball_ring((0, 0), 0.5, 1.0)
    exact = cap_radial_oracle(0.5, 1.0, 2, p)
    errs = [abs(cap_numeric(R, opts(res, p)).value - exact) for res in (64, 128, 256)]
    assert errs[0] > errs[1] > errs[2]


def test_three_dimensional_shell():
    out = cap_numeric(make_ball_ring((0, 0, 0), 1.0, 2.0), opts(40))
    assert out.value == pytest.approx(8 * math.pi, rel=0.08)


def test_too_thin_condenser_is_rejected():
    with pytest.raises(CondenserTooThin, match="too thin"):
        cap_numeric(make_ball_ring((0, 0), 0.5, 0.51), opts(32))


def test_field_is_admissible_and_energy_matches_value():
    R = make_ball_ring((0.1, 0), 0.3, 0.9)
    out = cap_numeric(R, opts(48, 3.0), keep_field=True)
    f = out.field
    assert f.is_admissible()
    assert p_energy(f, 3.0) == pytest.approx(out.value, rel=1e-12)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
@given(amp=st.floats(0.005, 0.2), seed=st.integers(0, 10_000))
def test_solver_output_is_least_energy(p, amp, seed):
    R = make_ball_ring((0, 0), 0.3, 0.9)
    out = cap_numeric(R, opts(24, p), keep_field=True)
    f = out.field
    rng = np.random.default_rng(seed)
    free = f.mask == 0
    v = f.values.copy()
    v[free] = np.clip(v[free] + amp * rng.standard_normal(free.sum()), 0.0, 1.0)
    trial = ScalarField(f.grid, v, f.mask)
    assert trial.is_admissible()
    assert p_energy(trial, p) >= out.value * (1 - 1e-9)


# ---------------------------------------------------------------- invariants

@given(r_F=st.floats(0.15, 0.4), p=st.sampled_from([1.5, 2.0, 3.0]))
def test_capacity_monotone_in_F_and_G(r_F, p):
    small = make_ball_ring((0.05, 0), r_F, 0.8)
    big_F = make_ball_ring((0.05, 0), 1.1 * r_F, 0.8)
    big_G = make_ball_ring((0.05, 0), r_F, 0.9)
    # one grid for all three so the comparison is between admissible classes
    grid = condenser_grid(big_G, 40)
    o = opts(40, p)
    a = cap_numeric(small, o, grid=grid).value
    assert cap_numeric(big_F, o, grid=grid).value >= a * (1 - 2e-8)
    assert cap_numeric(big_G, o, grid=grid).value <= a * (1 + 2e-8)


@given(s=st.floats(0.3, 3.0), p=st.sampled_from([1.5, 2.0, 3.0]),
       c=st.tuples(st.floats(-1, 1), st.floats(-1, 1)))
def test_capacity_scales_like_s_to_n_minus_p(s, p, c):
    base = cap_numeric(make_ball_ring((0, 0), 0.3, 0.8), opts(32, p)).value
    scaled = cap_numeric(make_ball_ring(np.array(c), 0.3 * s, 0.8 * s), opts(32, p)).value
    assert scaled == pytest.approx(s ** (2 - p) * base, rel=0.03)


# ---------------------------------------------------------------- bounds

def test_bound_examples():
    assert cap_upper_bound(make_ball_ring((0, 0), 1.0, 2.0), 2.0) == pytest.approx(3 * math.pi)
    assert cap_upper_bound(make_ball_ring((0, 0), 0.5, 1.0), 2.0) == pytest.approx(3 * math.pi)
    R = make_ball_ring((0, 0), 0.5, 1.0)
    assert cap_lower_bound_measure(R, 2.0) == pytest.approx(math.pi, rel=1e-4)
    shell = make_ball_ring((0, 0, 0), 1.0, 2.0)
    assert cap_lower_bound_measure(shell, 2.0) == pytest.approx(1.5 * math.pi, rel=1e-2)
    assert cap_lower_bound_measure(shell, 2.0) <= 8 * math.pi
    assert cap_lower_bound_diam(R, 2.0) == pytest.approx(1 / math.pi, rel=1e-4)


def test_lower_bound_is_certified_below_true_value():
    # an inscribed boundary mesh can only under-measure a convex surface
    R = make_ball_ring((0, 0), 0.5, 1.0)
    for p in (1.5, 2.0, 3.0):
        assert cap_lower_bound_measure(R, p) <= (2 * math.pi * 0.5) ** p / math.pi ** (p - 1)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_diam_diagnostic_scaling(p):
    a = cap_lower_bound_diam(make_ball_ring((0, 0), 0.5, 1.0), p)
    b = cap_lower_bound_diam(make_ball_ring((0, 0), 1.0, 2.0), p)
    assert b == pytest.approx(2 ** (2 - p) * a, rel=1e-3)


def test_diam_diagnostic_vanishes_for_point():
    R = RingCondenser(ball((0, 0), 0.0), ball((0, 0), 1.0, closed=False))
    assert cap_lower_bound_diam(R, 2.0) == 0.0


def test_upper_bound_needs_clearance():
    R = RingCondenser(ball((0, 0), 1.0), ball((0, 0), 1.0, closed=True))
    with pytest.raises(ValueError):
        cap_upper_bound(R, 2.0)


def test_lower_bound_requires_convex_F():
    phi = radial_stretch(3.0)
    F = preimage(ball((0.5, 0.0), 0.2), phi)
    G = preimage(ball((0.5, 0.0), 0.45, closed=False), phi)
    with pytest.raises(ValueError, match="requires convex F"):
        cap_lower_bound_measure(RingCondenser(F, G), 2.0)


@given(cx=st.floats(-0.3, 0.3), r_F=st.floats(0.1, 0.5), k=st.floats(1.3, 4.0),
       p=st.sampled_from([1.5, 2.0, 3.0]))
def test_bracket_on_ball_rings(cx, r_F, k, p):
    R = make_ball_ring((cx, 0.1), r_F, r_F * k)
    v = cap_numeric(R, opts(40, p)).value
    assert cap_lower_bound_measure(R, p) <= v <= cap_upper_bound(R, p)


def test_bracket_on_box_condenser():
    R = make_box_condenser(BoxCondenserParams((1.0, 1.0), 0.5, 0.5))
    for p in (1.5, 2.0, 3.0):
        v = cap_numeric(R, opts(64, p)).value
        assert cap_lower_bound_measure(R, p) <= v <= cap_upper_bound(R, p)


def test_capacity_dispatch():
    R = make_ball_ring((0, 0), 0.5, 1.0)
    auto = capacity(R, 2.0, bounds=True)
    assert auto.method == "oracle"
    assert auto.value == pytest.approx(2 * math.pi / math.log(2))
    assert auto.lower_bound <= auto.value <= auto.upper_bound
    assert set(auto.to_json()) == {"value", "p", "h", "lower_bound", "upper_bound",
                                   "iterations", "converged"}
    with pytest.raises(ValueError, match="concentric"):
        capacity(RingCondenser(ball((0.1, 0), 0.2), ball((0, 0), 1.0, closed=False)), 2.0,
                 method="oracle")
