import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from hypnorms import inequalities as iq
from hypnorms.inequalities import ClassRecord
from hypnorms.inequalities import TestFunction as Harmonic


def v_oracle(r):
    """The closed form at 50 digits, free of the double-precision cancellation."""
    with mpmath.workdps(50):
        r = mpmath.mpf(r)
        c2 = 1 / mpmath.sinh(r) ** 2
        return float(6 * mpmath.pi * (r + 2 * r * c2 - mpmath.coth(r) * (r * r * c2 + 1)))


@pytest.mark.parametrize("r", [1e-3, 0.05, 0.0999, 0.1, 0.2, 0.5, 1.0, 3.0, 8.0])
def test_v_matches_high_precision(r):
    assert iq.v_of_r(r) == pytest.approx(v_oracle(r), rel=1e-11)


def test_v_series_joins_closed_form():
    c = iq.V_SERIES_CUTOFF
    assert iq.v_of_r(c * (1 - 1e-12)) == pytest.approx(iq.v_of_r(c), rel=1e-9)


def test_v_small_r_is_euclidean_ball_volume():
    # v(r) ~ (4/3) pi r^3 for small balls
    assert iq.v_of_r(1e-3) == pytest.approx(4 / 3 * math.pi * 1e-9, rel=1e-5)


def test_v_monotone_and_linear_asymptote():
    r = np.linspace(0.01, 10, 400)
    v = np.array([iq.v_of_r(x) for x in r])
    assert np.all(np.diff(v) > 0)
    for x in (5.0, 10.0, 20.0):
        assert iq.v_of_r(x) == pytest.approx(6 * math.pi * (x - 1), rel=0.02)


@pytest.mark.parametrize("r", [0.0, -1.0])
def test_v_domain(r):
    with pytest.raises(ValueError):
        iq.v_of_r(r)


def test_ball_energy_of_unit_gradient():
    # f = x: |grad f|^2 = 1, energy = int pi (R^2 - (z - c)^2) / z dz over the Euclidean ball
    z0, r = 1.3, 0.4
    c, R = z0 * math.cosh(r), z0 * math.sinh(r)
    exact, _ = integrate.quad(lambda z: math.pi * (R * R - (z - c) ** 2) / z, c - R, c + R, epsabs=0, epsrel=1e-13)
    got = iq.hyperbolic_ball_energy(iq.HARMONIC_CATALOG["x"], (0.0, 0.0, z0), r)
    assert got == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("r", [0.2, 0.7, 1.5])
def test_ball_energy_gives_hyperbolic_volume(r):
    # f = log z has |df| = 1 in the hyperbolic metric, so the energy is the ball volume
    logz = Harmonic("log_z", lambda x, y, z: np.log(z), lambda x, y, z: np.stack(np.broadcast_arrays(0 * z, 0 * z, 1 / z)))
    got = iq.hyperbolic_ball_energy(logz, (0.1, -0.2, 0.8), r, order=32)
    assert got == pytest.approx(math.pi * (math.sinh(2 * r) - 2 * r), rel=1e-8)


@pytest.mark.parametrize("fid", sorted(iq.HARMONIC_CATALOG))
@pytest.mark.parametrize("r", [0.1, 0.3, 0.6])
def test_mean_value_bound_catalog(fid, r):
    chk = iq.mean_value_bound_check(fid, (0.3, 0.2, 1.0), r)
    assert chk.passed


def test_mean_value_unknown_function():
    with pytest.raises(KeyError):
        iq.mean_value_bound_check("bessel_j", (0, 0, 1), 0.2)


def test_rhs_branches():
    a = iq.rhs_constants_from(1.0, 1.0)
    assert a.branch == "systole" and a.main == pytest.approx(10 * math.pi)
    b = iq.rhs_constants_from(100.0, 3.0)
    assert b.branch == "diameter" and b.main == pytest.approx(4.86 * math.pi * math.sqrt(5.5))
    assert b.linf == pytest.approx(2.43 * math.sqrt(5.5))
    c = iq.rhs_constants_from(0.25, closed=True)
    assert (c.branch, c.main, c.linf) == ("closed", pytest.approx(20 * math.pi), pytest.approx(10.0))
    with pytest.raises(ValueError):
        iq.rhs_constants_from(0.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(s=st.floats(0.01, 10), t=st.floats(1.0, 3.0), d=st.floats(0.1, 5), e=st.floats(1.0, 3.0))
def test_rhs_monotone(s, t, d, e):
    base = iq.rhs_constants_from(s, d).main
    assert iq.rhs_constants_from(s * t, d).main <= base + 1e-12
    assert iq.rhs_constants_from(s, d * e).main >= base - 1e-12


def test_rhs_for_s789(s789):
    c = iq.rhs_constants(s789)
    assert c.branch == "systole"
    assert c.main == pytest.approx(10 * math.pi / math.sqrt(s789.systole))


def test_rhs_closed_needs_injectivity_radius():
    with pytest.raises(ValueError, match="injectivity radius"):
        iq.rhs_constants(type("Closed", (), {"cusps": []})())


RHS = iq.rhs_constants_from(1.0, 1.0)


def test_zero_class_skipped():
    (e,) = iq.main_inequality_report(5.0, RHS, [ClassRecord((0,), 0.0, "exact_zero", 0.0)])
    assert e.skipped and e.violated == []


def test_missing_l2():
    with pytest.raises(ValueError, match="missing L2"):
        iq.main_inequality_report(5.0, RHS, [ClassRecord((1,), 2.0, "ingested", float("nan"))])


def test_control_case_is_flagged():
    # unit flat torus: Th = 0 and L2 = 1 put the class above the upper bound 0
    rec = ClassRecord((0, 1, 0), 0.0, "ingested", 1.0, l1=1.0, l1_min=1.0, linf=1.0)
    (e,) = iq.main_inequality_report(1.0, iq.rhs_constants_from(0.5, closed=True), [rec], hyperbolic=False)
    assert e.violated == ["right"]
    assert e.control_case == "non-hyperbolic control case"
    assert e.chain_lower and e.chain_upper


def test_upper_bound_provenance_skips_chain():
    rec = ClassRecord((1,), 2.0, "upper_bound", 4.0, l1_min=9.0, linf=3.0)
    (e,) = iq.main_inequality_report(5.0, RHS, [rec])
    assert e.chain_lower is None and e.flux_bound is None
    assert e.chain_note.startswith("skipped")


@settings(max_examples=200, deadline=None)
@given(
    vol=st.floats(0.5, 50), th=st.floats(0.1, 20), l2=st.floats(0.01, 50), l1=st.floats(0.01, 200),
)
def test_chain_implies_left_bound(vol, th, l2, l1):
    (e,) = iq.main_inequality_report(vol, RHS, [ClassRecord((1,), th, "ingested", l2, l1_min=l1)])
    if e.chain_lower and e.chain_upper:
        assert e.left_slack >= -4 * iq.L1_RTOL * e.left_bound


def test_strictness_uses_the_budget():
    rec = ClassRecord((1,), 2.0, "ingested", 3.0, error_budget=0.5)
    (e,) = iq.main_inequality_report(5.0, RHS, [rec])
    slack = 3.0 - 2 * math.pi / math.sqrt(5.0)
    assert e.left_slack == pytest.approx(slack)
    assert e.left_strict == (slack > 0.5)


def test_D_rank_one():
    d = iq.functionals_DiDs(4.0, [[9.0]], norm=lambda x: 2 * abs(x[0]))
    assert d.method == "single ray"
    assert d.Di == d.Ds == pytest.approx(math.pi / 2 * 2 / 3)


def test_D_rank_one_with_ball_agrees():
    d = iq.functionals_DiDs(4.0, [[9.0]], ball=[[0.5], [-0.5]])
    assert d.Di == pytest.approx(math.pi / 2 * 2 / 3)
    assert d.Ds == pytest.approx(d.Di)


def test_D_scaling_with_the_gram():
    G = np.array([[2.0, 0.3], [0.3, 1.0]])
    hexagon = [[1, 0], [0, 1], [-1, 1], [-1, 0], [0, -1], [1, -1]]
    a = iq.functionals_DiDs(3.0, G, ball=hexagon)
    b = iq.functionals_DiDs(3.0, 4 * G, ball=hexagon)
    assert (b.Di, b.Ds) == (pytest.approx(a.Di / 2), pytest.approx(a.Ds / 2))


def test_D_ball_against_sampling():
    from hypnorms.cohomology import ball_gauge

    G = np.array([[2.0, 0.3], [0.3, 1.0]])
    hexagon = [[1, 0], [0, 1], [-1, 1], [-1, 0], [0, -1], [1, -1]]
    exact = iq.functionals_DiDs(3.0, G, ball=hexagon)
    sampled = iq.functionals_DiDs(3.0, G, norm=lambda x: ball_gauge(hexagon, x), samples=20000)
    assert sampled.Di >= exact.Di - 1e-12 and sampled.Ds <= exact.Ds + 1e-12
    # the gauge has kinks at the extremes, so sampling converges to first order
    assert sampled.Di == pytest.approx(exact.Di, rel=2 * math.pi / 20000)
    assert sampled.Ds == pytest.approx(exact.Ds, rel=2 * math.pi / 20000)
    x = exact.argmin
    assert x @ G @ x == pytest.approx(1.0)


def test_D_errors():
    with pytest.raises(ValueError, match="no L2 harmonic forms"):
        iq.functionals_DiDs(3.0, np.zeros((0, 0)))
    with pytest.raises(ValueError, match="required"):
        iq.functionals_DiDs(3.0, np.eye(2))


def test_sharpness_cases():
    assert iq.sharpness_diagnostics(0.4, 2.0, "upper_bound", 9.0).sandwich == "inconclusive"
    assert iq.sharpness_diagnostics(0.0, 0.0, "ingested", 1.0).sandwich == "inconclusive"
    s = iq.sharpness_diagnostics(0.4, 2.0, "ingested", 8.5)
    assert s.sandwich == "inside" and s.l1_over_2pi_th == pytest.approx(8.5 / (4 * math.pi))
    assert s.varying_length and not s.constant_length
    assert iq.sharpness_diagnostics(0.4, 2.0, "ingested", 5.0).sandwich == "outside"


def test_cover_scaling_identity():
    # an L2 ratio of sqrt(d) with Th and vol scaling by d leaves the D quotient at 1
    c = iq.cover_scaling_check(2, [[0], [1]], (1,), 4.0, 4.0 * math.sqrt(2), 5.0, 10.0, 2.0, 4.0)
    assert c.cover_coords == (0, 1)
    assert c.l2_ratio_over_sqrt_degree == pytest.approx(1.0)
    assert c.thurston_ratio == 2.0
    assert c.d_quotient_ratio == pytest.approx(1.0)


def test_cover_scaling_needs_matrix():
    with pytest.raises(ValueError, match="correspondence"):
        iq.cover_scaling_check(2, None, (1,), 1.0, 1.0, 1.0, 2.0)


@settings(max_examples=100, deadline=None)
@given(g=st.floats(0.01, 100), vol=st.floats(0.5, 50))
def test_D_rank_one_min_equals_max(g, vol):
    d = iq.functionals_DiDs(vol, [[g]], ball=[[0.5], [-0.5]])
    assert d.Di == d.Ds
