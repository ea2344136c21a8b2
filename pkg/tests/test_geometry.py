import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from hypnorms import geometry as geo
from hypnorms import lattice
from hypnorms.manifold_io import CuspData


def lob_oracle(theta):
    val, _ = integrate.quad(lambda t: -math.log(abs(2 * math.sin(t))), 0, theta, limit=200, epsabs=1e-14)
    return val


def brute_force_diameter(xi, eta, n=241):
    """Largest distance to the nearest lattice point over a grid of the fundamental domain."""
    pts = lattice.lattice_points(xi, eta, 4 * (abs(xi) + abs(eta)))
    s, t = np.meshgrid(np.linspace(0, 1, n), np.linspace(0, 1, n))
    q = (s * xi + t * eta).ravel()
    return float(np.max(np.min(np.abs(q[:, None] - pts[None, :]), axis=1)))


def test_lobachevsky_matches_quadrature():
    for th in [0.1, 0.5, 1.0, math.pi / 3, 1.4, 2.0, 2.9]:
        assert geo.lobachevsky(th) == pytest.approx(lob_oracle(th), abs=1e-10)


def test_regular_ideal_tetrahedron_volume():
    v = geo.ideal_tet_volume(complex(0.5, math.sqrt(3) / 2))
    assert v == pytest.approx(3 * lob_oracle(math.pi / 3), abs=1e-10)
    assert v == pytest.approx(1.0149416064, abs=1e-9)


def test_two_regular_tetrahedra(data_dir):
    from hypnorms.manifold_io import parse_manifold

    M = parse_manifold(data_dir / "m004.tri")
    assert geo.volume(M) == pytest.approx(2.0298832128, abs=1e-9)


def test_volume_reorder_invariant(s789):
    perm = np.random.default_rng(1).permutation(s789.n_tets)
    shuffled = SimpleNamespace(shapes=s789.shapes[perm])
    assert geo.volume(shuffled) == pytest.approx(geo.volume(s789), abs=1e-12)


def test_degenerate_shape_rejected():
    with pytest.raises(ValueError):
        geo.ideal_tet_volume(complex(0.5, 0.0))


def test_cusp_geometry_examples():
    sq = CuspData.from_translations(1, 1j)
    assert (sq.waist, sq.area) == (pytest.approx(1.0), pytest.approx(1.0))
    hx = CuspData.from_translations(1, complex(0.5, math.sqrt(3) / 2))
    assert hx.waist == pytest.approx(1.0)
    assert hx.area == pytest.approx(math.sqrt(3) / 2)
    big = CuspData.from_translations(3, 3j)
    assert big.diameter == pytest.approx(3 * math.sqrt(2) / 2, rel=1e-12)


@pytest.mark.parametrize("xi,eta", [(1, 1j), (3, 3j), (1, complex(0.5, 0.866)), (1.3, complex(0.4, 2.1))])
def test_diameter_against_brute_force(xi, eta):
    d = lattice.torus_diameter(complex(xi), complex(eta))
    assert d == pytest.approx(brute_force_diameter(complex(xi), complex(eta)), rel=2e-3)


@settings(max_examples=60, deadline=None)
@given(
    a=st.floats(0.3, 3.0),
    bx=st.floats(-2.0, 2.0),
    by=st.floats(0.3, 3.0),
)
def test_flat_lattice_bounds(a, bx, by):
    xi, eta = complex(a, 0), complex(bx, by)
    w = lattice.waist(xi, eta)
    d = lattice.torus_diameter(xi, eta)
    A = lattice.lattice_area(xi, eta)
    assert w <= 2 * d + 1e-12
    assert w * w <= 4 / 3 * A + 1e-12


def _cusped(cusps, tau0):
    return SimpleNamespace(cusps=[CuspData.from_translations(*c) for c in cusps], tau0=tau0)


def test_truncation_constants_examples():
    tc = geo.truncation_constants(_cusped([(1, 1j)], 0.2))
    assert tc.L0 == 2.0
    assert tc.tau == math.log(6.0)
    tc = geo.truncation_constants(_cusped([(1, 1j), (2, 2j)], 1.0))
    assert tc.L0 == 4.0
    assert tc.tau == math.log(12.0)


def test_truncation_constants_invariants(s789):
    tc = geo.truncation_constants(s789)
    assert tc.L0 >= math.exp(tc.tau0)
    assert all(tc.L0 >= abs(c.xi) + abs(c.eta) for c in s789.cusps)
    assert tc.tau == math.log(3 * tc.L0)


def test_truncation_constants_closed():
    with pytest.raises(ValueError, match="closed manifold has no truncation constants"):
        geo.truncation_constants(SimpleNamespace(cusps=[], tau0=0.0))


def test_thick_thin_flags():
    assert geo.thick_thin_constants(SimpleNamespace(systole=0.5))["mu"] == 0.29
    assert geo.thick_thin_constants(SimpleNamespace(systole=0.5))["no_thin_tubes"] is True
    assert geo.thick_thin_constants(SimpleNamespace(systole=0.1))["no_thin_tubes"] is False
