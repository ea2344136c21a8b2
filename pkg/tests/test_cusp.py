import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypnorms import cusp as cu
from hypnorms import hodge as hd
from hypnorms import mesh as ms
from hypnorms.manifold_io import CuspData


def brute_spectrum(xi, eta, count, R=6):
    """Smallest nonzero 2 pi |w| over the dual lattice by enumeration."""
    B = np.array([[xi.real, eta.real], [xi.imag, eta.imag]])
    D = np.linalg.inv(B)  # rows: dual basis
    w1, w2 = complex(*D[0]), complex(*D[1])
    vals = sorted(2 * math.pi * abs(m * w1 + n * w2) for m in range(-R, R + 1) for n in range(-R, R + 1) if (m, n) != (0, 0))
    return vals[:count]


@pytest.mark.parametrize("xi,eta", [(1, 1j), (2, 2j), (1, complex(0.5, math.sqrt(3) / 2)), (1.3, complex(0.4, 2.1))])
def test_spectrum_against_enumeration(xi, eta):
    C = CuspData.from_translations(complex(xi), complex(eta))
    got = [lam for _, lam in cu.torus_spectrum(C, 10)]
    assert got == pytest.approx(brute_spectrum(complex(xi), complex(eta), 10), rel=1e-12)


def test_square_torus_first_frequency():
    lams = cu.torus_spectrum(CuspData.from_translations(1, 1j), 4)
    assert all(lam == pytest.approx(2 * math.pi) for _, lam in lams)
    with pytest.raises(ValueError):
        cu.torus_spectrum(CuspData.from_translations(1, 1j), 0)


@pytest.mark.parametrize("x", [0.05, 0.7, 2.0, 9.5])
def test_bessel_against_mpmath(x):
    for order in (0, 1):
        assert cu.bessel_k(order, x) == pytest.approx(float(mpmath.besselk(order, x)), rel=1e-13)


def test_bessel_errors():
    with pytest.raises(ValueError, match="order"):
        cu.bessel_k(2, 1.0)
    with pytest.raises(ValueError, match="x > 0"):
        cu.bessel_k(0, [1.0, 0.0])


def test_bessel_identity():
    assert cu.bessel_identity_residuals(np.linspace(0.1, 10, 100)).max() < 1e-8


@pytest.mark.parametrize("w", [1 + 0j, 1j, complex(1, 1), complex(2, -1)])
def test_modes_are_harmonic(w):
    rng = np.random.default_rng(7)
    x, y, z = rng.uniform(0, 1, 20), rng.uniform(0, 1, 20), rng.uniform(0.3, 1.5, 20)
    f = cu.mode(w, 0.8 - 0.3j)
    scale = np.abs(f(x, y, z)).max()
    assert np.abs(cu.laplace_beltrami_fd(f, x, y, z, 1e-4)).max() < 1e-5 * scale


def test_laplacian_fd_converges_on_a_power():
    # Delta z^3 = 3 z^3 in the hyperbolic metric
    f = lambda x, y, z: np.asarray(z) ** 3 + 0 * np.asarray(x)  # noqa: E731
    z = np.array([0.5, 1.0, 2.0])
    errs = [np.abs(cu.laplace_beltrami_fd(f, 0 * z, 0 * z, z, h) - 3 * z**3).max() for h in (1e-2, 5e-3)]
    assert errs[1] < errs[0] / 3


def test_square_of_a_mode_is_subharmonic():
    f = cu.mode(complex(1, 0), 1.0)
    g = lambda x, y, z: f(x, y, z) ** 2  # noqa: E731
    rng = np.random.default_rng(2)
    x, y, z = rng.uniform(0, 1, 30), rng.uniform(0, 1, 30), rng.uniform(0.3, 1.5, 30)
    assert np.all(cu.laplace_beltrami_fd(g, x, y, z, 1e-4) > -1e-6)


def test_modes_have_zero_torus_mean():
    f = cu.mode(complex(1, 2), 1.3 + 0.4j)
    s = np.linspace(0, 1, 64, endpoint=False)
    X, Y = np.meshgrid(s, s)
    for z in (0.5, 1.0):
        assert abs(f(X, Y, z + 0 * X).mean()) < 1e-12


@pytest.fixture(scope="module")
def model_mesh():
    return ms.model_cusp_mesh(1, 1j, 1.0, 3.0, n=12, level=1, spacing="uniform")


def test_expansion_round_trip(model_mesh):
    m = model_mesh
    truth = cu.mode(1 + 0j, 0.7 - 0.2j)
    f = truth(m.vertex_xy.real, m.vertex_xy.imag, m.vertex_z)
    e = cu.cusp_expand(hd.coboundaries(m)[0] @ f, m, 0)
    assert len(e.terms) == 1
    assert e.lambda1 == pytest.approx(2 * math.pi)
    assert e.fitted_rate == pytest.approx(2 * math.pi, rel=1e-6)
    p = np.random.default_rng(5).uniform(0, 1, (10, 2))
    z = np.linspace(1.2, 2.8, 10)
    assert np.allclose(e(p[:, 0], p[:, 1], z), truth(p[:, 0], p[:, 1], z), atol=1e-9)


def test_expansion_errors(model_mesh):
    zero = np.zeros(model_mesh.n_edges)
    with pytest.raises(ValueError, match="insufficient cross-sections"):
        cu.cusp_expand(zero, model_mesh, 0, heights=list(model_mesh.layer_heights[0][:2]))
    with pytest.raises(ValueError, match="not cross-sections"):
        cu.cusp_expand(zero, model_mesh, 0, heights=[1.01, 1.5, 2.0])
    assert cu.cusp_expand(zero, model_mesh, 0).empty


def _single(c=1.0, base=1.0):
    return cu.CuspExpansion(0, [(1 + 0j, c)], base, 1.0, (1 + 0j, 1j))


def tail_oracle(c, lam, T, area=1.0):
    """Independent mpmath quadrature of the torus-averaged energy of one mode."""
    g = lambda z: z * mpmath.besselk(1, lam * z)  # noqa: E731
    gp = lambda z: -lam * z * mpmath.besselk(0, lam * z)  # noqa: E731
    dens = lambda z: (lam**2 * g(z) ** 2 + gp(z) ** 2) / (2 * z)  # noqa: E731
    return math.sqrt(area * abs(c) ** 2 * float(mpmath.quad(dens, [T, mpmath.inf])))


@pytest.mark.parametrize("T", [1.0, 1.7, 3.0])
def test_tail_norm_matches_quadrature(T):
    l2, linf = cu.tail_norms(_single(0.6), T)
    assert l2 == pytest.approx(tail_oracle(0.6, 2 * math.pi, T), rel=1e-9)
    assert linf > 0


def test_tail_norm_errors_and_empty():
    with pytest.raises(ValueError, match="below the base"):
        cu.tail_norms(_single(), 0.5)
    assert cu.tail_norms(cu.CuspExpansion(0, [], 1.0, 1.0, (1 + 0j, 1j)), 2.0) == (0.0, 0.0)


def test_retraction_errors_shrink():
    e = _single(1.0)
    errs = [cu.retraction_compactify(e, i).error for i in (1, 2, 4, 8)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    # the modification is at least the tail it removes
    r = cu.retraction_compactify(e, 2)
    assert r.error >= 0.5 * cu.tail_norms(e, r.support_start)[0]
    with pytest.raises(ValueError, match="support index"):
        cu.retraction_compactify(e, 0)


def test_cutoff_shape():
    u = np.linspace(0, 1.2, 121)
    c = cu.cutoff(u)
    assert np.all(c[u <= 0.5] == 1) and np.all(c[u >= 1] == 0)
    assert np.all(np.diff(c) <= 0)
    assert np.abs(cu.cutoff_derivative(u)).max() <= 3 + 1e-12


@settings(max_examples=30, deadline=None)
@given(p=st.floats(0.2, 4.0), a=st.floats(0.1, 10.0))
def test_power_law_recovers_exponent(p, a):
    idx = [1, 2, 4, 8, 16]
    assert cu.power_law_exponent(idx, [a * i**-p for i in idx]) == pytest.approx(p, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(1.5, 60.0))
def test_torus_model_above_cauchy_schwarz(c):
    # 1 = int f/z <= sqrt(int f^2/z^3) sqrt(int z dz) over [c - 1, c + 1]
    assert cu.torus_model_norm(c) >= 1 / (2 * c) * (1 - 1e-10)


def test_torus_model_ratio_tends_to_three_eighths():
    r = [cu.torus_model_norm(c) / math.log((c + 1) / (c - 1)) for c in (20.0, 80.0, 320.0)]
    assert abs(r[2] - 0.375) < abs(r[0] - 0.375)
    assert r[2] == pytest.approx(0.375, rel=1e-3)


def test_model_errors():
    with pytest.raises(ValueError, match="c > 1"):
        cu.raised_cosine_bump(1.0)
    with pytest.raises(ValueError, match="unknown model"):
        cu.model_peripheral_norms("sphere", [1.0])


def test_blowup_unit_slope():
    b = cu.blowup_model()
    assert b.slope == pytest.approx(1.0, abs=0.02)
    assert np.all(np.diff(b.partial_norms) > 0)
