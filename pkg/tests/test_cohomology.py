from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypnorms import cohomology as co
from hypnorms import mesh as ms
from hypnorms.manifold_io import parse_manifold


@pytest.fixture(scope="module")
def flat_mesh1(flat):
    return ms.mesh_from_file(flat[0], 1)


def test_flat_torus_betti(flat):
    mf, basis = flat
    H = basis.homology
    assert (H.b1, H.b2, basis.rank) == (3, 3, 3)
    assert H.torsion == []


def test_homology_mesh_direct(flat):
    C = flat[0].complex
    assert co.homology_mesh(C.n_vertices, C.edges, C.face_edges, C.tet_faces).b1 == 3


def test_empty_complex():
    e = np.zeros((0, 2), dtype=int)
    with pytest.raises(ValueError, match="empty complex"):
        co.homology_mesh(0, e, np.zeros((0, 3), dtype=int), np.zeros((0, 4), dtype=int))


@pytest.mark.parametrize(
    "name,b1,rank",
    [("m004", 1, 0), ("m203", 2, 0), ("s789", 2, 1), ("s789_cover2", 3, 1)],
)
def test_image_rank(data_dir, name, b1, rank):
    # peripheral classes account for b1 - rank: one per cusp here
    B = co.image_subspace(parse_manifold(data_dir / f"{name}.tri"))
    assert (B.b1, B.rank) == (b1, rank)


def test_representatives_have_the_right_periods(s789_basis):
    for i, rep in enumerate(s789_basis.reps):
        coords = s789_basis.coords_of(rep)
        assert coords == [Fraction(int(i == j)) for j in range(s789_basis.rank)]


def test_listed_classes(flat_classes):
    assert flat_classes == [(0, 1, 0), (0, 1, 1), (1, 1, 1)]


@pytest.mark.parametrize("coords", [(0, 1, 0), (1, 1, 1), (1, 0, 0)])
def test_flat_torus_dual_surface_is_one_torus(flat, flat_mesh1, coords):
    S = co.dual_surface(co.CohomologyClass.of(coords), flat_mesh1, flat[1])
    assert S.closed
    assert (S.components, S.chi, S.chi_minus) == (1, 0, 0)


def test_s789_dual_surface(s789_mesh0, s789_basis):
    S = co.dual_surface(co.CohomologyClass.of([1]), s789_mesh0, s789_basis)
    assert S.closed and S.chi_minus == 2
    S2 = co.dual_surface(co.CohomologyClass.of([2]), s789_mesh0, s789_basis)
    assert (S2.chi_minus, S2.components, S2.multiplicity) == (4, 2, 2)


def test_dual_surface_errors(s789_mesh0, s789_basis):
    with pytest.raises(ValueError, match="nontrivial class required"):
        co.dual_surface(co.CohomologyClass.of([0]), s789_mesh0, s789_basis)
    with pytest.raises(ValueError, match="class not integral"):
        co.dual_surface(co.CohomologyClass.of([Fraction(1, 2)]), s789_mesh0, s789_basis)


def test_thurston_norm_ingested(s789):
    assert co.thurston_norm(co.CohomologyClass.of([1]), s789) == co.NormValue(2.0, "ingested")
    assert float(co.thurston_norm(co.CohomologyClass.of([-3]), s789)) == 6.0
    assert co.thurston_norm(co.CohomologyClass.of([0]), s789).provenance == "exact_zero"


def test_thurston_upper_bound_matches_ingested(s789, s789_mesh0, s789_basis):
    # same manifold without the ingested ball
    stripped = type("Src", (), {"thurston_ball": None, "class_norms": {}})()
    nv = co.thurston_norm(co.CohomologyClass.of([1]), stripped, s789_mesh0, s789_basis)
    assert nv.provenance == "upper_bound"
    assert nv.value >= float(co.thurston_norm(co.CohomologyClass.of([1]), s789))


def test_flat_torus_norm_vanishes_on_the_span(flat, flat_mesh1):
    mf, basis = flat
    for c in [(1, 0, 0), (2, -1, 5), (Fraction(1, 3), 0, 1)]:
        assert co.thurston_norm(co.CohomologyClass.of(c), mf, flat_mesh1, basis).value == 0.0


def test_thurston_norm_needs_data(s789_basis):
    bare = type("Src", (), {"thurston_ball": None, "class_norms": {}})()
    with pytest.raises(ValueError, match="no ingested norm data"):
        co.thurston_norm(co.CohomologyClass.of([1]), bare)


HEXAGON = [[1, 0], [0, 1], [-1, 1], [-1, 0], [0, -1], [1, -1]]
vec = st.tuples(st.floats(-5, 5), st.floats(-5, 5))


@settings(max_examples=80, deadline=None)
@given(x=vec, y=vec, t=st.floats(-4, 4))
def test_ball_gauge_is_a_norm(x, y, t):
    g = lambda v: co.ball_gauge(HEXAGON, v)
    assert g(np.multiply(t, x)) == pytest.approx(abs(t) * g(x), abs=1e-9)
    assert g(np.add(x, y)) <= g(x) + g(y) + 1e-9


def test_ball_gauge_on_vertices():
    for v in HEXAGON:
        assert co.ball_gauge(HEXAGON, v) == pytest.approx(1.0)
    D = co.ball_dual_vertices(HEXAGON)
    for x in [(0.3, 2.0), (-1.5, 0.2)]:
        assert co.ball_gauge(HEXAGON, x) == pytest.approx(float(np.max(D @ np.array(x))))


def test_primitive_decomposition():
    m, p = co.CohomologyClass.of([4, -6]).primitive()
    assert m == 2 and p.coords == (2, -3)
    with pytest.raises(ValueError):
        co.CohomologyClass.of([0, 0]).primitive()
