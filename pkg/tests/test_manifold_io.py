import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from hypnorms import intlinalg as il
from hypnorms.manifold_io import (
    ParseError,
    ValidationError,
    ValidationWarning,
    edge_equation_residual,
    format_manifold,
    parse_manifold,
    parse_manifold_text,
    parse_model_cusp,
)

GIESEKING = """name gieseking
tetrahedra 1
gluings
0 0 0 1320
0 1 0 3021
0 2 0 2130
0 3 0 3102
shapes
0.5 0.8660254037844386
cusps
1.0 0.0 0.0 1.7320508075688772
systole 1.0
"""


def test_single_tetrahedron_self_glued():
    M = parse_manifold_text(GIESEKING)
    assert M.n_cusps == 1
    assert edge_equation_residual(M.targets, M.perms, M.shapes) < 1e-9
    assert not M.oriented


def test_face_glued_twice_names_both_lines():
    text = GIESEKING.replace("0 1 0 3021", "0 0 0 3021")
    with pytest.raises(ValidationError, match=r"glued twice: line 4 and line 5"):
        parse_manifold_text(text)


def test_systole_required():
    text = GIESEKING.replace("systole 1.0\n", "")
    with pytest.raises(ParseError, match="systole required"):
        parse_manifold_text(text)


def test_parse_error_reports_line():
    text = GIESEKING.replace("0.5 0.8660254037844386", "0.5 abc")
    with pytest.raises(ParseError) as exc:
        parse_manifold_text(text)
    assert exc.value.line == 9


def test_nonpositive_shape_rejected():
    with pytest.raises(ValidationError):
        parse_manifold_text(GIESEKING.replace("0.5 0.8660254037844386", "0.5 -0.8660254037844386"))


def test_edge_equations_checked(data_dir):
    text = (data_dir / "m004.tri").read_text().replace("0.5 0.8660254037844385", "0.5 0.9")
    with pytest.raises(ValidationError, match="edge equations"):
        parse_manifold_text(text)


@pytest.mark.parametrize("name", ["m004", "m203", "s789", "s789_cover2"])
def test_fixture_round_trip(data_dir, name):
    M = parse_manifold(data_dir / f"{name}.tri")
    assert parse_manifold_text(format_manifold(M)) == M
    assert M.edge_residual < 1e-9


def test_optional_fields_preserved(data_dir):
    C = parse_manifold(data_dir / "s789_cover2.tri")
    assert C.cover_of.base == "s789" and C.cover_of.degree == 2
    assert C.class_norms == {(1,): 2.0}
    assert np.array_equal(C.thurston_ball, np.array([[0.5], [-0.5]]))


def _cusp_file(tmp_path, xi, eta, base=1.0, top=None):
    lines = [f"xi {xi.real} {xi.imag}", f"eta {eta.real} {eta.imag}", f"base_height {base}"]
    if top is not None:
        lines.append(f"top_height {top}")
    p = tmp_path / "c.cusp"
    p.write_text("\n".join(lines) + "\n")
    return p


def test_model_cusp_square(tmp_path, data_dir):
    mc = parse_model_cusp(data_dir / "square_cusp.cusp")
    assert mc.cusp.area == pytest.approx(1.0)
    assert mc.cusp.diameter == pytest.approx(math.sqrt(2) / 2)
    assert (mc.base_height, mc.top_height) == (1.0, 4.0)


def test_model_cusp_rectangle(tmp_path):
    mc = parse_model_cusp(_cusp_file(tmp_path, 2 + 0j, 2j))
    assert mc.cusp.area == pytest.approx(4.0)
    assert mc.cusp.waist == pytest.approx(2.0)


def test_model_cusp_collinear(tmp_path):
    with pytest.raises(ValidationError, match="collinear"):
        parse_model_cusp(_cusp_file(tmp_path, 1 + 0j, 1 + 0j))


def test_short_waist_is_a_warning(tmp_path):
    with pytest.warns(ValidationWarning):
        parse_model_cusp(_cusp_file(tmp_path, 0.5 + 0j, 2j))


# integer linear algebra


def test_smith_diagonal_known():
    A = [[2, 4, 4], [-6, 6, 12], [10, -4, -16]]
    assert il.smith(A, 3, 3).diagonal == [2, 6, 12]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.integers(-5, 5), min_size=4, max_size=4), min_size=1, max_size=4))
def test_smith_is_a_unimodular_decomposition(rows):
    sf = il.smith(rows, len(rows), 4)
    U, V, A = sympy.Matrix(sf.U), sympy.Matrix(sf.V), sympy.Matrix(rows)
    assert abs(U.det()) == 1 and abs(V.det()) == 1
    assert U * A * V == sympy.Matrix(sf.S)
    for x in il.integer_kernel(rows, len(rows), 4):
        assert all(v == 0 for v in A * sympy.Matrix(x))
    assert len(il.integer_kernel(rows, len(rows), 4)) == 4 - A.rank()


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.integers(-6, 6), min_size=3, max_size=3), min_size=1, max_size=4))
def test_hermite_rows_span_and_transform(rows):
    H, T = il.hermite_rows(rows, 3)
    assert sympy.Matrix(T) * sympy.Matrix(rows) == sympy.Matrix(H) if H else True
    assert len(H) == sympy.Matrix(rows).rank()
    for r in rows:
        c = il.solve_in_lattice(H, r)
        assert c is not None and all(x.denominator == 1 for x in c)
