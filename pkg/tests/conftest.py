from __future__ import annotations

from pathlib import Path

import pytest

from hypnorms import cohomology as co
from hypnorms import mesh as ms
from hypnorms.manifold_io import parse_manifold

DATA = Path(__file__).resolve().parents[1] / "src" / "hypnorms" / "data"

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def s789():
    return parse_manifold(DATA / "s789.tri")


@pytest.fixture(scope="session")
def s789_basis(s789):
    return co.image_subspace(s789)


@pytest.fixture(scope="session")
def s789_mesh0(s789):
    return ms.build_metric_mesh(s789, refinement=0)


@pytest.fixture(scope="session")
def flat():
    """(mesh file, image basis on the base complex)."""
    mf = ms.parse_mesh_text(ms.flat_torus_text())
    C = mf.complex
    return mf, co.image_subspace_mesh(C.n_vertices, C.edges, C.face_edges, C.tet_faces, C.tet_edges)


@pytest.fixture(scope="session")
def flat_classes(flat):
    """Image coordinates of dx, dy, dz."""
    mf, basis = flat
    return co.listed_classes(mf, basis)
