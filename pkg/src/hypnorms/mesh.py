"""Metric meshes: ordered Delta-complexes with piecewise-Euclidean edge lengths.

Three sources are supported:

* ideal triangulations, truncated at a horotorus height and meshed as a
  compact core (flag subdivision of each truncated tetrahedron, refined
  edgewise) plus a graded neck over every cusp torus;
* mesh files (closed Delta-complexes such as the flat 3-torus) with integer
  cocycles attached;
* model cusps T^2 x [base, top] in upper half-space coordinates.

Every tetrahedron stores its four vertices in increasing local order, six edge
ids (01 02 03 12 13 23) and four face ids (opposite local vertex 0..3).  Edges
and faces are oriented by that order, which the gluings respect, so loops and
multiple edges are allowed.  Integer weights `omega` express each mesh vertex
as a rational combination of the vertices of its parent cell (denominator
`denom`), which is how integral cocycles of the parent complex are pulled back.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .geometry import develop_cusps, truncation_constants, volume
from .manifold_io import ParseError, TriangulatedManifold, ValidationError

LOCAL_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
EDGE_IDX = {e: k for k, e in enumerate(LOCAL_EDGES)}
FACE_VERTS = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))
CORNERS = tuple((i, j) for i in range(4) for j in range(4) if i != j)
SLOT = {c: s for s, c in enumerate(CORNERS)}

DEFAULT_RHO = 1.25
MAX_REFINEMENT = 6
MIN_Z0 = 1.2
Z0_FACTOR = 2.0


class MeshError(ValueError):
    def __init__(self, message: str, cell: Optional[int] = None):
        super().__init__(message if cell is None else f"{message} (cell {cell})")
        self.cell = cell


# ----------------------------------------------------------------------------
# Delta-complex assembly


class _Builder:
    """Assigns ids to keyed cells as tetrahedra are added."""

    def __init__(self):
        self.vid: dict = {}
        self.eid: dict = {}
        self.fid: dict = {}
        self.edges: list[tuple[int, int]] = []
        self.faces: list[tuple[int, int, int]] = []
        self.face_edges: list[tuple[int, int, int]] = []
        self.lengths: list[float] = []
        self.tets: list[tuple[int, ...]] = []
        self.tet_edges: list[tuple[int, ...]] = []
        self.tet_faces: list[tuple[int, ...]] = []

    def vertex(self, key) -> int:
        v = self.vid.get(key)
        if v is None:
            v = self.vid[key] = len(self.vid)
        return v

    def add_tet(self, vkeys, ekeys, fkeys, length: Optional[Callable[[int, int], float]] = None) -> int:
        vs = [self.vertex(k) for k in vkeys]
        es = []
        for (i, j), key in zip(LOCAL_EDGES, ekeys):
            e = self.eid.get(key)
            if e is None:
                e = self.eid[key] = len(self.edges)
                self.edges.append((vs[i], vs[j]))
                self.lengths.append(length(i, j) if length else float("nan"))
            es.append(e)
        fs = []
        for l, key in enumerate(fkeys):
            f = self.fid.get(key)
            if f is None:
                f = self.fid[key] = len(self.faces)
                a, b, c = FACE_VERTS[l]
                self.faces.append((vs[a], vs[b], vs[c]))
                self.face_edges.append((es[EDGE_IDX[(a, b)]], es[EDGE_IDX[(a, c)]], es[EDGE_IDX[(b, c)]]))
            fs.append(f)
        self.tets.append(tuple(vs))
        self.tet_edges.append(tuple(es))
        self.tet_faces.append(tuple(fs))
        return len(self.tets) - 1


@dataclass
class DeltaComplex:
    tets: np.ndarray
    tet_edges: np.ndarray
    tet_faces: np.ndarray
    edges: np.ndarray
    faces: np.ndarray
    face_edges: np.ndarray
    n_vertices: int
    desc: np.ndarray  # (T, 4, D) integer coordinates of tet vertices in the parent cell
    parent: np.ndarray

    @classmethod
    def from_builder(cls, b: _Builder, desc, parent) -> "DeltaComplex":
        return cls(
            tets=np.array(b.tets, dtype=np.int64).reshape(-1, 4),
            tet_edges=np.array(b.tet_edges, dtype=np.int64).reshape(-1, 6),
            tet_faces=np.array(b.tet_faces, dtype=np.int64).reshape(-1, 4),
            edges=np.array(b.edges, dtype=np.int64).reshape(-1, 2),
            faces=np.array(b.faces, dtype=np.int64).reshape(-1, 3),
            face_edges=np.array(b.face_edges, dtype=np.int64).reshape(-1, 3),
            n_vertices=len(b.vid),
            desc=np.asarray(desc, dtype=np.int64),
            parent=np.asarray(parent, dtype=np.int64),
        )

    def face_incidence(self) -> np.ndarray:
        return np.bincount(self.tet_faces.ravel(), minlength=len(self.faces))


def kuhn_simplices(k: int) -> list[tuple[tuple[int, int, int, int], ...]]:
    """Edgewise (Freudenthal) subdivision of the ordered 3-simplex into k^3 pieces.

    Points are barycentric integer vectors summing to k; each piece lists its
    vertices in the order that the subdivision of every face inherits.
    """
    out = []

    def inside(c):
        return k >= c[0] >= c[1] >= c[2] >= 0

    def bary(c):
        return (k - c[0], c[0] - c[1], c[1] - c[2], c[2])

    for a in itertools.product(range(k), repeat=3):
        for perm in itertools.permutations(range(3)):
            chain = [list(a)]
            for axis in perm:
                nxt = chain[-1][:]
                nxt[axis] += 1
                chain.append(nxt)
            if all(inside(c) for c in chain):
                out.append(tuple(bary(c) for c in chain))
    assert len(out) == k**3
    return out


def refine(C: DeltaComplex, k: int) -> DeltaComplex:
    """Edgewise subdivision of every tetrahedron at level k, glued consistently."""
    if k < 1:
        raise ValueError("refinement level must be >= 1")
    if k == 1:
        return C
    pieces = kuhn_simplices(k)
    b = _Builder()
    descs, parents = [], []

    def key(t, pts):
        support = sorted({i for n in pts for i in range(4) if n[i]})
        d = len(support)
        if d == 1:
            cell = ("v", int(C.tets[t, support[0]]))
        elif d == 2:
            cell = ("e", int(C.tet_edges[t, EDGE_IDX[tuple(support)]]))
        elif d == 3:
            missing = ({0, 1, 2, 3} - set(support)).pop()
            cell = ("f", int(C.tet_faces[t, missing]))
        else:
            cell = ("t", t)
        return cell, tuple(tuple(n[i] for i in support) for n in pts)

    for t in range(len(C.tets)):
        D = C.desc[t]
        for pts in pieces:
            vkeys = [key(t, [n]) for n in pts]
            ekeys = [key(t, [pts[i], pts[j]]) for i, j in LOCAL_EDGES]
            fkeys = [key(t, [pts[a] for a in FACE_VERTS[l]]) for l in range(4)]
            b.add_tet(vkeys, ekeys, fkeys)
            descs.append(np.array(pts, dtype=np.int64) @ D)
            parents.append(C.parent[t])
    R = DeltaComplex.from_builder(b, descs, parents)
    inc = R.face_incidence()
    base_inc = C.face_incidence()
    if inc.max() > 2 or (base_inc.min() == 2 and inc.min() != 2):
        raise MeshError("refined faces are not glued in pairs")
    return R


# ----------------------------------------------------------------------------
# the mesh


@dataclass
class MetricMesh:
    n_vertices: int
    tets: np.ndarray
    tet_edges: np.ndarray
    tet_faces: np.ndarray
    edges: np.ndarray
    faces: np.ndarray
    face_edges: np.ndarray
    edge_length: np.ndarray
    boundary_faces: np.ndarray  # face ids with a single incident tetrahedron
    boundary_cusp: np.ndarray  # cusp (or model tag) of each boundary face
    boundary_height: np.ndarray
    parent: np.ndarray  # parent cell of each tetrahedron (-1: none)
    omega: np.ndarray  # (T, 4, 4) integer weights of vertices in the parent cell
    denom: int
    kind: str  # "ideal" | "closed" | "model"
    level: int
    vertex_cusp: np.ndarray = field(repr=False, default=None)
    vertex_layer: np.ndarray = field(repr=False, default=None)
    vertex_z: np.ndarray = field(repr=False, default=None)
    vertex_xy: np.ndarray = field(repr=False, default=None)
    cusp_lattices: list = field(default_factory=list)  # (xi, eta) per cusp, in vertex_xy coordinates
    layer_heights: list = field(default_factory=list)  # per cusp, heights of the neck layers
    truncation: Optional[float] = None  # T, with top height e^T
    analytic_volume: Optional[float] = None
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def gram(self) -> np.ndarray:
        """Per-tet Gram matrices of the edge vectors from local vertex 0."""
        if "gram" not in self._cache:
            l2 = self.edge_length[self.tet_edges] ** 2  # (T, 6)
            g = np.empty((self.n_tets, 3, 3))
            for a in range(3):
                g[:, a, a] = l2[:, a]
            for (i, j), k in EDGE_IDX.items():
                if i > 0:
                    g[:, i - 1, j - 1] = g[:, j - 1, i - 1] = 0.5 * (l2[:, i - 1] + l2[:, j - 1] - l2[:, k])
            self._cache["gram"] = g
        return self._cache["gram"]

    def volumes(self) -> np.ndarray:
        if "vol" not in self._cache:
            det = np.linalg.det(self.gram())
            self._cache["vol"] = np.sqrt(np.clip(det, 0, None)) / 6.0
        return self._cache["vol"]

    def total_volume(self) -> float:
        return float(self.volumes().sum())

    def check_cells(self, rtol: float = 1e-12) -> None:
        det = np.linalg.det(self.gram())
        scale = np.max(self.edge_length[self.tet_edges], axis=1) ** 6
        bad = np.nonzero(~(det > rtol * scale))[0]
        if len(bad):
            raise MeshError("degenerate cell: non-positive Cayley-Menger volume", int(bad[0]))

    def boundary_components(self) -> list[np.ndarray]:
        """Vertex sets of the connected components of the boundary."""
        if "bcomp" in self._cache:
            return self._cache["bcomp"]
        parent = {}

        def find(a):
            while parent.setdefault(a, a) != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for f in self.boundary_faces:
            a, b, c = (int(x) for x in self.faces[f])
            for x in (b, c):
                ra, rb = find(a), find(x)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        groups: dict[int, list[int]] = {}
        for v in sorted(parent):
            groups.setdefault(find(v), []).append(v)
        comps = [np.array(groups[r], dtype=np.int64) for r in sorted(groups)]
        self._cache["bcomp"] = comps
        return comps

    def pull_back(self, parent_potentials: np.ndarray) -> np.ndarray:
        """Integer vertex potentials (times denom) of every tet from parent-cell potentials.

        parent_potentials: (n_parent, 4) integers; returns (T, 4) integers.
        """
        P = np.asarray(parent_potentials, dtype=np.int64)[self.parent]
        return np.einsum("tvi,ti->tv", self.omega, P)

    def cochain_from_potentials(self, U: np.ndarray) -> np.ndarray:
        """Edge cochain (U_head - U_tail) / denom from per-tet vertex potentials."""
        out = np.zeros(self.n_edges)
        diff = np.stack([U[:, j] - U[:, i] for i, j in LOCAL_EDGES], axis=1)
        out[self.tet_edges.ravel()] = diff.ravel() / self.denom
        return out


def _finish(b: _Builder, parent, omega, denom, kind, level, **extra) -> MetricMesh:
    C = DeltaComplex.from_builder(b, np.zeros((len(b.tets), 4, 1)), parent)
    inc = C.face_incidence()
    if inc.max() > 2:
        raise MeshError("a face is shared by more than two tetrahedra")
    bfaces = np.nonzero(inc == 1)[0]
    lengths = np.array(b.lengths)
    if np.any(~(lengths > 0)):
        raise MeshError("non-positive edge length", int(np.nonzero(~(lengths > 0))[0][0]))
    mesh = MetricMesh(
        n_vertices=C.n_vertices,
        tets=C.tets,
        tet_edges=C.tet_edges,
        tet_faces=C.tet_faces,
        edges=C.edges,
        faces=C.faces,
        face_edges=C.face_edges,
        edge_length=lengths,
        boundary_faces=bfaces,
        boundary_cusp=np.full(len(bfaces), -1, dtype=np.int64),
        boundary_height=np.full(len(bfaces), np.nan),
        parent=np.asarray(parent, dtype=np.int64),
        omega=np.asarray(omega, dtype=np.int64).reshape(-1, 4, 4),
        denom=denom,
        kind=kind,
        level=level,
        **extra,
    )
    mesh.check_cells()
    return mesh


# ----------------------------------------------------------------------------
# closed meshes from files


@dataclass
class MeshFile:
    name: str
    complex: DeltaComplex
    edge_length: np.ndarray
    cocycles: list[list[int]]
    class_norms: dict
    systole: Optional[float]
    injectivity_radius: Optional[float]


def parse_mesh_text(text: str) -> MeshFile:
    """Read a closed Delta-complex mesh.

    Sections: ``vertices N``; ``edges`` (tail head length); ``faces``
    (e01 e02 e12 edge ids); ``tetrahedra`` (v0 v1 v2 v3 e01 e02 e03 e12 e13 e23
    f0 f1 f2 f3); optional ``cocycles`` (one integer per edge on each line),
    ``class_norms`` (coords : value), ``injectivity_radius``, ``systole``.
    """
    name, n_vertices, inj, sys_ = "mesh", None, None, None
    sections: dict[str, list[tuple[int, list[str]]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        if words[0] in ("edges", "faces", "tetrahedra", "cocycles", "class_norms") and len(words) == 1:
            current = words[0]
            sections[current] = []
        elif words[0] == "name":
            name, current = words[1], None
        elif words[0] == "vertices":
            n_vertices, current = int(words[1]), None
        elif words[0] == "injectivity_radius":
            inj, current = float(words[1]), None
        elif words[0] == "systole":
            sys_, current = float(words[1]), None
        elif current is not None:
            sections[current].append((lineno, words))
        else:
            raise ParseError(f"unexpected line {line!r}", lineno)
    if n_vertices is None:
        raise ParseError("vertices required", None, "vertices")
    for sec in ("edges", "faces", "tetrahedra"):
        if sec not in sections:
            raise ParseError(f"{sec} required", None, sec)
    try:
        edges = np.array([[int(w[0]), int(w[1])] for _, w in sections["edges"]], dtype=np.int64)
        lengths = np.array([float(w[2]) for _, w in sections["edges"]])
        face_edges = np.array([[int(x) for x in w] for _, w in sections["faces"]], dtype=np.int64)
        rows = [[int(x) for x in w] for _, w in sections["tetrahedra"]]
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed mesh entry: {exc}") from None
    if any(len(r) != 14 for r in rows):
        raise ParseError("tetrahedron lines need 4 vertices, 6 edges and 4 faces", None, "tetrahedra")
    R = np.array(rows, dtype=np.int64)
    tets, tet_edges, tet_faces = R[:, :4], R[:, 4:10], R[:, 10:]
    # faces' vertex triples from any incident tetrahedron
    faces = np.zeros((len(face_edges), 3), dtype=np.int64)
    for t in range(len(R)):
        for l in range(4):
            faces[tet_faces[t, l]] = tets[t, list(FACE_VERTS[l])]
    _check_delta(tets, tet_edges, tet_faces, edges, face_edges)
    cocycles = [[int(x) for x in w] for _, w in sections.get("cocycles", [])]
    if any(len(c) != len(edges) for c in cocycles):
        raise ParseError("each cocycle needs one value per edge", None, "cocycles")
    norms = {}
    for lineno, w in sections.get("class_norms", []):
        s = " ".join(w)
        lhs, rhs = s.split(":")
        norms[tuple(int(x) for x in lhs.split())] = float(rhs)
    n = len(R)
    C = DeltaComplex(
        tets, tet_edges, tet_faces, edges, faces, face_edges, n_vertices,
        desc=np.tile(np.eye(4, dtype=np.int64), (n, 1, 1)), parent=np.arange(n),
    )
    return MeshFile(name, C, lengths, cocycles, norms, sys_, inj)


def _check_delta(tets, tet_edges, tet_faces, edges, face_edges) -> None:
    for t in range(len(tets)):
        for (i, j), e in zip(LOCAL_EDGES, tet_edges[t]):
            if tuple(edges[e]) != (tets[t, i], tets[t, j]):
                raise ValidationError(f"tetrahedron {t}: edge {e} does not join local vertices {i},{j}")
        for l in range(4):
            a, b, c = FACE_VERTS[l]
            want = (tet_edges[t, EDGE_IDX[(a, b)]], tet_edges[t, EDGE_IDX[(a, c)]], tet_edges[t, EDGE_IDX[(b, c)]])
            if tuple(face_edges[tet_faces[t, l]]) != want:
                raise ValidationError(f"tetrahedron {t}: face {tet_faces[t, l]} has inconsistent edges")


def parse_mesh(path) -> MeshFile:
    return parse_mesh_text(Path(path).read_text(encoding="utf-8"))


def flat_torus_text(size: float = 1.0) -> str:
    """The cube [0, size]^3 with opposite faces identified, split into 6 tetrahedra.

    All cube corners are one vertex; the 7 edges are the translations x, y, z,
    x+y, x+z, y+z, x+y+z.  Each tetrahedron is a monotone lattice path from 0
    to (1, 1, 1).  The cocycles dx, dy, dz are attached.
    """
    steps = {}
    for bits in itertools.product((0, 1), repeat=3):
        if any(bits):
            steps[bits] = len(steps)
    edges = [(0, 0, size * math.sqrt(sum(b))) for b in steps]
    faces: dict = {}
    tets = []

    def face_id(p, q, r):
        # translation-invariant key: the face is determined by its edge steps
        key = (tuple(np.subtract(q, p)), tuple(np.subtract(r, q)))
        return faces.setdefault(key, len(faces))

    for perm in itertools.permutations(range(3)):
        pts = [(0, 0, 0)]
        for axis in perm:
            nxt = list(pts[-1])
            nxt[axis] += 1
            pts.append(tuple(nxt))
        es = [steps[tuple(np.subtract(pts[j], pts[i]))] for i, j in LOCAL_EDGES]
        fs = [face_id(*[pts[a] for a in FACE_VERTS[l]]) for l in range(4)]
        tets.append((es, fs, pts))
    face_edges = [None] * len(faces)
    for (s1, s2), fid in faces.items():
        face_edges[fid] = (steps[s1], steps[tuple(np.add(s1, s2))], steps[s2])
    lines = ["name flat_torus", "vertices 1", "edges"]
    lines += [f"{a} {b} {l!r}" for a, b, l in edges]
    lines.append("faces")
    lines += [" ".join(map(str, fe)) for fe in face_edges]
    lines.append("tetrahedra")
    for es, fs, _ in tets:
        lines.append("0 0 0 0 " + " ".join(map(str, es)) + " " + " ".join(map(str, fs)))
    lines.append("cocycles")
    for axis in range(3):
        lines.append(" ".join(str(b[axis]) for b in steps))
    lines.append("class_norms")
    for axis in range(3):
        lines.append(" ".join("1" if a == axis else "0" for a in range(3)) + " : 0.0")
    lines.append("injectivity_radius 0.5")
    return "\n".join(lines) + "\n"


def mesh_from_file(mf: MeshFile, refinement: int) -> MetricMesh:
    """Refine a closed file mesh; lengths come from each parent cell's flat metric."""
    if refinement < 1:
        raise ValueError("closed meshes need refinement >= 1")
    if refinement > MAX_REFINEMENT:
        raise ValueError(f"refinement above the configured maximum {MAX_REFINEMENT}")
    base = mf.complex
    R = refine(base, refinement)
    l2 = mf.edge_length[base.tet_edges] ** 2
    G = np.empty((len(base.tets), 3, 3))
    for a in range(3):
        G[:, a, a] = l2[:, a]
    for (i, j), k in EDGE_IDX.items():
        if i > 0:
            G[:, i - 1, j - 1] = G[:, j - 1, i - 1] = 0.5 * (l2[:, i - 1] + l2[:, j - 1] - l2[:, k])
    lengths = np.full(len(R.edges), np.nan)
    for (i, j), k in EDGE_IDX.items():
        d = (R.desc[:, j, 1:] - R.desc[:, i, 1:]) / refinement  # (T, 3)
        Gp = G[R.parent]
        vals = np.sqrt(np.einsum("ta,tab,tb->t", d, Gp, d))
        lengths[R.tet_edges[:, k]] = vals
    mesh = MetricMesh(
        n_vertices=R.n_vertices,
        tets=R.tets,
        tet_edges=R.tet_edges,
        tet_faces=R.tet_faces,
        edges=R.edges,
        faces=R.faces,
        face_edges=R.face_edges,
        edge_length=lengths,
        boundary_faces=np.zeros(0, dtype=np.int64),
        boundary_cusp=np.zeros(0, dtype=np.int64),
        boundary_height=np.zeros(0),
        parent=R.parent,
        omega=R.desc,
        denom=refinement,
        kind="closed",
        level=refinement,
        name=mf.name,
        analytic_volume=float(np.sum(np.sqrt(np.linalg.det(G)) / 6.0)),
    )
    mesh.check_cells()
    return mesh


# ----------------------------------------------------------------------------
# truncated ideal triangulations


def minkowski(a, b):
    return -a[..., 0] * b[..., 0] + np.sum(a[..., 1:] * b[..., 1:], axis=-1)


def horosphere_vector(center: complex, diameter: float) -> np.ndarray:
    """Light-like vector u with horosphere {p : -<p, u> = 1} based at `center`."""
    a = abs(center) ** 2
    return np.array([1 + a, 2 * center.real, 2 * center.imag, a - 1]) / diameter


def uhs_to_hyperboloid(xy: complex, z: float) -> np.ndarray:
    a = abs(xy) ** 2
    return np.array([(a + z * z + 1) / (2 * z), xy.real / z, xy.imag / z, (a + z * z - 1) / (2 * z)])


def _flag_points():
    """Descriptor (12 corner weights, total 12) of every point type of a truncated tet."""
    pts = {}
    for (i, j) in CORNERS:
        d = [0] * 12
        d[SLOT[(i, j)]] = 12
        pts[("C", i, j)] = d
    for (i, j) in LOCAL_EDGES:
        d = [0] * 12
        d[SLOT[(i, j)]] = d[SLOT[(j, i)]] = 6
        pts[("E", i, j)] = d
    for i in range(4):
        others = [x for x in range(4) if x != i]
        for j, k in itertools.combinations(others, 2):
            d = [0] * 12
            d[SLOT[(i, j)]] = d[SLOT[(i, k)]] = 6
            pts[("L", i, j, k)] = d
        d = [0] * 12
        for j in others:
            d[SLOT[(i, j)]] = 4
        pts[("T", i)] = d
    for l in range(4):
        d = [0] * 12
        for (i, j) in CORNERS:
            if l not in (i, j):
                d[SLOT[(i, j)]] = 2
        pts[("H", l)] = d
    pts[("X",)] = [1] * 12
    return {k: tuple(v) for k, v in pts.items()}


def _flags():
    """The 72 flags (corner, edge, face, cell) of a truncated tetrahedron."""
    out = []
    for l in range(4):
        rest = [x for x in range(4) if x != l]
        for i, j in itertools.combinations(rest, 2):
            for c in (("C", i, j), ("C", j, i)):
                out.append((c, ("E", i, j), ("H", l), ("X",)))
        for i in rest:
            j, k = [x for x in rest if x != i]
            for c in (("C", i, j), ("C", i, k)):
                out.append((c, ("L", i, j, k), ("H", l), ("X",)))
    for i in range(4):
        others = [x for x in range(4) if x != i]
        for j, k in itertools.combinations(others, 2):
            for c in (("C", i, j), ("C", i, k)):
                out.append((c, ("L", i, j, k), ("T", i), ("X",)))
    assert len(out) == 72
    return out


def flag_complex(M: TriangulatedManifold) -> DeltaComplex:
    """Flag subdivision of the truncated tetrahedra, glued along the ideal faces."""
    pts = _flag_points()
    flags = _flags()
    n = M.n_tets
    parent: dict = {}

    def find(a):
        while parent.setdefault(a, a) != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    def mapped(desc, p):
        out = [0] * 12
        for s, (i, j) in enumerate(CORNERS):
            out[SLOT[(p[i], p[j])]] = desc[s]
        return tuple(out)

    simplices = []  # (vertex tuple of local labels) for all sub-simplices of dims 0..2
    for fl in flags:
        for r in (1, 2, 3):
            for sub in itertools.combinations(fl, r):
                simplices.append(sub)
    simplices = list(dict.fromkeys(simplices))
    for t in range(n):
        for l in range(4):
            p = M.perms[t][l]
            u = int(M.targets[t][l])
            for sub in simplices:
                descs = [pts[x] for x in sub]
                if any(d[SLOT[c]] for d in descs for c in CORNERS if l in c):
                    continue
                union((t, tuple(descs)), (u, tuple(mapped(d, p) for d in descs)))
    b = _Builder()
    descs_out, parents = [], []
    for t in range(n):
        for fl in flags:
            d = [pts[x] for x in fl]
            vkeys = [find((t, (d[i],))) for i in range(4)]
            ekeys = [find((t, (d[i], d[j]))) for i, j in LOCAL_EDGES]
            fkeys = [find((t, tuple(d[a] for a in FACE_VERTS[l]))) for l in range(4)]
            b.add_tet(vkeys, ekeys, fkeys)
            descs_out.append(d)
            parents.append(t)
    return DeltaComplex.from_builder(b, descs_out, parents)


@dataclass
class TetFrame:
    horospheres: np.ndarray  # (4, 4) truncation horosphere vectors
    corners: np.ndarray  # (12, 4) hyperboloid points


def _tet_frames(M, devs, z0) -> list[TetFrame]:
    frames = []
    for t in range(M.n_tets):
        c0 = int(M.vertex_cusp[t, 0])
        P = devs[c0].positions[(t, 0)]
        U = np.zeros((4, 4))
        U[0] = np.array([1.0, 0, 0, 1.0])
        for j in (1, 2, 3):
            k = next(x for x in (1, 2, 3) if x != j)
            cj = int(M.vertex_cusp[t, j])
            Q = devs[cj].positions[(t, j)]
            delta = abs(P[j] - P[k]) * abs(Q[0] - Q[k])
            U[j] = horosphere_vector(P[j], delta)
        for i in range(4):
            U[i] *= z0[int(M.vertex_cusp[t, i])]
        C = np.zeros((12, 4))
        for s, (i, j) in enumerate(CORNERS):
            g = -minkowski(U[i], U[j])
            if not g > 2.0:
                raise MeshError(f"truncation horospheres at tetrahedron {t} vertices {i},{j} overlap", t)
            C[s] = U[i] / 2 + U[j] / g
        frames.append(TetFrame(U, C))
    return frames


def _positions(desc: np.ndarray, frames: list[TetFrame], parent: np.ndarray) -> np.ndarray:
    """Hyperboloid points of descriptor vectors (..., 12) in their parent frames."""
    C = np.stack([f.corners for f in frames])[parent]  # (T, 12, 4)
    p = np.einsum("tvs,tsx->tvx", desc.astype(float), C)
    p = p / np.sqrt(-minkowski(p, p))[..., None]
    # points supported on the corners of one vertex lie on its truncation horosphere
    U = np.stack([f.horospheres for f in frames])[parent]  # (T, 4, 4)
    for i in range(4):
        mask = np.ones(12, dtype=bool)
        mask[[SLOT[(i, j)] for j in range(4) if j != i]] = False
        on = np.all(desc[..., mask] == 0, axis=-1)  # (T, 4)
        if not on.any():
            continue
        u = np.broadcast_to(U[:, i][:, None, :], p.shape)
        h = -minkowski(p, u)
        s = (h * h - 1) / (2 * h)
        q = (p + s[..., None] * u) / h[..., None]
        p = np.where(on[..., None], q, p)
    return p


def _boundary_vertex(desc) -> int:
    """Index i when the descriptor is supported on the corners of vertex i, else -1."""
    for i in range(4):
        if all(desc[s] == 0 for s, c in enumerate(CORNERS) if c[0] != i):
            return i
    return -1


def neck_heights(z0: float, Z: float, level: int, rho: float = DEFAULT_RHO) -> np.ndarray:
    """Geometric layer heights from z0 to Z with ratio close to rho^(1/level)."""
    if not Z > z0:
        raise MeshError(f"truncation height {Z} must exceed the core height {z0}")
    r = rho ** (1.0 / level)
    n = max(1, int(math.ceil(math.log(Z / z0) / math.log(r) - 1e-9)))
    return z0 * (Z / z0) ** (np.arange(n + 1) / n)


def _uhs_distance(xy1, z1, xy2, z2):
    return np.arccosh(1 + (abs(xy1 - xy2) ** 2 + (z1 - z2) ** 2) / (2 * z1 * z2))


def _add_neck(b: _Builder, faces, heights, vkey0, ekey0, fkey0, tag):
    """Prisms over torus triangles, layer by layer.

    faces: iterable of (face_key, (a, b, c) vertex keys, (ab, ac, bc) edge keys,
    (xy_a, xy_b, xy_c), info) for an ordered torus triangulation; vkey0 etc.
    turn torus keys into layer-0 mesh keys.  Returns per-tet info and, per
    vertex key, its (xy, layer) data.
    """
    out_info = []
    vdata = {}
    n = len(heights) - 1

    def vk(x, m):
        return vkey0(x) if m == 0 else ("nv", tag, x, m)

    for fkey, V, E, XY, info in faces:
        for x, xy in zip(V, XY):
            for m in range(n + 1):
                vdata.setdefault(vk(x, m), (xy, m))
        edge_of = {(0, 1): E[0], (0, 2): E[1], (1, 2): E[2]}
        for m in range(1, n + 1):
            lo, hi = m - 1, m
            for pattern in (((0, lo), (0, hi), (1, hi), (2, hi)), ((0, lo), (1, lo), (1, hi), (2, hi)), ((0, lo), (1, lo), (2, lo), (2, hi))):

                def ekey(P, Q):
                    (x, mp), (y, mq) = P, Q
                    if x == y:
                        return ("nvert", tag, V[x], mp)
                    e = edge_of[(x, y)]
                    return ekey0(e) if mp == mq == 0 else ("ne", tag, e, mp, mq)

                def fkey_(P, Q, R):
                    letters = sorted({P[0], Q[0], R[0]})
                    if all(x[1] == 0 for x in (P, Q, R)):
                        return fkey0(fkey)
                    if len(letters) == 3:
                        return ("nf", tag, fkey, P[1], Q[1], R[1])
                    e = edge_of[tuple(letters)]
                    return ("nq", tag, e, tuple((letters.index(x[0]), x[1]) for x in (P, Q, R)))

                vkeys = [vk(V[x], mm) for x, mm in pattern]
                ekeys = [ekey(pattern[i], pattern[j]) for i, j in LOCAL_EDGES]
                fkeys = [fkey_(*[pattern[a] for a in FACE_VERTS[l]]) for l in range(4)]

                def length(i, j, pattern=pattern):
                    (x, mp), (y, mq) = pattern[i], pattern[j]
                    return float(_uhs_distance(XY[x], heights[mp], XY[y], heights[mq]))

                t = b.add_tet(vkeys, ekeys, fkeys, length)
                out_info.append((t, info, pattern))
    return out_info, vdata


def build_metric_mesh(
    M: TriangulatedManifold,
    T: Optional[float] = None,
    refinement: int = 0,
    rho: float = DEFAULT_RHO,
    tau0: Optional[float] = None,
) -> MetricMesh:
    """Mesh of M truncated at the horotori of height e^T in every cusp.

    refinement 0 is the flag subdivision of the truncated tetrahedra; level r
    subdivides every flag tetrahedron edgewise into (r + 1)^3 pieces.  The neck
    above each truncated link uses layers with ratio about rho^(1/(r + 1)).
    """
    if not M.oriented:
        raise ValidationError(f"{M.name}: the triangulation is not consistently oriented")
    if refinement < 0 or refinement > MAX_REFINEMENT:
        raise ValueError(f"refinement must lie in [0, {MAX_REFINEMENT}]")
    tc = truncation_constants(M, tau0)
    if T is None:
        T = tc.tau
    if T < tc.tau - 1e-12:
        raise ValueError(f"truncation height T = {T} is below tau = {tc.tau}")
    Z = math.exp(T)
    level = refinement + 1
    devs = develop_cusps(M)
    # core height: above the link triangles' circumradii so the truncation is clean
    z0 = []
    for c, dev in enumerate(devs):
        r = 0.0
        for P in dev.positions.values():
            a, b_, cc = P.values()
            la, lb, lc = abs(b_ - cc), abs(a - cc), abs(a - b_)
            area = abs(((b_ - a).conjugate() * (cc - a)).imag) / 2
            r = max(r, la * lb * lc / (4 * area))
        z0.append(max(MIN_Z0, Z0_FACTOR * r))
    if Z <= max(z0) * rho ** (1.0 / level):
        raise MeshError(f"truncation height e^T = {Z:.4g} leaves no room above the core height {max(z0):.4g}")
    frames = _tet_frames(M, devs, z0)
    core = refine(flag_complex(M), level)
    denom = 12 * level
    P = _positions(core.desc, frames, core.parent)  # (T, 4, 4)

    b = _Builder()
    omega = []
    parents = []
    agg = np.zeros((12, 4), dtype=np.int64)
    for s, (i, j) in enumerate(CORNERS):
        agg[s, i] = 1
    for t in range(len(core.tets)):
        Pt = P[t]
        b.add_tet(
            [("cv", int(v)) for v in core.tets[t]],
            [("ce", int(e)) for e in core.tet_edges[t]],
            [("cf", int(f)) for f in core.tet_faces[t]],
            lambda i, j, Pt=Pt: float(np.arccosh(max(1.0, -minkowski(Pt[i], Pt[j])))),
        )
        omega.append(core.desc[t] @ agg)
        parents.append(int(core.parent[t]))

    # torus triangles on the truncation horospheres
    per_cusp = [[] for _ in devs]
    for t in range(len(core.tets)):
        pt = int(core.parent[t])
        for l in range(4):
            a, bb, c = FACE_VERTS[l]
            sides = {_boundary_vertex(core.desc[t, x]) for x in (a, bb, c)}
            if len(sides) != 1 or -1 in sides:
                continue
            i = sides.pop()
            cusp = int(M.vertex_cusp[pt, i])
            Pd = devs[cusp].positions[(pt, i)]
            XY = []
            for x in (a, bb, c):
                d = core.desc[t, x]
                w = np.array([d[SLOT[(i, j)]] for j in range(4) if j != i], dtype=float)
                pos = np.array([Pd[j] for j in range(4) if j != i])
                XY.append(complex(np.dot(w, pos) / w.sum()))
            te = core.tet_edges[t]
            E = (int(te[EDGE_IDX[(a, bb)]]), int(te[EDGE_IDX[(a, c)]]), int(te[EDGE_IDX[(bb, c)]]))
            V = tuple(int(core.tets[t, x]) for x in (a, bb, c))
            per_cusp[cusp].append((int(core.tet_faces[t, l]), V, E, tuple(XY), (pt, i)))

    n_core_v = core.n_vertices
    layer_heights = []
    vertex_meta = {}
    for cusp, faces in enumerate(per_cusp):
        heights = neck_heights(z0[cusp], Z, level, rho)
        layer_heights.append(heights)
        info, vdata = _add_neck(
            b, faces, heights,
            lambda x: ("cv", x), lambda e: ("ce", e), lambda f: ("cf", f), cusp,
        )
        for t, (pt, i), pattern in info:
            om = np.zeros((4, 4), dtype=np.int64)
            om[:, i] = denom
            omega.append(om)
            parents.append(pt)
        for key, (xy, m) in vdata.items():
            vertex_meta[b.vid[key]] = (cusp, m, heights[m], xy)

    nV = len(b.vid)
    vcusp = np.full(nV, -1, dtype=np.int64)
    vlayer = np.full(nV, -1, dtype=np.int64)
    vz = np.full(nV, np.nan)
    vxy = np.full(nV, np.nan, dtype=complex)
    for v, (c, m, z, xy) in vertex_meta.items():
        vcusp[v], vlayer[v], vz[v], vxy[v] = c, m, z, xy
    analytic = volume(M) - sum(c.area / (2 * Z * Z) for c in M.cusps)
    mesh = _finish(
        b, parents, omega, denom, "ideal", level,
        vertex_cusp=vcusp, vertex_layer=vlayer, vertex_z=vz, vertex_xy=vxy,
        cusp_lattices=[(d.xi, d.eta) for d in devs],
        layer_heights=layer_heights, truncation=T, analytic_volume=analytic, name=M.name,
    )
    assert n_core_v <= mesh.n_vertices
    # every boundary face sits on a top layer
    for k, f in enumerate(mesh.boundary_faces):
        vs = mesh.faces[f]
        cs = set(vcusp[vs].tolist())
        if len(cs) != 1 or np.any(vlayer[vs] != len(layer_heights[cs.copy().pop()]) - 1):
            raise MeshError("boundary face off the truncation tori", int(f))
        mesh.boundary_cusp[k] = cs.pop()
        mesh.boundary_height[k] = Z
    return mesh


# ----------------------------------------------------------------------------
# model cusps


def model_cusp_mesh(
    xi: complex,
    eta: complex,
    base: float,
    top: float,
    n: int = 12,
    level: int = 1,
    rho: float = DEFAULT_RHO,
    spacing: str = "geometric",
) -> MetricMesh:
    """T^2 x [base, top] in upper half-space with an n x n grid on the torus.

    Layers are geometric (ratio rho^(1/level)) or, with spacing="uniform",
    equally spaced in z with step about |xi| / (n * level), which resolves
    modes that decay like exp(-2 pi |w| z).
    """
    if n < 3:
        raise ValueError("torus grid needs n >= 3")
    if spacing == "geometric":
        heights = neck_heights(base, top, level, rho)
    elif spacing == "uniform":
        step = min(abs(xi), abs(eta)) / (n * level)
        heights = np.linspace(base, top, max(2, int(math.ceil((top - base) / step))) + 1)
    else:
        raise ValueError(f"unknown layer spacing {spacing!r}")

    def vid(i, j):
        return (i % n) * n + (j % n)

    def xy(i, j):
        return (i / n) * xi + (j / n) * eta

    # edges of the torus: +i, +j, diagonal
    def eid(i, j, kind):
        return 3 * vid(i, j) + kind

    faces = []
    for i in range(n):
        for j in range(n):
            a, b1, b2, c = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            faces.append((("lo", i, j), (a, b1, c), (eid(i, j, 0), eid(i, j, 2), eid(i + 1, j, 1)), (xy(i, j), xy(i + 1, j), xy(i + 1, j + 1)), None))
            faces.append((("up", i, j), (a, b2, c), (eid(i, j, 1), eid(i, j, 2), eid(i, j + 1, 0)), (xy(i, j), xy(i, j + 1), xy(i + 1, j + 1)), None))
    b = _Builder()
    info, vdata = _add_neck(b, faces, heights, lambda x: ("tv", x), lambda e: ("te", e), lambda f: ("tf", f), 0)
    nV = len(b.vid)
    vcusp = np.zeros(nV, dtype=np.int64)
    vlayer = np.zeros(nV, dtype=np.int64)
    vz = np.zeros(nV)
    vxy = np.zeros(nV, dtype=complex)
    for key, (p, m) in vdata.items():
        v = b.vid[key]
        vlayer[v], vz[v], vxy[v] = m, heights[m], p
    nT = len(b.tets)
    mesh = _finish(
        b, -np.ones(nT), np.zeros((nT, 4, 4)), 1, "model", level,
        vertex_cusp=vcusp, vertex_layer=vlayer, vertex_z=vz, vertex_xy=vxy,
        cusp_lattices=[(complex(xi), complex(eta))], layer_heights=[heights],
        analytic_volume=abs((complex(xi).conjugate() * complex(eta)).imag) * (base ** -2 - top ** -2) / 2,
        name="model_cusp",
    )
    for k, f in enumerate(mesh.boundary_faces):
        z = vz[mesh.faces[f]]
        mesh.boundary_cusp[k] = 0
        mesh.boundary_height[k] = z[0]
    return mesh
