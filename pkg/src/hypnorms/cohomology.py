"""Integer (co)homology of ideal triangulations and closed Delta-complex meshes.

For an ideal triangulation the L^2-harmonic classes correspond to the image of
H^1(M, dM) in H^1(M).  Relative cocycles are integer values on the oriented
edge classes whose signed sum vanishes on every face; they are compared in
H^1(M) through their periods on a basis of H_1(M), read off the dual complex
(tetrahedra as vertices, faces as edges, edge classes as 2-cells).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import intlinalg as il
from .manifold_io import TET_EDGES, TriangulatedManifold, edge_classes

EDGE_POS = {e: k for k, e in enumerate(TET_EDGES)}


# ----------------------------------------------------------------------------
# chain complexes


@dataclass
class IdealComplex:
    """Cells of an ideal triangulation with orientation bookkeeping."""

    n_tets: int
    edge_of: np.ndarray  # (n, 6) edge class of each tetrahedron edge
    edge_sign: np.ndarray  # (n, 6) +1 if tet edge i->j matches the class orientation
    faces: list[tuple[int, int, int, int]]  # representative (t, f, u, g)
    face_of: np.ndarray  # (n, 4)
    face_side: np.ndarray  # (n, 4) +1 on the representative side
    n_edges: int
    n_cusps: int
    targets: np.ndarray
    perms: tuple

    @property
    def n_faces(self) -> int:
        return len(self.faces)


def ideal_complex(M: TriangulatedManifold) -> IdealComplex:
    if not M.oriented:
        raise ValueError(f"{M.name}: the triangulation is not consistently oriented")
    n = M.n_tets
    classes = edge_classes(M.targets, M.perms)
    edge_of = np.empty((n, 6), dtype=int)
    edge_sign = np.empty((n, 6), dtype=int)
    for c, members in enumerate(classes):
        for (t, i, j, s) in members:
            edge_of[t, EDGE_POS[(i, j)]] = c
            edge_sign[t, EDGE_POS[(i, j)]] = s
    faces = []
    face_of = -np.ones((n, 4), dtype=int)
    face_side = np.zeros((n, 4), dtype=int)
    for t in range(n):
        for f in range(4):
            if face_of[t, f] >= 0:
                continue
            u = int(M.targets[t, f])
            g = M.perms[t][f][f]
            face_of[t, f] = face_of[u, g] = len(faces)
            face_side[t, f], face_side[u, g] = 1, -1
            faces.append((t, f, u, g))
    return IdealComplex(n, edge_of, edge_sign, faces, face_of, face_side, len(classes), M.n_cusps, M.targets, M.perms)


def relative_coboundary(K: IdealComplex) -> il.IntMatrix:
    """delta: C^1 -> C^2; on face (a<b<c) the value phi(ab) + phi(bc) - phi(ac)."""
    D = [[0] * K.n_edges for _ in range(K.n_faces)]
    for fid, (t, f, _, _) in enumerate(K.faces):
        a, b, c = [v for v in range(4) if v != f]
        for (i, j), coef in (((a, b), 1), ((b, c), 1), ((a, c), -1)):
            k = EDGE_POS[(i, j)]
            D[fid][int(K.edge_of[t, k])] += coef * int(K.edge_sign[t, k])
    return D


def dual_boundaries(K: IdealComplex) -> tuple[il.IntMatrix, il.IntMatrix]:
    """(d1, d2) of the dual cell complex: d1 is tets x faces, d2 is faces x edge classes."""
    d1 = [[0] * K.n_faces for _ in range(K.n_tets)]
    for fid, (t, _, u, _) in enumerate(K.faces):
        d1[u][fid] += 1
        d1[t][fid] -= 1
    d2 = [[0] * K.n_edges for _ in range(K.n_faces)]
    seen = set()
    for t0 in range(K.n_tets):
        for (i0, j0) in TET_EDGES:
            e = int(K.edge_of[t0, EDGE_POS[(i0, j0)]])
            if e in seen:
                continue
            seen.add(e)
            k0, l0 = [v for v in range(4) if v not in (i0, j0)]
            t, i, j, k, l = t0, i0, j0, k0, l0
            while True:
                # leave t through the face opposite l, which contains edge ij and vertex k
                fid = int(K.face_of[t, l])
                d2[fid][e] += int(K.face_side[t, l])
                p = K.perms[t][l]
                t, i, j, k, l = int(K.targets[t, l]), p[i], p[j], p[l], p[k]
                if (t, i, j, k, l) == (t0, i0, j0, k0, l0):
                    break
    return d1, d2


def tet_potentials(K: IdealComplex, edge_values) -> np.ndarray:
    """Per-tet vertex potentials a (a_0 = 0) of a relative cocycle given on edge classes."""
    vals = np.asarray(edge_values)
    per_tet = vals[K.edge_of] * K.edge_sign
    return per_tet_potentials(per_tet)


def per_tet_potentials(per_tet) -> np.ndarray:
    per_tet = np.asarray(per_tet)
    a = np.zeros((per_tet.shape[0], 4), dtype=per_tet.dtype)
    a[:, 1:] = per_tet[:, :3]
    return a


def dual_jumps(K: IdealComplex, potentials: np.ndarray) -> np.ndarray:
    """The dual 1-cocycle (value per face) obtained by crossing faces with the potentials."""
    out = np.zeros(K.n_faces, dtype=potentials.dtype)
    for fid, (t, f, u, _) in enumerate(K.faces):
        v = 0 if f != 0 else 1
        out[fid] = potentials[u, K.perms[t][f][v]] - potentials[t, v]
    return out


# ----------------------------------------------------------------------------
# homology


@dataclass
class HomologyData:
    b1: int
    torsion: list[int]
    b2: int
    b2_rel: int
    h1_cycles: il.IntMatrix  # rows: 1-cycles (dual edges or mesh edges) spanning H_1 / torsion
    snf_diagonals: dict[str, list[int]]
    relative_cocycles: Optional[il.IntMatrix] = None  # rows: basis of H^1(M, dM) on edge classes


def _h1_basis(d1: il.IntMatrix, n1: int, d2: il.IntMatrix, n2: int, n0: int):
    """Free part of H_1 for a chain complex C2 -(d2)-> C1 -(d1)-> C0 given as row lists.

    d1 has n0 rows, n1 columns; d2 has n1 rows, n2 columns.
    """
    sf1 = il.smith(d1, n0, n1)
    r1 = sf1.rank
    # coordinates of cycles: x = V y, cycles are y with y[:r1] = 0
    V = sf1.V
    Vinv = il.to_int_matrix(__import__("sympy").Matrix(V).inv().tolist()) if n1 else []
    k = n1 - r1
    C = [row for row in il.matmul(Vinv, d2)[r1:]] if n2 else [[0] * 0 for _ in range(k)]
    sf2 = il.smith(C, k, n2) if k and n2 else il.SmithForm([], il.identity(k), il.identity(n2), [])
    r2 = sf2.rank
    # H_1 = Z^k / im C ; in coordinates w = U y, im C = span(s_i e_i)
    Uinv = il.to_int_matrix(__import__("sympy").Matrix(sf2.U).inv().tolist()) if k else []
    free = []
    for col in range(r2, k):
        y = [Uinv[row][col] for row in range(k)]
        x = [sum(V[i][r1 + a] * y[a] for a in range(k)) for i in range(n1)]
        free.append(x)
    torsion = [d for d in sf2.diagonal if d > 1]
    return free, torsion, sf1.diagonal, sf2.diagonal, r1


def homology_ideal(M: TriangulatedManifold) -> HomologyData:
    K = ideal_complex(M)
    d1, d2 = dual_boundaries(K)
    cycles, torsion, diag1, diag2, _ = _h1_basis(d1, K.n_faces, d2, K.n_edges, K.n_tets)
    delta = relative_coboundary(K)
    Z = il.integer_kernel(delta, K.n_faces, K.n_edges)
    sf = il.smith(delta, K.n_faces, K.n_edges)
    b1 = len(cycles)
    return HomologyData(
        b1=b1,
        torsion=torsion,
        b2=len(Z),
        b2_rel=b1,
        h1_cycles=cycles,
        snf_diagonals={"dual_d1": diag1, "dual_d2": diag2, "relative_delta1": sf.diagonal},
        relative_cocycles=Z,
    )


def homology_mesh(n_vertices: int, edges: np.ndarray, faces_edges: np.ndarray, tets_faces: np.ndarray) -> HomologyData:
    """Homology of a closed ordered Delta-complex.

    edges: (E, 2) tail/head; faces_edges: (F, 3) edge ids of (01, 02, 12);
    tets_faces: (T, 4) face ids opposite local vertices 0..3.
    """
    nV, nE, nF, nT = n_vertices, len(edges), len(faces_edges), len(tets_faces)
    if nV == 0 or nE == 0:
        raise ValueError("empty complex")
    d1 = [[0] * nE for _ in range(nV)]
    for e, (a, b) in enumerate(edges):
        d1[int(b)][e] += 1
        d1[int(a)][e] -= 1
    d2 = [[0] * nF for _ in range(nE)]
    for f, (e01, e02, e12) in enumerate(faces_edges):
        d2[int(e01)][f] += 1
        d2[int(e12)][f] += 1
        d2[int(e02)][f] -= 1
    d3 = [[0] * nT for _ in range(nF)]
    for t, fs in enumerate(tets_faces):
        for i, f in enumerate(fs):
            d3[int(f)][t] += (-1) ** i
    cycles, torsion, diag1, diag2, r1 = _h1_basis(d1, nE, d2, nF, nV)
    r2 = len(diag2)
    r3 = il.smith(d3, nF, nT).rank
    b2 = nF - r2 - r3
    return HomologyData(
        b1=len(cycles),
        torsion=torsion,
        b2=b2,
        b2_rel=b2,
        h1_cycles=cycles,
        snf_diagonals={"d1": diag1, "d2": diag2},
    )


# ----------------------------------------------------------------------------
# the image subspace and cohomology classes


@dataclass
class ImageBasis:
    """Integral basis of Im(H^1(M, dM) -> H^1(M)).

    `periods` rows are the basis classes evaluated on the H_1 cycles (Hermite
    form, so the basis is the lexicographically smallest reduced echelon one);
    `reps[i]` is a per-tetrahedron edge-value array (n_tets, 6) of an integral
    cocycle representing basis class i on the parent complex.
    """

    rank: int
    b1: int
    periods: il.IntMatrix
    reps: list[np.ndarray]
    kind: str
    homology: HomologyData
    complex_: object = field(repr=False, default=None)

    def periods_of(self, per_tet: np.ndarray) -> list[int]:
        return _periods(self, per_tet)

    def coords_of(self, per_tet: np.ndarray) -> Optional[list[Fraction]]:
        """Coordinates of a cocycle's class in this basis (None if outside the image)."""
        return il.solve_in_lattice(self.periods, self.periods_of(per_tet))

    def representative(self, coords) -> np.ndarray:
        rep = np.zeros_like(self.reps[0], dtype=float) if self.reps else np.zeros((0, 6))
        for c, r in zip(coords, self.reps):
            rep = rep + float(c) * r
        return rep

    def integer_representative(self, coords) -> np.ndarray:
        if any(Fraction(c).denominator != 1 for c in coords):
            raise ValueError("class not integral")
        rep = np.zeros_like(self.reps[0], dtype=np.int64)
        for c, r in zip(coords, self.reps):
            rep = rep + int(c) * r.astype(np.int64)
        return rep


def _periods(B: ImageBasis, per_tet: np.ndarray) -> list[int]:
    cyc = B.homology.h1_cycles
    if B.kind == "ideal":
        K = B.complex_
        jumps = dual_jumps(K, per_tet_potentials(per_tet))
        return [int(round(sum(float(c) * float(j) for c, j in zip(z, jumps)))) for z in cyc]
    mesh_edges = B.complex_
    vals = edge_values_from_tets(mesh_edges, per_tet)
    return [int(round(sum(float(c) * float(v) for c, v in zip(z, vals)))) for z in cyc]


def edge_values_from_tets(tet_edges: np.ndarray, per_tet: np.ndarray) -> np.ndarray:
    """Global edge cochain from per-tet values on an ordered Delta-complex."""
    n_e = int(tet_edges.max()) + 1
    out = np.zeros(n_e, dtype=per_tet.dtype)
    out[tet_edges.ravel()] = per_tet.ravel()
    return out


def image_subspace(M: TriangulatedManifold) -> ImageBasis:
    """Basis of Im(H^1(M, dM) -> H^1(M)), dual to Im(H_2(M) -> H_2(M, dM))."""
    K = ideal_complex(M)
    H = homology_ideal(M)
    Z = H.relative_cocycles
    basis = ImageBasis(rank=0, b1=H.b1, periods=[], reps=[], kind="ideal", homology=H, complex_=K)
    per_tet = [np.asarray(z)[K.edge_of] * K.edge_sign for z in Z]
    P = [basis.periods_of(pt) for pt in per_tet]
    Hf, T = il.hermite_rows(P, H.b1)
    basis.periods = Hf
    basis.rank = len(Hf)
    basis.reps = [sum(int(c) * pt for c, pt in zip(row, per_tet)) for row in T]
    expected = H.b1 - M.n_cusps
    if basis.rank != expected:
        raise RuntimeError(f"image rank {basis.rank} differs from b1 - cusps = {expected}")
    return basis


def image_subspace_mesh(n_vertices, edges, faces_edges, tets_faces, tet_edges) -> ImageBasis:
    """For a closed mesh the image is all of H^1; basis via integer cocycles."""
    H = homology_mesh(n_vertices, edges, faces_edges, tets_faces)
    nE = len(edges)
    d1 = [[0] * nE for _ in range(len(faces_edges))]
    for f, (e01, e02, e12) in enumerate(faces_edges):
        d1[f][int(e01)] += 1
        d1[f][int(e12)] += 1
        d1[f][int(e02)] -= 1
    Z = il.integer_kernel(d1, len(faces_edges), nE)
    tet_edges = np.asarray(tet_edges)
    basis = ImageBasis(rank=0, b1=H.b1, periods=[], reps=[], kind="mesh", homology=H, complex_=tet_edges)
    per_tet = [np.asarray(z, dtype=np.int64)[tet_edges] for z in Z]
    P = [basis.periods_of(pt) for pt in per_tet]
    Hf, T = il.hermite_rows(P, H.b1)
    basis.periods = Hf
    basis.rank = len(Hf)
    basis.reps = [sum(int(c) * pt for c, pt in zip(row, per_tet)) for row in T]
    return basis


@dataclass(frozen=True)
class CohomologyClass:
    coords: tuple[Fraction, ...]
    thurston: Optional[float] = None
    provenance: Optional[str] = None  # "ingested" | "upper_bound" | "exact_zero"

    @classmethod
    def of(cls, coords, **kw) -> "CohomologyClass":
        return cls(tuple(Fraction(c) for c in coords), **kw)

    @property
    def integral(self) -> bool:
        return all(c.denominator == 1 for c in self.coords)

    @property
    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coords)

    def scaled(self, q) -> "CohomologyClass":
        return CohomologyClass(tuple(Fraction(q) * c for c in self.coords))

    def primitive(self) -> tuple[int, "CohomologyClass"]:
        """(m, p) with self = m * p and p primitive integral (self must be integral, nonzero)."""
        from math import gcd

        if not self.integral or self.is_zero:
            raise ValueError("nontrivial integral class required")
        g = 0
        for c in self.coords:
            g = gcd(g, int(c))
        return g, CohomologyClass(tuple(c / g for c in self.coords))


# ----------------------------------------------------------------------------
# dual surfaces

_LOCAL_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
_FACE_VERTS = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))


@dataclass
class DualSurface:
    """Level surface of a multivalued potential, cut into one polygon per tetrahedron.

    `pieces` holds (tet, polygon vertices in the tet's Cholesky frame, unit
    normal along the gradient); a class m * p is carried by m parallel copies,
    so pieces repeat m times and the counts scale by m.
    """

    pieces: list
    components: int
    chi: int
    chi_minus: int
    component_chis: list[int]
    class_coords: Optional[tuple]
    level: float
    multiplicity: int = 1
    boundary_segments: int = 0
    provenance: str = "upper_bound"

    @property
    def triangles(self) -> list:
        """Pieces split into triangles (quadrilaterals fan from their first corner)."""
        out = []
        for t, pts, n in self.pieces:
            for k in range(1, len(pts) - 1):
                out.append((t, np.array([pts[0], pts[k], pts[k + 1]]), n))
        return out

    @property
    def closed(self) -> bool:
        return self.boundary_segments == 0


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        a, b = self.find(a), self.find(b)
        if a != b:
            self.parent[max(a, b)] = min(a, b)


def level_surface(mesh, U: np.ndarray, offsets: Optional[np.ndarray] = None, level: float = 0.5,
                  class_coords=None, topology: bool = True) -> DualSurface:
    """The surface {u in level + Z} for u = U / denom + offsets on every tetrahedron.

    U are integer per-tet vertex potentials (lifts differ by multiples of
    denom between tetrahedra); offsets is a single-valued vertex function.
    Every vertex value is split into an integer part and a fractional part
    that only depends on the mesh vertex, so the combinatorics (which edges a
    sheet crosses, how pieces are glued) is decided in exact integers.
    Vertices lying exactly on a level count as above it.
    """
    from .hodge import _tet_embedding

    U = np.asarray(U)
    if not np.issubdtype(U.dtype, np.integer):
        if np.any(U != np.round(U)):
            raise ValueError("integer potentials required")
        U = np.round(U).astype(np.int64)
    denom = int(mesh.denom)
    f = np.zeros(mesh.n_vertices) if offsets is None else np.asarray(offsets, dtype=float)
    q = U // denom
    r = U - q * denom
    frac = r / denom + f[mesh.tets]
    n = q + np.floor(frac - level).astype(np.int64)  # vertex i is above sheet k iff n_i >= k
    u = U / denom + f[mesh.tets]
    X = _tet_embedding(mesh)
    from .hodge import _cholesky_frames

    L = _cholesky_frames(mesh)
    lo, hi = n.min(axis=1), n.max(axis=1)
    pieces, vkeys, ekeys = [], [], []
    for t in np.nonzero(hi > lo)[0]:
        nt, ut = n[t], u[t]
        grad = np.linalg.solve(L[t], ut[1:] - ut[0])
        normal = grad / np.linalg.norm(grad)
        for k in range(lo[t] + 1, hi[t] + 1):
            s = level + k
            above = nt >= k
            up = [i for i in range(4) if above[i]]
            dn = [i for i in range(4) if not above[i]]
            if len(up) == 2:
                a, b = up
                c, d = dn
                cyc = [(a, c), (a, d), (b, d), (b, c)]
            else:
                lone, rest = (up[0], dn) if len(up) == 1 else (dn[0], up)
                cyc = [(lone, j) for j in rest]
            pts, vk = [], []
            for i, j in cyc:
                lam = (s - ut[i]) / (ut[j] - ut[i])
                pts.append(X[t, i] + lam * (X[t, j] - X[t, i]))
                a, b = min(i, j), max(i, j)
                e = int(mesh.tet_edges[t, _LOCAL_EDGES.index((a, b))])
                vk.append((e, int(k - nt[a])))
            pieces.append((int(t), np.array(pts), normal))
            if topology:
                vkeys.append(vk)
                ek = []
                for l in range(4):
                    fv = _FACE_VERTS[l]
                    if len({bool(above[i]) for i in fv}) == 2:
                        ek.append((int(mesh.tet_faces[t, l]), int(k - nt[fv[0]])))
                ekeys.append(ek)
    if not topology:
        return DualSurface(pieces, 0, 0, 0, [], class_coords, level)
    uf = _UnionFind(len(pieces))
    first: dict = {}
    count: dict = {}
    for p, ek in enumerate(ekeys):
        for key in ek:
            count[key] = count.get(key, 0) + 1
            if key in first:
                uf.union(p, first[key])
            else:
                first[key] = p
    roots = sorted({uf.find(p) for p in range(len(pieces))})
    comp = {r_: c for c, r_ in enumerate(roots)}
    V = [set() for _ in roots]
    E = [set() for _ in roots]
    F = [0] * len(roots)
    for p in range(len(pieces)):
        c = comp[uf.find(p)]
        F[c] += 1
        V[c].update(vkeys[p])
        E[c].update(ekeys[p])
    chis = [len(V[c]) - len(E[c]) + F[c] for c in range(len(roots))]
    boundary = sum(1 for v in count.values() if v == 1)
    return DualSurface(
        pieces=pieces,
        components=len(roots),
        chi=sum(chis),
        chi_minus=sum(max(0, -x) for x in chis),
        component_chis=chis,
        class_coords=class_coords,
        level=level,
        boundary_segments=boundary,
    )


def dual_surface(cls: CohomologyClass, mesh, basis: ImageBasis) -> DualSurface:
    """Surface dual to an integral class: a level set of a simplicial cocycle.

    The class m * p (p primitive) is carried by m parallel copies of the level
    surface of p.  Its chi_- bounds the Thurston norm from above; no
    compressions are attempted.
    """
    if not cls.integral:
        raise ValueError("class not integral")
    if cls.is_zero:
        raise ValueError("nontrivial class required")
    from .hodge import integer_tet_potentials

    m, p = cls.primitive()
    U = integer_tet_potentials(basis, p.coords, mesh)
    # a generic sheet: never through a vertex, whose potentials lie in (1/denom) Z
    level = 0.5 + 0.25 / mesh.denom
    S = level_surface(mesh, U, None, level, class_coords=tuple(cls.coords))
    if S.boundary_segments:
        raise RuntimeError("dual surface is not closed")
    if m > 1:
        S.pieces = S.pieces * m
        S.components *= m
        S.chi *= m
        S.chi_minus *= m
        S.component_chis = S.component_chis * m
        S.multiplicity = m
    return S


# ----------------------------------------------------------------------------
# Thurston norm


@dataclass(frozen=True)
class NormValue:
    value: float
    provenance: str  # "ingested" | "upper_bound" | "exact_zero"

    def __float__(self) -> float:
        return self.value


def ball_gauge(vertices, x) -> float:
    """Gauge (Minkowski functional) of the symmetric polytope with the given vertices."""
    V = np.atleast_2d(np.asarray(vertices, dtype=float))
    x = np.asarray(x, dtype=float).ravel()
    if V.shape[1] != len(x):
        raise ValueError("ball and class dimensions differ")
    if not np.any(x):
        return 0.0
    if V.shape[1] == 1:
        pos, neg = V[V[:, 0] > 0, 0], V[V[:, 0] < 0, 0]
        if len(pos) == 0 or len(neg) == 0:
            raise ValueError("norm ball must contain 0 in its interior")
        return float(x[0] / pos.max()) if x[0] > 0 else float(x[0] / neg.min())
    from scipy.spatial import ConvexHull

    hull = ConvexHull(V)
    a, b = hull.equations[:, :-1], hull.equations[:, -1]
    if np.any(b >= 0):
        raise ValueError("norm ball must contain 0 in its interior")
    return float(np.max(a @ x / -b))


def ball_dual_vertices(vertices) -> np.ndarray:
    """Vertices of the dual ball; the norm is the maximum pairing with them."""
    V = np.atleast_2d(np.asarray(vertices, dtype=float))
    if V.shape[1] == 1:
        return np.array([[1.0 / V[:, 0].max()], [1.0 / V[:, 0].min()]])
    from scipy.spatial import ConvexHull

    hull = ConvexHull(V)
    a, b = hull.equations[:, :-1], hull.equations[:, -1]
    return np.unique(np.round(a / -b[:, None], 12), axis=0)


def _known_norms(source, basis: Optional[ImageBasis]) -> dict:
    """Ingested per-class norms keyed by image-basis coordinates.

    Mesh files key them by their own listed cocycles, which are translated
    through the basis when one is given.
    """
    known = dict(getattr(source, "class_norms", None) or {})
    cocycles = getattr(source, "cocycles", None)
    if not known or cocycles is None:
        return known
    if basis is None:
        return {}
    tet_edges = basis.complex_
    out = {}
    for key, val in known.items():
        z = sum(int(c) * np.asarray(cz, dtype=np.int64) for c, cz in zip(key, cocycles))
        coords = basis.coords_of(np.asarray(z)[tet_edges])
        if coords is not None and all(c.denominator == 1 for c in coords) and any(coords):
            out[tuple(int(c) for c in coords)] = val
    return out


def _in_span(vectors, x) -> bool:
    """Exact rational test of x in the span of integer vectors."""
    import sympy

    A = sympy.Matrix([list(v) for v in vectors]).T
    b = sympy.Matrix([sympy.Rational(c.numerator, c.denominator) for c in map(Fraction, x)])
    return A.rank() == A.row_join(b).rank()


def listed_classes(source, basis: ImageBasis) -> Optional[list[tuple[int, ...]]]:
    """Image-basis coordinates of the cocycles a mesh file lists (None if it lists none)."""
    cocycles = getattr(source, "cocycles", None)
    if not cocycles:
        return None
    out = []
    for z in cocycles:
        coords = basis.coords_of(np.asarray(z, dtype=np.int64)[basis.complex_])
        if coords is None or any(c.denominator != 1 for c in coords):
            raise ValueError("listed cocycle is not an integral image class")
        out.append(tuple(int(c) for c in coords))
    return out


def thurston_norm(cls: CohomologyClass, source, mesh=None, basis: Optional[ImageBasis] = None) -> NormValue:
    """Thurston norm of a class in image-basis coordinates.

    Ingested data (unit-ball vertices, or per-class values extended by
    homogeneity) is evaluated exactly.  Otherwise the chi_- of a dual surface
    on `mesh` is returned as an upper bound.
    """
    if cls.is_zero:
        return NormValue(0.0, "exact_zero")
    ball = getattr(source, "thurston_ball", None)
    if ball is not None:
        return NormValue(ball_gauge(ball, [float(c) for c in cls.coords]), "ingested")
    known = _known_norms(source, basis)
    if known:
        zeros = [k for k, v in known.items() if float(v) == 0.0]
        if zeros and _in_span(zeros, cls.coords):
            # the zero set of a seminorm is a subspace
            return NormValue(0.0, "ingested")
        # q * p with p primitive integral and listed
        from math import lcm

        den = lcm(*[c.denominator for c in cls.coords])
        m, p = cls.scaled(den).primitive()
        key = tuple(int(c) for c in p.coords)
        for sign in (1, -1):
            k = tuple(sign * c for c in key)
            if k in known:
                return NormValue(float(known[k]) * m / den, "ingested")
    if mesh is None or basis is None:
        raise ValueError("no ingested norm data; a mesh and image basis are needed for an upper bound")
    from math import lcm

    den = lcm(*[c.denominator for c in cls.coords])
    S = dual_surface(cls.scaled(den), mesh, basis)
    return NormValue(S.chi_minus / den, "upper_bound")
