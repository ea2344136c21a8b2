"""Discrete Hodge theory on metric meshes with Whitney forms.

A closed 1-cochain restricted to a tetrahedron is the differential of its
vertex potentials, so its Whitney interpolant is a constant vector there.
Harmonic representatives minimise the Whitney L^2 norm of phi + df over
0-cochains f; for the relative boundary condition f is constant on every
boundary component.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pyamg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .mesh import EDGE_IDX, FACE_VERTS, LOCAL_EDGES, MetricMesh

SOLVER_RTOL = 1e-10
# below this size a direct factorisation is cheaper than building a multigrid hierarchy
AMG_MIN_SIZE = 5000
QUADRATURE_ORDER = 4

# degree-2 rule with four interior points
_QA, _QB = 0.5854101966249685, 0.1381966011250105
QUAD_POINTS = np.array([[_QA, _QB, _QB, _QB], [_QB, _QA, _QB, _QB], [_QB, _QB, _QA, _QB], [_QB, _QB, _QB, _QA]])
QUAD_WEIGHTS = np.full(4, 0.25)


class SolverError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


# ----------------------------------------------------------------------------
# operators


def grad_gram(mesh: MetricMesh) -> np.ndarray:
    """(T, 4, 4) Gram matrices of the barycentric gradients."""
    if "ggram" in mesh._cache:
        return mesh._cache["ggram"]
    g = mesh.gram()
    inv = np.linalg.inv(g)
    G = np.empty((mesh.n_tets, 4, 4))
    G[:, 1:, 1:] = inv
    G[:, 0, 1:] = G[:, 1:, 0] = -inv.sum(axis=1)
    G[:, 0, 0] = inv.sum(axis=(1, 2))
    mesh._cache["ggram"] = G
    return G


def _cholesky_frames(mesh: MetricMesh) -> np.ndarray:
    """(T, 3, 3) lower-triangular L with g = L L^T; rows are edge vectors from vertex 0."""
    if "chol" not in mesh._cache:
        mesh._cache["chol"] = np.linalg.cholesky(mesh.gram())
    return mesh._cache["chol"]


def _scatter(rows, cols, vals, shape):
    return sp.csr_matrix((np.ravel(vals), (np.ravel(rows), np.ravel(cols))), shape=shape)


@dataclass
class DECOperators:
    d0: sp.csr_matrix
    d1: sp.csr_matrix
    d2: sp.csr_matrix
    M0: sp.csr_matrix
    M1: sp.csr_matrix
    M2: sp.csr_matrix


def coboundaries(mesh: MetricMesh):
    E, F, T = mesh.n_edges, mesh.n_faces, mesh.n_tets
    r = np.repeat(np.arange(E), 2)
    d0 = _scatter(r, mesh.edges.ravel(), np.tile([-1.0, 1.0], E), (E, mesh.n_vertices))
    r = np.repeat(np.arange(F), 3)
    d1 = _scatter(r, mesh.face_edges.ravel(), np.tile([1.0, -1.0, 1.0], F), (F, E))
    r = np.repeat(np.arange(T), 4)
    d2 = _scatter(r, mesh.tet_faces.ravel(), np.tile([1.0, -1.0, 1.0, -1.0], T), (T, F))
    return d0, d1, d2


def _lambda_integrals(vol):
    I = np.full((len(vol), 4, 4), 1.0) + np.eye(4)
    return I * (vol / 20.0)[:, None, None]


def dec_operators(mesh: MetricMesh) -> DECOperators:
    """Coboundaries and Whitney-form Galerkin mass matrices."""
    mesh.check_cells()
    d0, d1, d2 = coboundaries(mesh)
    vol = mesh.volumes()
    G = grad_gram(mesh)
    I = _lambda_integrals(vol)
    T = mesh.n_tets
    # 0-forms
    M0 = _scatter(
        np.repeat(mesh.tets, 4, axis=1), np.tile(mesh.tets, (1, 4)), I.reshape(T, 16), (mesh.n_vertices,) * 2
    )
    # 1-forms: W_ab = la grad lb - lb grad la
    loc1 = np.empty((T, 6, 6))
    for p, (a, b) in enumerate(LOCAL_EDGES):
        for q, (c, d) in enumerate(LOCAL_EDGES):
            loc1[:, p, q] = (
                G[:, b, d] * I[:, a, c] - G[:, b, c] * I[:, a, d] - G[:, a, d] * I[:, b, c] + G[:, a, c] * I[:, b, d]
            )
    M1 = _scatter(
        np.repeat(mesh.tet_edges, 6, axis=1), np.tile(mesh.tet_edges, (1, 6)), loc1.reshape(T, 36), (mesh.n_edges,) * 2
    )

    # 2-forms: W_abc = 2 (la gb x gc - lb ga x gc + lc ga x gb)
    def cross_dot(a, b, c, d):
        return G[:, a, c] * G[:, b, d] - G[:, a, d] * G[:, b, c]

    def terms(face):
        a, b, c = face
        return [(a, b, c, 1.0), (b, a, c, -1.0), (c, a, b, 1.0)]

    faces = [FACE_VERTS[l] for l in range(4)]
    loc2 = np.zeros((T, 4, 4))
    for p, f1 in enumerate(faces):
        for q, f2 in enumerate(faces):
            acc = np.zeros(T)
            for (x, y1, z1, s1) in terms(f1):
                for (w, y2, z2, s2) in terms(f2):
                    acc += s1 * s2 * I[:, x, w] * cross_dot(y1, z1, y2, z2)
            loc2[:, p, q] = 4.0 * acc
    M2 = _scatter(
        np.repeat(mesh.tet_faces, 4, axis=1), np.tile(mesh.tet_faces, (1, 4)), loc2.reshape(T, 16), (mesh.n_faces,) * 2
    )
    return DECOperators(d0, d1, d2, M0, M1, M2)


def stiffness(mesh: MetricMesh) -> sp.csr_matrix:
    """P1 stiffness d0^T M1 d0, assembled cell by cell."""
    G = grad_gram(mesh) * mesh.volumes()[:, None, None]
    T = mesh.n_tets
    return _scatter(np.repeat(mesh.tets, 4, axis=1), np.tile(mesh.tets, (1, 4)), G.reshape(T, 16), (mesh.n_vertices,) * 2)


# ----------------------------------------------------------------------------
# forms


@dataclass
class DiscreteOneForm:
    edge_values: np.ndarray
    class_coords: Optional[tuple] = None
    bc: str = "relative"
    truncation_height: Optional[float] = None
    cocycle: Optional[np.ndarray] = None  # integral part phi on edges
    potential: Optional[np.ndarray] = None  # f on vertices (form = phi + df)
    tet_potentials: Optional[np.ndarray] = None  # (T, 4) integer potentials of phi times mesh.denom
    residual: float = 0.0
    meta: dict = field(default_factory=dict)

    def scaled(self, s: float) -> "DiscreteOneForm":
        return DiscreteOneForm(
            self.edge_values * s,
            None if self.class_coords is None else tuple(s * c for c in self.class_coords),
            self.bc,
            self.truncation_height,
            None if self.cocycle is None else self.cocycle * s,
            None if self.potential is None else self.potential * s,
            None if self.tet_potentials is None else self.tet_potentials * s,
            self.residual,
            dict(self.meta),
        )


def cell_vectors(mesh: MetricMesh, edge_values: np.ndarray) -> np.ndarray:
    """Per-cell vector of a closed cochain in the Cholesky frame (T, 3)."""
    a = edge_values[mesh.tet_edges[:, :3]]
    L = _cholesky_frames(mesh)
    return np.linalg.solve(L, a[..., None])[..., 0]


def _pointwise_sq(mesh: MetricMesh, c: np.ndarray) -> np.ndarray:
    """|alpha|^2 of the Whitney interpolant at the quadrature points (T, 4)."""
    G = grad_gram(mesh)
    vals = c[mesh.tet_edges]  # (T, 6)
    out = np.empty((mesh.n_tets, len(QUAD_POINTS)))
    for q, lam in enumerate(QUAD_POINTS):
        w = np.zeros((mesh.n_tets, 4))
        for k, (a, b) in enumerate(LOCAL_EDGES):
            w[:, b] += vals[:, k] * lam[a]
            w[:, a] -= vals[:, k] * lam[b]
        out[:, q] = np.einsum("ti,tij,tj->t", w, G, w)
    return np.clip(out, 0, None)


@dataclass
class NormBundle:
    l2: float
    l1: float
    linf: float
    l1_min: Optional[float] = None
    quadrature_points: int = QUADRATURE_ORDER

    def as_dict(self) -> dict:
        return {"l2": self.l2, "l1": self.l1, "linf": self.linf, "l1_min": self.l1_min, "quadrature_points": self.quadrature_points}


def norms(form, mesh: MetricMesh, M1: Optional[sp.spmatrix] = None) -> NormBundle:
    c = form.edge_values if isinstance(form, DiscreteOneForm) else np.asarray(form, dtype=float)
    if M1 is None:
        M1 = dec_operators(mesh).M1
    l2 = math.sqrt(max(float(c @ (M1 @ c)), 0.0))
    pw = np.sqrt(_pointwise_sq(mesh, c))
    vol = mesh.volumes()
    l1 = float(np.sum(vol * (pw @ QUAD_WEIGHTS)))
    return NormBundle(l2=l2, l1=l1, linf=float(pw.max()) if len(pw) else 0.0)


def pointwise_norms(mesh: MetricMesh, form: DiscreteOneForm) -> np.ndarray:
    return np.sqrt(_pointwise_sq(mesh, form.edge_values)).ravel()


def constant_length_cv(mesh: MetricMesh, form: DiscreteOneForm) -> float:
    """Volume-weighted coefficient of variation of |alpha| over quadrature points."""
    pw = np.sqrt(_pointwise_sq(mesh, form.edge_values))
    w = (mesh.volumes()[:, None] * QUAD_WEIGHTS[None, :]).ravel()
    x = pw.ravel()
    mean = np.sum(w * x) / np.sum(w)
    if mean == 0:
        return 0.0
    return float(math.sqrt(np.sum(w * (x - mean) ** 2) / np.sum(w)) / mean)


# ----------------------------------------------------------------------------
# harmonic representatives


def _unknown_map(mesh: MetricMesh, bc: str) -> tuple[np.ndarray, int]:
    """Vertex -> unknown index (-1 for pinned vertices) and unknown count."""
    nV = mesh.n_vertices
    idx = np.full(nV, -2, dtype=np.int64)
    comps = mesh.boundary_components() if len(mesh.boundary_faces) else []
    if bc == "relative" and comps:
        idx[comps[0]] = -1
        n = 0
        for comp in comps[1:]:
            idx[comp] = n
            n += 1
        free = np.nonzero(idx == -2)[0]
        idx[free] = n + np.arange(len(free))
        return idx, n + len(free)
    if bc not in ("relative", "absolute"):
        raise ValueError(f"unknown boundary condition {bc!r}")
    idx[0] = -1
    idx[1:] = np.arange(nV - 1)
    return idx, nV - 1


def _reduce(mesh: MetricMesh, bc: str):
    idx, n = _unknown_map(mesh, bc)
    keep = idx >= 0
    P = sp.csr_matrix((np.ones(keep.sum()), (np.nonzero(keep)[0], idx[keep])), shape=(mesh.n_vertices, n))
    return P, n


def _spd_solve(A: sp.spmatrix, b: np.ndarray, rtol: float = SOLVER_RTOL) -> tuple[np.ndarray, float]:
    n = A.shape[0]
    if n == 0:
        return np.zeros(0), 0.0
    nb = float(np.linalg.norm(b))
    if nb == 0:
        return np.zeros(n), 0.0
    A = sp.csr_matrix(A)
    x, res = np.zeros(n), 1.0
    if n > AMG_MIN_SIZE:
        ml = pyamg.smoothed_aggregation_solver(A)
        x = ml.solve(b, tol=0.01 * rtol, maxiter=500, accel="cg")
        res = float(np.linalg.norm(A @ x - b)) / nb
    if res > rtol:
        lu = splu(sp.csc_matrix(A))
        x = lu.solve(b)
        res = float(np.linalg.norm(A @ x - b)) / nb
        it = 0
        while res > rtol and it < 20:
            x = x + lu.solve(b - A @ x)
            res = float(np.linalg.norm(A @ x - b)) / nb
            it += 1
    if res > rtol:
        raise SolverError("linear solve did not reach the requested tolerance", res)
    return x, res


def per_tet_cocycle(mesh: MetricMesh, tet_potentials: np.ndarray) -> np.ndarray:
    return mesh.cochain_from_potentials(tet_potentials)


def harmonic_from_cocycle(
    mesh: MetricMesh,
    phi: np.ndarray,
    bc: str = "relative",
    class_coords=None,
    tet_potentials: Optional[np.ndarray] = None,
    rtol: float = SOLVER_RTOL,
) -> DiscreteOneForm:
    """Minimise the L^2 norm of phi + df over admissible 0-cochains f."""
    phi = np.asarray(phi, dtype=float)
    K = stiffness(mesh)
    # load: the cell gradient of phi paired with every barycentric gradient
    a = np.zeros((mesh.n_tets, 4))
    a[:, 1:] = phi[mesh.tet_edges[:, :3]]
    G = grad_gram(mesh) * mesh.volumes()[:, None, None]
    loc = np.einsum("tij,tj->ti", G, a)
    B = np.bincount(mesh.tets.ravel(), weights=loc.ravel(), minlength=mesh.n_vertices)
    P, n = _reduce(mesh, bc)
    A = (P.T @ K @ P).tocsr()
    rhs = -(P.T @ B)
    x, res = _spd_solve(A, rhs, rtol)
    f = P @ x
    _, d0 = None, coboundaries(mesh)[0]
    values = phi + d0 @ f
    return DiscreteOneForm(
        edge_values=values,
        class_coords=None if class_coords is None else tuple(class_coords),
        bc=bc,
        truncation_height=mesh.truncation,
        cocycle=phi,
        potential=f,
        tet_potentials=tet_potentials,
        residual=res,
    )


def harmonic_representative(basis, coords, mesh: MetricMesh, bc: str = "relative", rtol: float = SOLVER_RTOL) -> DiscreteOneForm:
    """Harmonic form of the class with the given image-basis coordinates."""
    coords = tuple(coords)
    U = integer_tet_potentials(basis, coords, mesh)
    phi = mesh.cochain_from_potentials(U)
    if not np.any(phi):
        zero = np.zeros(mesh.n_edges)
        return DiscreteOneForm(zero, coords, bc, mesh.truncation, zero, np.zeros(mesh.n_vertices), U, 0.0)
    return harmonic_from_cocycle(mesh, phi, bc, coords, U, rtol)


def integer_tet_potentials(basis, coords, mesh: MetricMesh) -> np.ndarray:
    """Per-tet vertex potentials (times mesh.denom) of an integral cocycle in the class.

    Rational coordinates are handled by scaling: the returned array is then a
    float array representing the rational cocycle.
    """
    from fractions import Fraction

    from .cohomology import per_tet_potentials

    fr = [Fraction(c) for c in coords]
    den = math.lcm(*[c.denominator for c in fr]) if fr else 1
    rep = basis.integer_representative([c * den for c in fr]) if fr else np.zeros((0, 6), dtype=np.int64)
    U = mesh.pull_back(per_tet_potentials(rep))
    return U if den == 1 else U / den


def dirichlet_harmonic(mesh: MetricMesh, fixed: dict[int, float], rtol: float = SOLVER_RTOL) -> np.ndarray:
    """Harmonic 0-cochain with the prescribed vertex values."""
    K = stiffness(mesh).tocsr()
    nV = mesh.n_vertices
    fixed_idx = np.array(sorted(fixed), dtype=np.int64)
    fixed_val = np.array([fixed[i] for i in fixed_idx])
    free = np.setdiff1d(np.arange(nV), fixed_idx)
    A = K[free][:, free]
    rhs = -(K[free][:, fixed_idx] @ fixed_val)
    x, _ = _spd_solve(A, rhs, rtol)
    f = np.zeros(nV)
    f[fixed_idx] = fixed_val
    f[free] = x
    return f


def first_order_residual(mesh: MetricMesh, form: DiscreteOneForm, g: np.ndarray, M1=None) -> float:
    """Derivative of ||form + t dg||^2 at t = 0, relative to ||form||^2."""
    d0 = coboundaries(mesh)[0]
    if M1 is None:
        M1 = dec_operators(mesh).M1
    c = form.edge_values
    dg = d0 @ g
    den = float(c @ (M1 @ c)) or 1.0
    return float(2 * c @ (M1 @ dg)) / den


# ----------------------------------------------------------------------------
# L^1 minimisation


def l1_minimize(mesh: MetricMesh, phi: np.ndarray, bc: str = "relative", solver: str = "CLARABEL") -> tuple[float, np.ndarray]:
    """Minimise sum_cells vol |phi + df| over admissible f (a second-order cone program).

    Cells carry constant vectors, so the pointwise norm is exact and each cell
    contributes one cone constraint.  Returns (value, minimising cochain).
    """
    import cvxpy as cp

    phi = np.asarray(phi, dtype=float)
    if not np.any(phi):
        return 0.0, np.zeros(mesh.n_edges)
    T = mesh.n_tets
    L = _cholesky_frames(mesh)
    Linv = np.linalg.inv(L)  # (T, 3, 3)
    P, n = _reduce(mesh, bc)
    # cell vector = Linv (u_j - u_0)_{j=1..3} with u = f on the tet's vertices
    rows, cols, vals = [], [], []
    for r in range(3):
        for j in range(3):
            w = Linv[:, r, j]
            rows += [np.arange(T) * 3 + r] * 2
            cols += [mesh.tets[:, j + 1], mesh.tets[:, 0]]
            vals += [w, -w]
    D = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(3 * T, mesh.n_vertices))
    A = (D @ P).tocsr()
    c0 = np.einsum("trj,tj->tr", Linv, phi[mesh.tet_edges[:, :3]]).ravel()
    vol = mesh.volumes()
    if n == 0:
        return float(vol @ np.linalg.norm(c0.reshape(T, 3), axis=1)), phi.copy()
    x = cp.Variable(n)
    t = cp.Variable(T)
    X = cp.reshape(A @ x + c0, (T, 3), order="C")
    prob = cp.Problem(cp.Minimize(vol @ t), [cp.SOC(t, X, axis=1)])
    prob.solve(solver=solver)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"L1 minimisation ended with status {prob.status}")
    f = P @ np.asarray(x.value).ravel()
    d0 = coboundaries(mesh)[0]
    return float(prob.value), phi + d0 @ f


# ----------------------------------------------------------------------------
# flux through level surfaces


def _tet_embedding(mesh: MetricMesh) -> np.ndarray:
    L = _cholesky_frames(mesh)
    X = np.zeros((mesh.n_tets, 4, 3))
    X[:, 1:, :] = L
    return X


def _polygon_area(pts: np.ndarray) -> float:
    c = pts.mean(axis=0)
    area = 0.0
    for k in range(len(pts)):
        area += 0.5 * np.linalg.norm(np.cross(pts[k] - c, pts[(k + 1) % len(pts)] - c))
    return area


def harmonic_surface(form: "DiscreteOneForm", mesh: MetricMesh, level: float = 0.5, topology: bool = False):
    """Level surface {u + f in level + Z} of the form's multivalued harmonic potential.

    It is dual to the form's class, so the flux of *alpha through it equals
    ||alpha||^2 in the continuum.
    """
    from .cohomology import level_surface

    if form.tet_potentials is None or form.potential is None:
        raise ValueError("form carries no potential decomposition")
    return level_surface(mesh, form.tet_potentials, form.potential, level, form.class_coords, topology)


@dataclass
class FluxResult:
    l2_squared: float
    surface_integral: float

    @property
    def discrepancy(self) -> float:
        if self.l2_squared == 0:
            return 0.0 if self.surface_integral == 0 else math.inf
        return abs(self.l2_squared - self.surface_integral) / self.l2_squared


def surface_flux(mesh: MetricMesh, form: DiscreteOneForm, pieces) -> float:
    """Integral of *alpha over oriented polygon pieces."""
    vec = cell_vectors(mesh, form.edge_values)
    total = 0.0
    for t, pts, normal in pieces:
        total += float(vec[t] @ normal) * _polygon_area(pts)
    return total


def flux_check(form: DiscreteOneForm, surface, mesh: MetricMesh, M1=None) -> FluxResult:
    """(||alpha||^2, integral of *alpha over the surface)."""
    if surface.class_coords is not None and form.class_coords is not None:
        if tuple(surface.class_coords) != tuple(form.class_coords):
            raise ValueError("surface and form represent different classes")
    if M1 is None:
        M1 = dec_operators(mesh).M1
    c = form.edge_values
    return FluxResult(float(c @ (M1 @ c)), surface_flux(mesh, form, surface.pieces))


# ----------------------------------------------------------------------------
# truncation sweep


@dataclass
class SweepResult:
    extrapolated: float
    values: list[float]
    heights: list[float]
    fit_residual: Optional[float]
    extrapolated_flag: bool
    B: Optional[float] = None


def truncation_sweep(heights, values, lambda1: float) -> SweepResult:
    """Fit ||alpha||(T) = A - B exp(-2 lambda1 e^T) to values computed at heights T."""
    heights = [float(h) for h in heights]
    values = [float(v) for v in values]
    if any(b <= a for a, b in zip(heights, heights[1:])):
        raise ValueError("heights must be strictly increasing")
    if len(heights) == 1:
        return SweepResult(values[0], values, heights, None, False)
    x = np.exp(-2.0 * lambda1 * np.exp(np.array(heights)))
    diffs = np.diff(values)
    if not (np.all(diffs >= -1e-12) or np.all(diffs <= 1e-12)):
        warnings.warn("truncation sweep values are not monotone; returning the last value")
        return SweepResult(values[-1], values, heights, None, False)
    A_mat = np.column_stack([np.ones_like(x), -x])
    coef, *_ = np.linalg.lstsq(A_mat, np.array(values), rcond=None)
    resid = float(np.linalg.norm(A_mat @ coef - values))
    return SweepResult(float(coef[0]), values, heights, resid, True, float(coef[1]))
