"""Constants, both sides of the norm inequalities, D functionals and diagnostics.

For a class alpha in the image subspace the two-sided bound reads

    (pi / sqrt(vol)) ||alpha||_Th  <=  ||alpha||_L2  <=  C ||alpha||_Th,

with C = max{10 pi / sqrt(sys), 4.86 pi sqrt(1 + d^2 / 2)} for cusped M (d the
largest cusp-torus diameter) and C = 10 pi / sqrt(inj) for closed M.  The
lower bound is proved through the chain pi Th <= ||.||_L1 <= sqrt(vol) ||.||_L2,
which the report checks term by term.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

# series below this radius (relative error of the truncation < 1e-12)
V_SERIES_CUTOFF = 0.1
_V_SERIES = (4 / 3, -4 / 15, 8 / 175, -4 / 567, 5528 / 5457375)

CV_HYPERBOLIC_MIN = 1e-3  # report heuristic for "not constant length"
# l1_min comes from an interior-point conic solve; comparisons allow its accuracy
L1_RTOL = 1e-6


# ----------------------------------------------------------------------------
# v(r) and the mean-value bound


def v_of_r(r: float) -> float:
    """6 pi (r + 2 r csch^2 r - coth r (r^2 csch^2 r + 1)) for r > 0."""
    r = float(r)
    if not r > 0:
        raise ValueError("v(r) needs r > 0")
    if r < V_SERIES_CUTOFF:
        return math.pi * sum(c * r ** (2 * k + 3) for k, c in enumerate(_V_SERIES))
    csch2 = 1.0 / math.sinh(r) ** 2
    return 6 * math.pi * (r + 2 * r * csch2 - (r * r * csch2 + 1) / math.tanh(r))


@dataclass(frozen=True)
class TestFunction:
    """A harmonic function on upper half-space and its Euclidean gradient."""

    name: str
    f: Callable
    grad: Callable


def _mode_function(m: int, n: int, phase: str) -> TestFunction:
    from scipy import special

    lam = 2 * math.pi * math.hypot(m, n)
    trig = np.cos if phase == "cos" else np.sin
    dtrig = (lambda t: -np.sin(t)) if phase == "cos" else np.cos

    def f(x, y, z):
        t = 2 * math.pi * (m * x + n * y)
        return z * special.k1(lam * z) * trig(t)

    def grad(x, y, z):
        t = 2 * math.pi * (m * x + n * y)
        g = z * special.k1(lam * z)
        gp = -lam * z * special.k0(lam * z)
        d = dtrig(t) * 2 * math.pi
        return np.stack(np.broadcast_arrays(g * d * m, g * d * n, gp * trig(t)))

    return TestFunction(f"mode_{m}_{n}_{phase}", f, grad)


def _catalog() -> dict[str, TestFunction]:
    cat = {}
    for m, n, ph in [(1, 0, "cos"), (0, 1, "sin"), (1, 1, "cos"), (2, 0, "sin"), (2, 1, "cos")]:
        t = _mode_function(m, n, ph)
        cat[t.name] = t
    zero = lambda x, y, z: np.zeros_like(np.asarray(x * 1.0 + y * 0.0 + z * 0.0))  # noqa: E731
    cat["x"] = TestFunction("x", lambda x, y, z: np.asarray(x, float) + 0 * z, lambda x, y, z: np.stack(np.broadcast_arrays(1.0 + 0 * z, zero(x, y, z), zero(x, y, z))))
    cat["z_squared"] = TestFunction("z_squared", lambda x, y, z: np.asarray(z, float) ** 2 + 0 * x, lambda x, y, z: np.stack(np.broadcast_arrays(zero(x, y, z), zero(x, y, z), 2.0 * z + 0 * x)))
    cat["x2_minus_y2"] = TestFunction(
        "x2_minus_y2",
        lambda x, y, z: np.asarray(x, float) ** 2 - np.asarray(y, float) ** 2 + 0 * z,
        lambda x, y, z: np.stack(np.broadcast_arrays(2.0 * x + 0 * z, -2.0 * y + 0 * z, zero(x, y, z))),
    )
    cat["constant"] = TestFunction("constant", lambda x, y, z: 1.0 + zero(x, y, z), lambda x, y, z: np.stack([zero(x, y, z)] * 3))
    return cat


HARMONIC_CATALOG = _catalog()


@dataclass
class MeanValueCheck:
    function: str
    center: tuple[float, float, float]
    r: float
    lhs: float
    rhs: float
    ball_norm: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12)


def hyperbolic_ball_energy(fn: TestFunction, center, r: float, order: int = 24) -> float:
    """int_B |df|^2 dvol over the hyperbolic ball of radius r about center.

    In upper half-space the ball is the Euclidean ball with centre
    (x0, y0, z0 cosh r) and radius z0 sinh r, and |df|^2 dvol = |grad f|^2 / z dx dy dz.
    Gauss-Legendre product quadrature in spherical coordinates.
    """
    x0, y0, z0 = (float(c) for c in center)
    cz, R = z0 * math.cosh(r), z0 * math.sinh(r)
    gr, wr = np.polynomial.legendre.leggauss(order)
    rho = 0.5 * R * (gr + 1)
    wrho = 0.5 * R * wr
    gt, wt = np.polynomial.legendre.leggauss(order)  # cos(theta) in [-1, 1]
    nphi = 2 * order
    phi = 2 * math.pi * np.arange(nphi) / nphi
    P, T, F = np.meshgrid(rho, gt, phi, indexing="ij")
    W = wrho[:, None, None] * wt[None, :, None] * (2 * math.pi / nphi) * P**2
    st = np.sqrt(1 - T**2)
    x = x0 + P * st * np.cos(F)
    y = y0 + P * st * np.sin(F)
    z = cz + P * T
    g = fn.grad(x, y, z)
    dens = np.sum(g * g, axis=0) / z
    return float(np.sum(W * dens))


def mean_value_bound_check(function_id: str, center, r: float, order: int = 24) -> MeanValueCheck:
    """|df_p| against ||df||_{L2(B(p, r))} / sqrt(v(r)) for a catalog harmonic function."""
    if function_id not in HARMONIC_CATALOG:
        raise KeyError(f"unknown test function {function_id!r}")
    fn = HARMONIC_CATALOG[function_id]
    x0, y0, z0 = (float(c) for c in center)
    g = fn.grad(np.array(x0), np.array(y0), np.array(z0))
    lhs = z0 * float(np.linalg.norm(g))
    E = hyperbolic_ball_energy(fn, center, r, order)
    rhs = math.sqrt(E / v_of_r(r))
    return MeanValueCheck(function_id, (x0, y0, z0), float(r), lhs, rhs, math.sqrt(E))


# ----------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class RHSConstants:
    main: float
    linf: float
    branch: str  # "systole" | "diameter" | "closed"
    systole: float
    diameter: Optional[float]


def rhs_constants_from(sys: float, d: Optional[float] = None, closed: bool = False) -> RHSConstants:
    if not sys > 0:
        raise ValueError("systole (or injectivity radius) must be positive")
    if closed:
        return RHSConstants(10 * math.pi / math.sqrt(sys), 5 / math.sqrt(sys), "closed", sys, None)
    s_main, s_inf = 10 * math.pi / math.sqrt(sys), 5 / math.sqrt(sys)
    q = math.sqrt(1 + d * d / 2)
    d_main, d_inf = 4.86 * math.pi * q, 2.43 * q
    branch = "systole" if s_main >= d_main else "diameter"
    return RHSConstants(max(s_main, d_main), max(s_inf, d_inf), branch, sys, d)


def rhs_constants(M) -> RHSConstants:
    """Right-hand constants for a cusped manifold or a closed mesh source."""
    cusps = getattr(M, "cusps", None)
    if cusps:
        return rhs_constants_from(M.systole, max(c.diameter for c in cusps))
    inj = getattr(M, "injectivity_radius", None)
    if inj is None:
        raise ValueError("closed source needs an ingested injectivity radius")
    return rhs_constants_from(inj, closed=True)


# ----------------------------------------------------------------------------
# the report


@dataclass
class ClassRecord:
    coords: tuple
    thurston: float
    provenance: str
    l2: float
    l1: Optional[float] = None
    l1_min: Optional[float] = None
    linf: Optional[float] = None
    cv: Optional[float] = None
    error_budget: float = 0.0
    budget_terms: dict = field(default_factory=dict)


@dataclass
class InequalityEntry:
    coords: tuple
    skipped: bool
    left_bound: float
    right_bound: float
    left_slack: float
    right_slack: float
    left_holds: bool
    right_holds: bool
    left_strict: bool
    chain_lower: Optional[bool]  # pi Th <= l1_min
    chain_upper: Optional[bool]  # l1_min <= sqrt(vol) l2
    flux_bound: Optional[bool]  # l2^2 <= 2 pi linf Th
    chain_note: str
    control_case: Optional[str]
    violated: list[str]

    def as_dict(self) -> dict:
        return asdict(self)


def main_inequality_report(vol: float, constants: RHSConstants, records: Sequence[ClassRecord], hyperbolic: bool = True) -> list[InequalityEntry]:
    """Slacks and chain checks for each class record."""
    out = []
    for rec in records:
        if rec.l2 is None or (isinstance(rec.l2, float) and math.isnan(rec.l2)):
            raise ValueError("missing L2 norm")
        zero = all(float(c) == 0 for c in rec.coords)
        if zero:
            out.append(InequalityEntry(tuple(rec.coords), True, 0.0, 0.0, 0.0, 0.0, True, True, False, None, None, None, "zero class", None, []))
            continue
        th = float(rec.thurston)
        left = math.pi * th / math.sqrt(vol)
        right = constants.main * th
        ls, rs = rec.l2 - left, right - rec.l2
        exact = rec.provenance in ("ingested", "exact_zero")
        if exact and rec.l1_min is not None:
            lower = math.pi * th <= rec.l1_min * (1 + L1_RTOL)
            upper = rec.l1_min <= math.sqrt(vol) * rec.l2 * (1 + L1_RTOL)
            note = "checked"
        else:
            lower = upper = None
            note = "skipped: Thurston value is only an upper bound" if not exact else "skipped: no L1 minimum"
        flux = None
        if exact and rec.linf is not None:
            flux = rec.l2**2 <= 2 * math.pi * rec.linf * th
        violated = [side for side, ok in (("left", ls >= 0), ("right", rs >= 0)) if not ok]
        control = None
        if not hyperbolic:
            control = "non-hyperbolic control case"
        out.append(
            InequalityEntry(
                coords=tuple(str(c) for c in rec.coords),
                skipped=False,
                left_bound=left,
                right_bound=right,
                left_slack=ls,
                right_slack=rs,
                left_holds=ls >= 0,
                right_holds=rs >= 0,
                left_strict=ls > rec.error_budget,
                chain_lower=lower,
                chain_upper=upper,
                flux_bound=flux,
                chain_note=note,
                control_case=control,
                violated=violated,
            )
        )
    return out


# ----------------------------------------------------------------------------
# D functionals


@dataclass
class DValues:
    Di: float
    Ds: float
    argmin: np.ndarray
    argmax: np.ndarray
    method: str
    resolution: Optional[int] = None


def functionals_DiDs(
    vol: float,
    gram: np.ndarray,
    ball: Optional[np.ndarray] = None,
    norm: Optional[Callable[[np.ndarray], float]] = None,
    samples: int = 4096,
) -> DValues:
    """D_i, D_s = (pi / sqrt(vol)) * (min, max) of Th over the L2-unit ellipsoid x^T G x = 1.

    With unit-ball vertices the extremes are exact: the minimum of the gauge
    is 1 / max_v sqrt(v^T G v) over ball vertices, the maximum is
    max_a sqrt(a^T G^-1 a) over dual-ball vertices.  Otherwise Th is sampled
    on the ellipsoid (the resolution is recorded; nothing is claimed exact).
    """
    G = np.atleast_2d(np.asarray(gram, dtype=float))
    n = G.shape[0]
    if n == 0:
        raise ValueError("no L2 harmonic forms")
    s = math.pi / math.sqrt(vol)
    if ball is not None:
        from .cohomology import ball_dual_vertices

        V = np.atleast_2d(np.asarray(ball, dtype=float))
        A = ball_dual_vertices(V)
        gv = np.sqrt(np.einsum("ki,ij,kj->k", V, G, V))
        Gi = np.linalg.inv(G)
        ga = np.sqrt(np.einsum("ki,ij,kj->k", A, Gi, A))
        kmin, kmax = int(np.argmax(gv)), int(np.argmax(ga))
        xmin = V[kmin] / gv[kmin]
        if n == 1:
            # one ray: min and max coincide, so compute them once
            return DValues(s / gv[kmin], s / gv[kmin], xmin, xmin, "ball vertices")
        xmax = Gi @ A[kmax] / ga[kmax]
        return DValues(s / gv[kmin], s * ga[kmax], xmin, xmax, "ball vertices")
    if norm is None:
        raise ValueError("a Thurston norm (ball or evaluator) is required")
    L = np.linalg.cholesky(G)
    Linv_T = np.linalg.inv(L).T  # x = L^-T u maps the unit sphere onto the ellipsoid
    if n == 1:
        x = Linv_T @ np.array([1.0])
        v = norm(x)
        return DValues(s * v, s * v, x, x, "single ray")
    U = _sphere_points(n, samples)
    X = U @ Linv_T.T
    vals = np.array([norm(x) for x in X])
    i, j = int(np.argmin(vals)), int(np.argmax(vals))
    return DValues(s * vals[i], s * vals[j], X[i], X[j], "sampling", samples)


def _sphere_points(n: int, k: int) -> np.ndarray:
    if n == 2:
        t = 2 * math.pi * np.arange(k) / k
        return np.column_stack([np.cos(t), np.sin(t)])
    if n == 3:
        i = np.arange(k) + 0.5
        phi = np.arccos(1 - 2 * i / k)
        th = math.pi * (1 + 5**0.5) * i
        return np.column_stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)])
    rng = np.random.default_rng(0)
    P = rng.normal(size=(k, n))
    return P / np.linalg.norm(P, axis=1, keepdims=True)


# ----------------------------------------------------------------------------
# diagnostics


@dataclass
class SharpnessRecord:
    cv: float
    constant_length: bool
    varying_length: bool  # cv above the hyperbolic heuristic threshold
    l1_over_pi_th: Optional[float]
    l1_over_2pi_th: Optional[float]
    sandwich: str  # "inside" | "outside" | "inconclusive"
    left_strict: Optional[bool]


def sharpness_diagnostics(cv: float, thurston: float, provenance: str, l1_min: Optional[float], left_strict: Optional[bool] = None, tol: float = 1e-10) -> SharpnessRecord:
    """Constant-length diagnostic and the position of l1_min in [pi Th, 2 pi Th]."""
    if provenance not in ("ingested", "exact_zero") or l1_min is None or thurston == 0:
        return SharpnessRecord(cv, cv < tol, cv > CV_HYPERBOLIC_MIN, None, None, "inconclusive", left_strict)
    a = l1_min / (math.pi * thurston)
    b = l1_min / (2 * math.pi * thurston)
    inside = a >= 1 - L1_RTOL
    return SharpnessRecord(cv, cv < tol, cv > CV_HYPERBOLIC_MIN, a, b, "inside" if inside else "outside", left_strict)


@dataclass
class CoverScaling:
    degree: int
    base_coords: tuple
    cover_coords: tuple
    l2_ratio: float
    l2_ratio_over_sqrt_degree: float
    thurston_ratio: Optional[float]
    d_quotient_ratio: Optional[float]


def cover_scaling_check(
    degree: int,
    matrix,
    base_coords,
    base_l2: float,
    cover_l2: float,
    base_vol: float,
    cover_vol: float,
    base_th: Optional[float] = None,
    cover_th: Optional[float] = None,
) -> CoverScaling:
    """Compare a base class with its pullback (cover coordinates = matrix @ base coordinates)."""
    if matrix is None:
        raise ValueError("cover correspondence missing")
    Mx = np.atleast_2d(np.asarray(matrix, dtype=np.int64))
    cov = tuple(int(v) for v in Mx @ np.asarray([int(c) for c in base_coords], dtype=np.int64))
    ratio = cover_l2 / base_l2
    th_ratio = dq = None
    if base_th is not None and cover_th is not None and base_th > 0:
        th_ratio = cover_th / base_th
        d_base = math.pi * base_th / (math.sqrt(base_vol) * base_l2)
        d_cover = math.pi * cover_th / (math.sqrt(cover_vol) * cover_l2)
        dq = d_cover / d_base
    return CoverScaling(int(degree), tuple(int(c) for c in base_coords), cov, ratio, ratio / math.sqrt(degree), th_ratio, dq)
