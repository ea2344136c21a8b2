"""Global geometric invariants of an ideal triangulation.

Volume via the Lobachevsky function, cusp cross-section data, the truncation
constants of the compact core, the Margulis constant, and the developing map
of each cusp link (used to place horospheres when meshing).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import zeta

from . import lattice
from .manifold_io import CuspData, TriangulatedManifold, ValidationError

MARGULIS_MU = 0.29
LOBACHEVSKY_TERM_TOL = 1e-12

_ZETA_TERMS = None


def _lob_coeffs():
    global _ZETA_TERMS
    if _ZETA_TERMS is None:
        ks = np.arange(1, 80)
        c = zeta(2.0 * ks) / (ks * (2 * ks + 1)) / np.pi ** (2 * ks)
        _ZETA_TERMS = (ks, c)
    return _ZETA_TERMS


def lobachevsky(theta):
    """Lobachevsky function  -int_0^theta log|2 sin t| dt.

    Uses the expansion theta(1 - log|2 theta|) + sum_k zeta(2k)/(k(2k+1)) theta^(2k+1)/pi^(2k)
    after reducing theta to [-pi/2, pi/2] (the function is pi-periodic and odd).
    Terms are summed until they drop below 1e-12; the ratio of consecutive terms
    is at most 1/4 there, so the remainder is below the last term.
    """
    th = np.asarray(theta, dtype=float)
    x = th - np.pi * np.round(th / np.pi)
    ks, coeffs = _lob_coeffs()
    out = np.zeros_like(x)
    nz = x != 0
    xs = x[nz]
    val = xs * (1.0 - np.log(2.0 * np.abs(xs)))
    power = xs.copy()
    x2 = xs * xs
    for c in coeffs:
        power = power * x2
        term = c * power
        val = val + term
        if np.all(np.abs(term) < LOBACHEVSKY_TERM_TOL):
            break
    out[nz] = val
    return out if out.ndim else float(out)


def ideal_tet_volume(z: complex) -> float:
    if not z.imag > 0:
        raise ValueError(f"shape {z} must have positive imaginary part")
    angles = [np.angle(z), np.angle(1 / (1 - z)), np.angle((z - 1) / z)]
    return float(np.sum(lobachevsky(np.array(angles))))


def volume(M: TriangulatedManifold) -> float:
    return float(sum(ideal_tet_volume(complex(z)) for z in M.shapes))


def cusp_geometry(M: TriangulatedManifold) -> list[CuspData]:
    return [CuspData.from_translations(c.xi, c.eta) for c in M.cusps]


@dataclass(frozen=True)
class TruncationConstants:
    tau0: float
    L0: float
    tau: float


def truncation_constants(M: TriangulatedManifold, tau0: float | None = None) -> TruncationConstants:
    if not M.cusps:
        raise ValueError("closed manifold has no truncation constants")
    t0 = M.tau0 if tau0 is None else tau0
    if t0 < 0:
        raise ValueError("tau0 must be nonnegative")
    L0 = max([math.exp(t0)] + [abs(c.xi) + abs(c.eta) for c in M.cusps])
    return TruncationConstants(tau0=t0, L0=L0, tau=math.log(3.0 * L0))


def thick_thin_constants(M: TriangulatedManifold, b1: int | None = None) -> dict:
    if b1 is not None and b1 < 1:
        raise ValueError("thick-thin data requested for a manifold with H^1 = 0")
    return {"mu": MARGULIS_MU, "systole": M.systole, "no_thin_tubes": M.systole >= MARGULIS_MU}


# ----------------------------------------------------------------------------
# cusp development

EVEN_PERMS = [
    p
    for p in itertools.permutations(range(4))
    if sum(1 for i in range(4) for j in range(i + 1, 4) if p[i] > p[j]) % 2 == 0
]


def _link_labels(v: int) -> tuple[int, int, int]:
    """(j, k, l) with (v, j, k, l) an even permutation and j the smallest choice."""
    for p in EVEN_PERMS:
        if p[0] == v:
            return p[1], p[2], p[3]
    raise AssertionError


@dataclass
class CuspDevelopment:
    """Developed link triangles of one cusp, scaled to the ingested area.

    positions[(t, v)][j] is the point above which ideal vertex j of tetrahedron t
    sits when the cusp is at infinity and its maximal horosphere is at height 1.
    """

    cusp: int
    positions: dict[tuple[int, int], dict[int, complex]]
    xi: complex
    eta: complex
    scale: float
    holonomy_residual: float
    area_developed: float


def _local_link(M: TriangulatedManifold, t: int, v: int) -> dict[int, complex]:
    j, k, l = _link_labels(v)
    z = M.edge_shapes(t)[(min(v, j), max(v, j))]
    return {j: 0j, k: 1 + 0j, l: complex(z)}


def lattice_from_generators(vectors: list[complex], area: float) -> tuple[complex, complex]:
    vecs = [c for c in vectors if abs(c) > 1e-9 * math.sqrt(area)]
    if len(vecs) < 2:
        raise ValidationError("cusp holonomy does not span a lattice")
    vecs.sort(key=abs)
    b1 = vecs[0]
    cross = [abs((b1.conjugate() * c).imag) for c in vecs]
    cand = [c for c, x in zip(vecs, cross) if x > 1e-6 * area]
    if not cand:
        raise ValidationError("cusp holonomy is degenerate")
    b2 = min(cand, key=lambda c: abs((b1.conjugate() * c).imag))
    if abs(lattice.lattice_area(b1, b2) - area) <= 1e-6 * area:
        return lattice.reduce_basis(b1, b2)
    # general case: integer coordinates over a common denominator, then Euclid on Z^2
    B = np.array([[b1.real, b2.real], [b1.imag, b2.imag]])
    fr = []
    for c in vecs:
        x, y = np.linalg.solve(B, [c.real, c.imag])
        fr.append((Fraction(x).limit_denominator(10000), Fraction(y).limit_denominator(10000)))
    D = math.lcm(*[f.denominator for pair in fr for f in pair])
    (x1, y1), (x2, y2) = _z2_basis([[int(x * D), int(y * D)] for x, y in fr])
    v1 = (x1 * b1 + y1 * b2) / D
    v2 = (x2 * b1 + y2 * b2) / D
    basis = lattice.reduce_basis(v1, v2)
    if abs(lattice.lattice_area(*basis) - area) > 1e-6 * area:
        raise ValidationError("cusp holonomy lattice does not match the link area")
    return basis


def _z2_basis(rows: list[list[int]]) -> tuple[tuple[int, int], tuple[int, int]]:
    """Basis of the subgroup of Z^2 generated by rows (assumed of rank 2)."""
    vs = [r[:] for r in rows]
    while True:
        nz = sorted((v for v in vs if v[1] != 0), key=lambda v: abs(v[1]))
        if len(nz) <= 1:
            break
        p = nz[0]
        for v in nz[1:]:
            q = v[1] // p[1]
            v[0] -= q * p[0]
            v[1] -= q * p[1]
    pivot = next(v for v in vs if v[1] != 0)
    g = 0
    for v in vs:
        if v[1] == 0:
            g = math.gcd(g, v[0])
    return (g, 0), (pivot[0], pivot[1])


def develop_cusps(M: TriangulatedManifold) -> list[CuspDevelopment]:
    """Develop every cusp link into C and scale it to the ingested cusp area."""
    out = []
    for c in range(M.n_cusps):
        members = [(t, v) for t in range(M.n_tets) for v in range(4) if M.vertex_cusp[t, v] == c]
        start = members[0]
        placed: dict[tuple[int, int], dict[int, complex]] = {start: _local_link(M, *start)}
        queue = [start]
        translations: list[complex] = []
        worst = 0.0
        while queue:
            t, v = queue.pop(0)
            P = placed[(t, v)]
            for l in range(4):
                if l == v:
                    continue
                j, k = [x for x in range(4) if x not in (v, l)]
                p = M.perms[t][l]
                u = int(M.targets[t][l])
                nb = (u, p[v])
                Q = _local_link(M, *nb)
                qa, qb = Q[p[j]], Q[p[k]]
                A = (P[j] - P[k]) / (qa - qb)
                B = P[j] - A * qa
                pred = {key: A * w + B for key, w in Q.items()}
                if nb not in placed:
                    placed[nb] = pred
                    queue.append(nb)
                else:
                    R = placed[nb]
                    keys = list(pred)
                    h = (R[keys[0]] - R[keys[1]]) / (pred[keys[0]] - pred[keys[1]])
                    worst = max(worst, abs(h - 1))
                    shift = R[keys[0]] - pred[keys[0]]
                    translations.append(shift)
        area_dev = 0.0
        for P in placed.values():
            a, b, cc = P.values()
            area_dev += abs(((b - a).conjugate() * (cc - a)).imag) / 2
        xi_d, eta_d = lattice_from_generators(translations, area_dev)
        scale = math.sqrt(M.cusps[c].area / area_dev)
        scaled = {key: {j: scale * w for j, w in P.items()} for key, P in placed.items()}
        out.append(
            CuspDevelopment(
                cusp=c,
                positions=scaled,
                xi=scale * xi_d,
                eta=scale * eta_d,
                scale=scale,
                holonomy_residual=worst,
                area_developed=area_dev,
            )
        )
    return out


def cusp_shape_mismatch(M: TriangulatedManifold, devs: list[CuspDevelopment]) -> float:
    """Largest discrepancy between ingested and developed cusp lattices (up to rotation)."""
    worst = 0.0
    for dev, cusp in zip(devs, M.cusps):
        a1, a2 = lattice.reduce_basis(cusp.xi, cusp.eta)
        d1, d2 = lattice.reduce_basis(dev.xi, dev.eta)
        ra, rd = a2 / a1, d2 / d1
        # reduced bases are unique up to sign and the mirror ambiguity on the boundary
        cands = [rd, -rd, rd.conjugate(), -rd.conjugate()]
        shape_err = min(abs(ra - x) for x in cands)
        worst = max(worst, shape_err, abs(abs(a1) - abs(d1)) / abs(a1))
    return worst
