"""Flat 2D lattices given by complex generators.

A cusp cross-section is the flat torus C / (Z xi + Z eta).  The helpers here
reduce the basis, measure it, and enumerate the dual lattice whose vectors
label the Laplace eigenfunctions of the torus.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import Voronoi


def lattice_area(xi: complex, eta: complex) -> float:
    return abs((xi.conjugate() * eta).imag)


def check_independent(xi: complex, eta: complex, rtol: float = 1e-12) -> None:
    if abs(xi) == 0 or abs(eta) == 0 or lattice_area(xi, eta) <= rtol * abs(xi) * abs(eta):
        raise ValueError(f"lattice generators {xi} and {eta} are collinear over the reals")


def reduce_basis(xi: complex, eta: complex) -> tuple[complex, complex]:
    """Lagrange-Gauss reduction: returns (b1, b2) with |b1| <= |b2| <= |b2 +- b1|."""
    check_independent(xi, eta)
    b1, b2 = complex(xi), complex(eta)
    if abs(b1) > abs(b2):
        b1, b2 = b2, b1
    while True:
        mu = round((b2 * b1.conjugate()).real / abs(b1) ** 2)
        b2 = b2 - mu * b1
        if abs(b2) >= abs(b1):
            return b1, b2
        b1, b2 = b2, b1


def waist(xi: complex, eta: complex) -> float:
    """Length of the shortest nonzero lattice vector."""
    return abs(reduce_basis(xi, eta)[0])


def lattice_points(xi: complex, eta: complex, radius: float) -> np.ndarray:
    """All lattice points of modulus <= radius, as complex numbers."""
    b1, b2 = reduce_basis(xi, eta)
    area = lattice_area(b1, b2)
    # |m b1 + n b2| <= R forces |n| <= R |b1| / area and similarly for m
    n_max = int(math.ceil(radius * abs(b1) / area)) + 1
    m_max = int(math.ceil(radius * abs(b2) / area)) + 1
    m, n = np.meshgrid(np.arange(-m_max, m_max + 1), np.arange(-n_max, n_max + 1))
    pts = (m * b1 + n * b2).ravel()
    return pts[np.abs(pts) <= radius * (1 + 1e-12)]


def torus_diameter(xi: complex, eta: complex) -> float:
    """Intrinsic diameter of C / (Z xi + Z eta).

    Equals the largest distance from the origin to a vertex of its Voronoi
    cell, found from a Voronoi diagram of the nearby lattice points.
    """
    b1, b2 = reduce_basis(xi, eta)
    pts = lattice_points(b1, b2, 3.0 * abs(b2) + abs(b1))
    xy = np.column_stack([pts.real, pts.imag])
    vor = Voronoi(xy)
    origin = int(np.argmin(np.abs(pts)))
    region = vor.regions[vor.point_region[origin]]
    if -1 in region or not region:
        raise RuntimeError("Voronoi cell of the origin is unbounded")
    return float(np.max(np.hypot(*vor.vertices[region].T)))


def dual_basis(xi: complex, eta: complex) -> tuple[complex, complex]:
    """Basis (w1, w2) with <w_a, b_b> = delta_ab for the real pairing on C = R^2."""
    check_independent(xi, eta)
    B = np.array([[xi.real, xi.imag], [eta.real, eta.imag]])
    W = np.linalg.inv(B).T
    return complex(*W[0]), complex(*W[1])


def dual_lattice_vectors(xi: complex, eta: complex, count: int) -> list[tuple[complex, tuple[int, int]]]:
    """The `count` shortest nonzero dual-lattice vectors, with multiplicity.

    Each entry is (w, (m, n)) with w = m w1 + n w2 in the dual basis of (xi, eta).
    Ties are broken by (m, n) so the order is deterministic.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    w1, w2 = dual_basis(xi, eta)
    radius = abs(reduce_basis(w1, w2)[0])
    while True:
        area = lattice_area(w1, w2)
        m_max = int(math.ceil(radius * abs(w2) / area)) + 1
        n_max = int(math.ceil(radius * abs(w1) / area)) + 1
        found = []
        for m in range(-m_max, m_max + 1):
            for n in range(-n_max, n_max + 1):
                if m == 0 and n == 0:
                    continue
                w = m * w1 + n * w2
                if abs(w) <= radius * (1 + 1e-12):
                    found.append((abs(w), (m, n), w))
        # the search disc is closed, so every vector up to the count-th norm is present
        if len(found) >= count:
            found.sort(key=lambda item: (round(item[0], 12), item[1]))
            return [(w, mn) for _, mn, w in found[:count]]
        radius *= 1.5
