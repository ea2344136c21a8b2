"""Forms in rank-2 cusps: torus spectra, Bessel profiles, expansions and model norms.

A cusp is T^2 x [z_b, oo) in upper half-space with metric (dx^2 + dy^2 + dz^2) / z^2.
Harmonic functions there separate as z K_1(lambda z) times a character
exp(2 pi i <w, p>) of the torus, with lambda = 2 pi |w| for a dual-lattice
vector w; this is what the expansion fits and the tail estimates integrate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize, special
from scipy.sparse.csgraph import breadth_first_order
import scipy.sparse as sp

from . import lattice
from .manifold_io import CuspData

# fit window margin (in z) at both ends of a cusp neck
WINDOW_MARGIN = 0.5
MIN_CROSS_SECTIONS = 3


# ----------------------------------------------------------------------------
# spectra and Bessel functions


def torus_spectrum(cusp: CuspData, count: int) -> list[tuple[complex, float]]:
    """The `count` smallest nonzero eigen-frequencies of the cusp torus, with multiplicity.

    Each entry is (dual-lattice vector w, lambda = 2 pi |w|); the Laplace
    eigenvalue of the character exp(2 pi i <w, p>) is -lambda^2.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    return [(w, 2 * math.pi * abs(w)) for w, _ in lattice.dual_lattice_vectors(cusp.xi, cusp.eta, count)]


def bessel_k(order: int, x):
    """Modified Bessel function of the second kind K_0 or K_1 for x > 0."""
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("bessel_k needs x > 0")
    out = special.k0(arr) if order == 0 else special.k1(arr)
    return float(out) if np.ndim(out) == 0 else out


def profile(lam: float, z):
    """g(z) = z K_1(lam z): the height profile of a harmonic mode."""
    z = np.asarray(z, dtype=float)
    return z * special.k1(lam * z)


def profile_derivative(lam: float, z):
    """g'(z) = -lam z K_0(lam z)."""
    z = np.asarray(z, dtype=float)
    return -lam * z * special.k0(lam * z)


def _log_profile(lam: float, z):
    z = np.asarray(z, dtype=float)
    return np.log(z) + np.log(special.k1e(lam * z)) - lam * z


def bessel_identity_residuals(z: Sequence[float], h: float = 1e-3) -> np.ndarray:
    """|d/dz(z K_1(z)) + z K_0(z)| / |z K_0(z)| with a five-point derivative."""
    z = np.asarray(z, dtype=float)
    g = lambda t: t * special.k1(t)  # noqa: E731
    d = (-g(z + 2 * h) + 8 * g(z + h) - 8 * g(z - h) + g(z - 2 * h)) / (12 * h)
    ref = z * special.k0(z)
    return np.abs(d + ref) / np.abs(ref)


def mode(w: complex, c: complex = 1.0) -> Callable:
    """Harmonic function Re(c z K_1(lambda z) exp(2 pi i <w, p>)) on upper half-space."""
    lam = 2 * math.pi * abs(w)

    def f(x, y, z):
        phase = np.exp(2j * math.pi * (w.real * np.asarray(x) + w.imag * np.asarray(y)))
        return np.real(c * phase) * profile(lam, z)

    return f


def laplace_beltrami_fd(f: Callable, x, y, z, h: float) -> np.ndarray:
    """Finite-difference hyperbolic Laplacian z^2 (f_xx + f_yy + f_zz) - z f_z."""
    x, y, z = (np.asarray(a, dtype=float) for a in (x, y, z))
    f0 = f(x, y, z)
    fxx = (f(x + h, y, z) - 2 * f0 + f(x - h, y, z)) / h**2
    fyy = (f(x, y + h, z) - 2 * f0 + f(x, y - h, z)) / h**2
    fzz = (f(x, y, z + h) - 2 * f0 + f(x, y, z - h)) / h**2
    fz = (f(x, y, z + h) - f(x, y, z - h)) / (2 * h)
    return z * z * (fxx + fyy + fzz) - z * fz


# ----------------------------------------------------------------------------
# expansions


@dataclass
class CuspExpansion:
    """f = Re sum_w c_w z K_1(2 pi |w| z) exp(2 pi i <w, p>) on one cusp.

    `fitted_rate` is the decay rate fitted freely to the dominant term's
    cross-section traces; `lambda1` is 2 pi |w| of the first term.
    """

    cusp_id: int
    terms: list[tuple[complex, complex]]
    base_height: float
    area: float
    lattice: tuple[complex, complex]
    fitted_rate: Optional[float] = None
    window: tuple[float, float] = (math.nan, math.nan)
    traces: dict = field(default_factory=dict, repr=False)

    @property
    def lambda1(self) -> Optional[float]:
        return 2 * math.pi * abs(self.terms[0][0]) if self.terms else None

    @property
    def empty(self) -> bool:
        return not self.terms

    def __call__(self, x, y, z):
        out = 0.0
        for w, c in self.terms:
            out = out + mode(w, c)(x, y, z)
        return out


def _cross_section_weights(mesh, cusp_id: int, layer: int, verts: np.ndarray, xi: complex, eta: complex) -> np.ndarray:
    """Lumped torus areas of the vertices of one cross-section."""
    idx = {int(v): k for k, v in enumerate(verts)}
    vc, vl = mesh.vertex_cusp, mesh.vertex_layer
    F = mesh.faces
    on = np.all((vc[F] == cusp_id) & (vl[F] == layer), axis=1)
    wts = np.zeros(len(verts))
    B = np.array([[xi.real, eta.real], [xi.imag, eta.imag]])
    Binv = np.linalg.inv(B)

    def wrap(d):
        st = Binv @ np.array([d.real, d.imag])
        st -= np.round(st)
        v = B @ st
        return complex(v[0], v[1])

    for a, b, c in F[on]:
        pa = mesh.vertex_xy[a]
        u, v = wrap(mesh.vertex_xy[b] - pa), wrap(mesh.vertex_xy[c] - pa)
        area = 0.5 * abs((u.conjugate() * v).imag)
        for p in (a, b, c):
            wts[idx[int(p)]] += area / 3
    return wts


def cusp_potential(form_values: np.ndarray, mesh, cusp_id: int) -> np.ndarray:
    """Integrate an edge cochain over the neck of one cusp (0 at the first vertex).

    Returns an array over all mesh vertices, nan off the neck.
    """
    vc = mesh.vertex_cusp
    E = mesh.edges
    on = (vc[E[:, 0]] == cusp_id) & (vc[E[:, 1]] == cusp_id)
    nV = mesh.n_vertices
    rows = np.concatenate([E[on, 0], E[on, 1]])
    cols = np.concatenate([E[on, 1], E[on, 0]])
    vals = np.concatenate([np.asarray(form_values)[on], -np.asarray(form_values)[on]])
    G = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(nV, nV))
    D = {}
    for r, c_, v in zip(rows, cols, vals):
        D[(int(r), int(c_))] = float(v)
    verts = np.nonzero(vc == cusp_id)[0]
    f = np.full(nV, np.nan)
    if len(verts) == 0:
        return f
    order, pred = breadth_first_order(G, int(verts[0]), directed=False, return_predecessors=True)
    f[order[0]] = 0.0
    for v in order[1:]:
        p = int(pred[v])
        f[v] = f[p] + D[(p, int(v))]
    return f


def cusp_expand(
    form,
    mesh,
    cusp_id: int = 0,
    heights: Optional[Sequence[float]] = None,
    count: int = 12,
    prune: float = 1e-6,
) -> CuspExpansion:
    """Fit the cross-section traces of a form on a cusp neck to z K_1(lambda z) modes.

    `form` is a DiscreteOneForm (or an edge cochain).  Heights default to the
    neck layers inside [base + 0.5, top - 0.5].  Each mode coefficient is the
    least-squares fit of its Fourier trace; modes whose amplitude at the bottom
    of the window is below `prune` times the largest are dropped.  The
    dominant mode's decay rate is also fitted freely.
    """
    values = getattr(form, "edge_values", form)
    xi, eta = mesh.cusp_lattices[cusp_id]
    area = lattice.lattice_area(xi, eta)
    layers = np.asarray(mesh.layer_heights[cusp_id], dtype=float)
    base, top = float(layers[0]), float(layers[-1])
    lo, hi = base + WINDOW_MARGIN, top - WINDOW_MARGIN
    if heights is None:
        chosen = [k for k, h in enumerate(layers) if lo - 1e-12 <= h <= hi + 1e-12]
    else:
        chosen = [int(np.argmin(np.abs(layers - h))) for h in heights]
        if any(abs(layers[k] - h) > 1e-9 * max(1.0, h) for k, h in zip(chosen, heights)):
            raise ValueError("requested heights are not cross-sections of the mesh")
    if len(chosen) < MIN_CROSS_SECTIONS:
        raise ValueError("insufficient cross-sections")
    f = cusp_potential(values, mesh, cusp_id)
    # one representative of each +-w pair
    dual = lattice.dual_lattice_vectors(xi, eta, 2 * count)
    reps = []
    for w, (m, n) in dual:
        if (-m, -n) not in [mn for _, mn in reps]:
            reps.append((w, (m, n)))
    reps = reps[:count]
    zs = layers[chosen]
    A = np.zeros((len(reps), len(chosen)), dtype=complex)
    for j, k in enumerate(chosen):
        verts = np.nonzero((mesh.vertex_cusp == cusp_id) & (mesh.vertex_layer == k))[0]
        wts = _cross_section_weights(mesh, cusp_id, k, verts, xi, eta)
        p = mesh.vertex_xy[verts]
        fv = f[verts] - np.sum(wts * f[verts]) / np.sum(wts)
        for i, (w, _) in enumerate(reps):
            chi = np.exp(-2j * math.pi * (w.real * p.real + w.imag * p.imag))
            A[i, j] = 2 * np.sum(wts * fv * chi) / area
    coeffs, sizes = [], []
    for i, (w, _) in enumerate(reps):
        g = profile(2 * math.pi * abs(w), zs)
        c = complex(np.sum(A[i] * g) / np.sum(g * g))
        coeffs.append(c)
        sizes.append(abs(c) * g[0])  # the mode's amplitude at the bottom of the window
    scale = max(sizes, default=0.0)
    terms = [(w, c) for (w, _), c, a in zip(reps, coeffs, sizes) if scale > 0 and a > prune * scale]
    exp = CuspExpansion(
        cusp_id=cusp_id, terms=terms, base_height=base, area=area, lattice=(xi, eta),
        window=(float(zs[0]), float(zs[-1])), traces={"heights": zs, "modes": [w for w, _ in reps], "values": A},
    )
    if terms:
        # the dominant mode at the bottom of the window
        i = int(np.argmax(np.abs(A[:, 0])))
        y = np.log(np.abs(A[i]))
        lam0 = 2 * math.pi * abs(reps[i][0])
        model = lambda z, a, lam: a + _log_profile(lam, z)  # noqa: E731
        try:
            (a, lam), _ = optimize.curve_fit(model, zs, y, p0=[float(y[0] - _log_profile(lam0, zs[0])), lam0])
            exp.fitted_rate = float(lam)
        except (RuntimeError, ValueError):
            exp.fitted_rate = None
    return exp


def _mode_energy_density(lam: float, z: np.ndarray) -> np.ndarray:
    """Per-unit-area, per-|c|^2 integrand of |d(mode)|^2 dvol in z (torus average)."""
    g, gp = profile(lam, z), profile_derivative(lam, z)
    return 0.5 * (lam * lam * g * g + gp * gp) / z


def tail_norms(exp: CuspExpansion, T: float) -> tuple[float, float]:
    """(L^2, L^oo) of the expansion's form over heights z > T.

    The L^2 part integrates the exact torus averages by quadrature; the L^oo
    part is the sum of the per-mode maxima at z = T (exact for one mode).
    """
    if T < exp.base_height:
        raise ValueError("tail height below the base of the expansion")
    if exp.empty:
        return 0.0, 0.0
    l2sq = 0.0
    linf = 0.0
    for w, c in exp.terms:
        lam = 2 * math.pi * abs(w)
        # integrate e^{2 lam (z - T)} * density, then restore the scale
        def scaled(z, lam=lam):
            g = z * special.k1e(lam * z)
            gp = -lam * z * special.k0e(lam * z)
            return 0.5 * (lam * lam * g * g + gp * gp) / z * math.exp(-2 * lam * (z - T))

        val, _ = integrate.quad(scaled, T, np.inf, epsabs=0, epsrel=1e-12, limit=200)
        l2sq += exp.area * abs(c) ** 2 * val * math.exp(-2 * lam * T)
        g, gp = float(profile(lam, T)), float(profile_derivative(lam, T))
        linf += abs(c) * T * max(lam * abs(g), abs(gp))
    return math.sqrt(l2sq), linf


# ----------------------------------------------------------------------------
# retraction and compactification


def cutoff(u):
    """Smooth step: 1 for u <= 1/2, 0 for u >= 1, C^1 in between."""
    u = np.asarray(u, dtype=float)
    t = np.clip(2 * u - 1, 0.0, 1.0)
    return 1 - t * t * (3 - 2 * t)


def cutoff_derivative(u):
    u = np.asarray(u, dtype=float)
    t = np.clip(2 * u - 1, 0.0, 1.0)
    inside = (u > 0.5) & (u < 1.0)
    return np.where(inside, -12 * t * (1 - t), 0.0)


@dataclass
class RetractionResult:
    support_index: int
    support_start: float  # z above which the modified form vanishes
    cutoff_start: float
    error: float  # ||alpha - alpha_i||_{L^2}
    tail: float  # ||alpha||_{L^2} over the cutoff region


def retraction_compactify(exp: CuspExpansion, support_index: int) -> RetractionResult:
    """alpha_i = alpha - d(f_i R alpha) for the expansion's form alpha = df.

    In the compactified coordinate s = 1/z the cusp is s in (0, eps] with
    eps = 1/base; R alpha(s) is the integral of the ds-component from s = 0,
    which for alpha = df with f -> 0 at infinity is f itself.  The cutoff f_i
    is 1 near s = 0, vanishes for s >= eps / i and has |df_i/ds| <= 2 i / eps.
    Returns the L^2 size of the modification d(f_i f).
    """
    i = int(support_index)
    if i < 1:
        raise ValueError("support index must be >= 1")
    zb = exp.base_height
    z_lo = i * zb  # f_i = 0 below
    if exp.empty:
        return RetractionResult(i, z_lo, 2 * z_lo, 0.0, 0.0)

    # chi(z) = cutoff(i zb / z) as a function of z; chi' by the chain rule
    def chi(z):
        return cutoff(z_lo / z)

    def dchi(z):
        return cutoff_derivative(z_lo / z) * (-z_lo / (z * z))

    err = 0.0
    for w, c in exp.terms:
        lam = 2 * math.pi * abs(w)

        def scaled(z, lam=lam):
            e = math.exp(-2 * lam * (z - z_lo))
            g = z * special.k1e(lam * z)
            gp = -lam * z * special.k0e(lam * z)
            ch, dch = float(chi(z)), float(dchi(z))
            return 0.5 * (ch * ch * lam * lam * g * g + (dch * g + ch * gp) ** 2) / z * e

        v1, _ = integrate.quad(scaled, z_lo, 2 * z_lo, epsabs=0, epsrel=1e-11, limit=200)
        v2, _ = integrate.quad(scaled, 2 * z_lo, np.inf, epsabs=0, epsrel=1e-11, limit=200)
        err += exp.area * abs(c) ** 2 * (v1 + v2) * math.exp(-2 * lam * z_lo)
    tail = tail_norms(exp, z_lo)[0]
    return RetractionResult(i, 2 * z_lo, z_lo, math.sqrt(err), tail)


def power_law_exponent(indices: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope p of log(error) against log(1/i)."""
    x = np.log(1.0 / np.asarray(indices, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


# ----------------------------------------------------------------------------
# model computations


def raised_cosine_bump(c: float) -> Callable:
    """Bump on [c - 1, c + 1] shaped as 1 + cos(pi (z - c)), scaled so int f/z dz = 1."""
    if not c > 1:
        raise ValueError("the torus model needs c > 1")
    shape = lambda z: np.where(np.abs(z - c) < 1, 1 + np.cos(np.pi * (z - c)), 0.0)  # noqa: E731
    mass, _ = integrate.quad(lambda z: float(shape(z)) / z, c - 1, c + 1, epsabs=0, epsrel=1e-13)
    return lambda z: shape(z) / mass


def torus_model_norm(c: float, area: float = 1.0) -> float:
    """||f(z)/z dz||^2 = area * int f^2 / z^3 dz for the canonical bump at height c."""
    f = raised_cosine_bump(c)
    val, _ = integrate.quad(lambda z: float(f(z)) ** 2 / z**3, c - 1, c + 1, epsabs=0, epsrel=1e-12)
    return area * val


@dataclass
class BlowupModel:
    heights: np.ndarray
    partial_norms: np.ndarray
    slope: float
    intercept: float


def blowup_model(Z: float = 64.0, base: float = math.sqrt(2.0), n: int = 6, level: int = 2) -> BlowupModel:
    """Partial L^2 norms over [base, z] of the cocycle dx on the unit-square cusp mesh.

    The form dual to the vertical annulus {x = 1/2} is dx; its pointwise
    norm is z, so the partial norm squared grows like log z with unit slope.
    """
    from .hodge import cell_vectors
    from .mesh import model_cusp_mesh

    mesh = model_cusp_mesh(1.0, 1j, base, Z, n=n, level=level)
    xy = mesh.vertex_xy
    d = xy[mesh.edges[:, 1]] - xy[mesh.edges[:, 0]]
    dx = d.real - np.round(d.real)  # unit-square lattice: nearest representative
    vec = cell_vectors(mesh, dx)
    dens = mesh.volumes() * np.einsum("ti,ti->t", vec, vec)
    top = mesh.vertex_layer[mesh.tets].max(axis=1)
    H = np.asarray(mesh.layer_heights[0])
    partial = np.array([dens[top <= k].sum() for k in range(1, len(H))])
    z = H[1:]
    slope, intercept = np.polyfit(np.log(z), partial, 1)
    return BlowupModel(z, partial, float(slope), float(intercept))


def model_peripheral_norms(kind: str, params: Sequence[float]) -> list[tuple[float, float]]:
    """Rows (parameter, value) of the two peripheral models.

    kind "torus": parameter c > 1, value ||alpha||^2 of the bump form at height c.
    kind "blowup": parameter Z, value of the partial norm squared over [sqrt 2, Z].
    """
    if kind == "torus":
        return [(float(c), torus_model_norm(float(c))) for c in params]
    if kind == "blowup":
        model = blowup_model(Z=max(params))
        out = []
        for Z in params:
            k = int(np.argmin(np.abs(model.heights - Z)))
            out.append((float(model.heights[k]), float(model.partial_norms[k])))
        return out
    raise ValueError(f"unknown model {kind!r}")


# ----------------------------------------------------------------------------
# the model-cusp harmonic problem


def model_cusp_harmonic(model, n: int = 16, level: int = 1, trace: Optional[Callable] = None):
    """Harmonic function on T^2 x [base, top] with a prescribed zero-mean bottom trace.

    The top is left free (natural boundary condition).  Returns (mesh, form)
    where the form is the exact cochain df.
    """
    from .hodge import DiscreteOneForm, coboundaries, dirichlet_harmonic
    from .mesh import model_cusp_mesh

    cusp = getattr(model, "cusp", model)
    base, top = model.base_height, model.top_height
    mesh = model_cusp_mesh(cusp.xi, cusp.eta, base, top, n=n, level=level, spacing="uniform")
    if trace is None:
        w1, w2 = lattice.dual_basis(cusp.xi, cusp.eta)

        def trace(p):
            a = 2 * math.pi * (w1.real * p.real + w1.imag * p.imag)
            b = 2 * math.pi * (w2.real * p.real + w2.imag * p.imag)
            return np.exp(np.sin(a) + 0.5 * np.cos(b))

    bot = np.nonzero(mesh.vertex_layer == 0)[0]
    vals = np.asarray(trace(mesh.vertex_xy[bot]), dtype=float)
    vals = vals - vals.mean()
    f = dirichlet_harmonic(mesh, {int(v): float(x) for v, x in zip(bot, vals)})
    d0 = coboundaries(mesh)[0]
    df = d0 @ f
    form = DiscreteOneForm(df, None, "dirichlet", None, np.zeros_like(df), f, None, 0.0)
    return mesh, form
