"""Manifold and model-cusp input files and the shared data model.

Manifold file format (UTF-8, one item per line, ``#`` starts a comment)::

    name s789
    tetrahedra 6
    gluings                # tet face target perm ; perm[v] is the image of vertex v
    0 0 1 0132
    ...
    shapes                 # re im, one line per tetrahedron
    0.5 1.3228756555322954
    ...
    cusps                  # xi_re xi_im eta_re eta_im, one line per cusp
    0.15 1.99 3.31 0.0
    systole 0.34657359027997264
    tau0 0                 # optional, default 0
    thurston_ball          # optional: unit-ball vertices in image-basis coordinates
    0.5
    -0.5
    class_norms            # optional: integer coordinates ':' norm
    1 : 2
    cover_of s789 2        # optional: base name, degree, then the integer matrix
    1

Every face appears exactly once as a source in ``gluings`` and the reverse
gluing must be listed as well.  Cusps are numbered by the first (tetrahedron,
vertex) pair of each vertex class, in lexicographic order.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import lattice

# edge (i, j) -> which of z, 1/(1-z), (z-1)/z is its shape parameter
EDGE_SHAPE_INDEX = {(0, 1): 0, (2, 3): 0, (0, 2): 1, (1, 3): 1, (0, 3): 2, (1, 2): 2}
TET_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
EDGE_RESIDUAL_TOL = 1e-9


class ParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, field_name: Optional[str] = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field_name is not None:
            where.append(f"field '{field_name}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.field_name = field_name


class ValidationError(ValueError):
    pass


class ValidationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CuspData:
    xi: complex
    eta: complex
    area: float
    waist: float
    diameter: float

    @classmethod
    def from_translations(cls, xi: complex, eta: complex) -> "CuspData":
        try:
            lattice.check_independent(complex(xi), complex(eta))
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
        cusp = cls(
            xi=complex(xi),
            eta=complex(eta),
            area=lattice.lattice_area(complex(xi), complex(eta)),
            waist=lattice.waist(complex(xi), complex(eta)),
            diameter=lattice.torus_diameter(complex(xi), complex(eta)),
        )
        if cusp.waist < 1.0 - 1e-9:
            warnings.warn(f"cusp waist {cusp.waist:.6g} is below 1", ValidationWarning, stacklevel=2)
        return cusp


@dataclass(frozen=True)
class CoverDecl:
    base: str
    degree: int
    matrix: tuple[tuple[int, ...], ...]  # cover coords = matrix @ base coords


@dataclass
class TriangulatedManifold:
    name: str
    targets: np.ndarray  # (n, 4) neighbour across each face
    perms: tuple[tuple[tuple[int, int, int, int], ...], ...]  # perms[t][f][v]
    shapes: np.ndarray  # (n,) complex
    cusps: list[CuspData]
    systole: float
    tau0: float = 0.0
    thurston_ball: Optional[np.ndarray] = None
    class_norms: dict[tuple[int, ...], float] = field(default_factory=dict)
    cover_of: Optional[CoverDecl] = None
    vertex_cusp: np.ndarray = field(default=None, repr=False)  # (n, 4)
    oriented: bool = True
    edge_residual: float = field(default=float("nan"), repr=False)

    @property
    def n_tets(self) -> int:
        return len(self.shapes)

    @property
    def n_cusps(self) -> int:
        return len(self.cusps)

    def edge_shapes(self, t: int) -> dict[tuple[int, int], complex]:
        z = complex(self.shapes[t])
        vals = (z, 1 / (1 - z), (z - 1) / z)
        return {e: vals[EDGE_SHAPE_INDEX[e]] for e in TET_EDGES}

    def __eq__(self, other) -> bool:
        if not isinstance(other, TriangulatedManifold):
            return NotImplemented
        ball_eq = (self.thurston_ball is None and other.thurston_ball is None) or (
            self.thurston_ball is not None
            and other.thurston_ball is not None
            and np.array_equal(self.thurston_ball, other.thurston_ball)
        )
        return (
            self.name == other.name
            and np.array_equal(self.targets, other.targets)
            and self.perms == other.perms
            and np.array_equal(self.shapes, other.shapes)
            and self.cusps == other.cusps
            and self.systole == other.systole
            and self.tau0 == other.tau0
            and ball_eq
            and self.class_norms == other.class_norms
            and self.cover_of == other.cover_of
        )


# ----------------------------------------------------------------------------
# combinatorics shared by validation, geometry and cohomology


def _perm_parity(p) -> int:
    p = list(p)
    sign = 1
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


def vertex_classes(targets: np.ndarray, perms) -> np.ndarray:
    """Cusp index of every (tet, vertex), numbered by first appearance."""
    n = len(targets)
    parent = list(range(4 * n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for t in range(n):
        for f in range(4):
            p = perms[t][f]
            u = int(targets[t][f])
            for v in range(4):
                if v != f:
                    ra, rb = find(4 * t + v), find(4 * u + p[v])
                    if ra != rb:
                        parent[max(ra, rb)] = min(ra, rb)
    labels: dict[int, int] = {}
    out = np.empty((n, 4), dtype=int)
    for t in range(n):
        for v in range(4):
            r = find(4 * t + v)
            out[t, v] = labels.setdefault(r, len(labels))
    return out


def edge_classes(targets: np.ndarray, perms) -> list[list[tuple[int, int, int, int]]]:
    """Oriented edge classes.

    Each class is a list of (tet, i, j, sign) with i < j; sign is +1 when the
    tetrahedron edge i->j agrees with the class orientation, fixed by the first
    member.  Classes are ordered by their first member.
    """
    n = len(targets)
    key = {e: k for k, e in enumerate(TET_EDGES)}
    parent = list(range(6 * n))
    # relative orientation of a node to its parent
    rel = [1] * (6 * n)

    def find(a):
        path = []
        while parent[a] != a:
            path.append(a)
            a = parent[a]
        root = a
        # compress with accumulated orientation
        acc = 1
        for node in reversed(path):
            acc *= rel[node]
            rel[node] = acc
            parent[node] = root
        return root

    for t in range(n):
        for f in range(4):
            p = perms[t][f]
            u = int(targets[t][f])
            for (i, j) in TET_EDGES:
                if f in (i, j):
                    continue
                a, b = p[i], p[j]
                s = 1 if a < b else -1
                x, y = 6 * t + key[(i, j)], 6 * u + key[(min(a, b), max(a, b))]
                rx, ry = find(x), find(y)
                ox, oy = rel[x] if x != rx else 1, rel[y] if y != ry else 1
                if rx == ry:
                    if ox * s != oy:
                        raise ValidationError(f"edge ({t}; {i}{j}) is glued to itself with reversed orientation")
                    continue
                lo, hi = min(rx, ry), max(rx, ry)
                # orientation of hi relative to lo: x ~ s*y, x = ox*rx, y = oy*ry
                r = ox * s * oy
                parent[hi] = lo
                rel[hi] = r
    groups: dict[int, list] = {}
    for t in range(n):
        for k, (i, j) in enumerate(TET_EDGES):
            node = 6 * t + k
            root = find(node)
            o = rel[node] if node != root else 1
            groups.setdefault(root, []).append((t, i, j, o))
    out = []
    for root in sorted(groups, key=lambda r: groups[r][0][:3]):
        members = groups[root]
        s0 = members[0][3]
        out.append([(t, i, j, o * s0) for (t, i, j, o) in members])
    return out


def edge_equation_residual(targets: np.ndarray, perms, shapes: np.ndarray) -> float:
    """max over edge classes of |sum log z_e - 2 pi i|."""
    worst = 0.0
    for cls in edge_classes(targets, perms):
        total = 0j
        for (t, i, j, _) in cls:
            z = complex(shapes[t])
            total += cmath.log((z, 1 / (1 - z), (z - 1) / z)[EDGE_SHAPE_INDEX[(i, j)]])
        worst = max(worst, abs(total - 2j * math.pi))
    return worst


def is_oriented(perms) -> bool:
    """True when every gluing reverses the vertex-order orientation of the tetrahedra."""
    return all(_perm_parity(p) == -1 for row in perms for p in row)


def validate_gluings(targets: np.ndarray, perms) -> None:
    n = len(targets)
    for t in range(n):
        for f in range(4):
            p = perms[t][f]
            if sorted(p) != [0, 1, 2, 3]:
                raise ValidationError(f"gluing ({t}, {f}) has invalid permutation {p}")
            u = int(targets[t][f])
            if not 0 <= u < n:
                raise ValidationError(f"gluing ({t}, {f}) targets missing tetrahedron {u}")
            g = p[f]
            back = perms[u][g]
            if int(targets[u][g]) != t or any(back[p[v]] != v for v in range(4)):
                raise ValidationError(
                    f"inconsistent gluing pair: ({t}, {f}) -> ({u}, {g}) but ({u}, {g}) -> ({int(targets[u][g])}, {back[g]})"
                )
            if (u, g) == (t, f):
                raise ValidationError(f"face ({t}, {f}) is glued to itself")


# ----------------------------------------------------------------------------
# parsing

_SECTIONS = {"gluings", "shapes", "cusps", "thurston_ball", "class_norms"}
_KEYS = {"name", "tetrahedra", "systole", "tau0", "cover_of"}


def _tokens(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _float(tok: str, lineno: int, name: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"expected a number, got {tok!r}", lineno, name) from None


def _int(tok: str, lineno: int, name: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"expected an integer, got {tok!r}", lineno, name) from None


def parse_manifold_text(text: str) -> TriangulatedManifold:
    header: dict[str, tuple[int, list[str]]] = {}
    sections: dict[str, list[tuple[int, str]]] = {}
    current: Optional[str] = None
    for lineno, line in _tokens(text):
        words = line.split()
        head = words[0]
        if head in _SECTIONS and len(words) == 1:
            if head in sections:
                raise ParseError(f"section '{head}' appears twice", lineno, head)
            current = head
            sections[head] = []
        elif head in _KEYS:
            if head in header:
                raise ParseError(f"key '{head}' appears twice", lineno, head)
            header[head] = (lineno, words[1:])
            current = "cover_of" if head == "cover_of" else None
            if current:
                sections["cover_of"] = []
        elif current is not None:
            sections[current].append((lineno, line))
        else:
            raise ParseError(f"unexpected line {line!r}", lineno)

    def need(key):
        if key not in header:
            raise ParseError(f"{key} required", None, key)
        lineno, vals = header[key]
        if not vals:
            raise ParseError(f"{key} needs a value", lineno, key)
        return lineno, vals

    _, name_vals = need("name")
    name = name_vals[0]
    ln, ntets_vals = need("tetrahedra")
    n = _int(ntets_vals[0], ln, "tetrahedra")
    if n < 1:
        raise ParseError("at least one tetrahedron is required", ln, "tetrahedra")
    ln, sys_vals = need("systole")
    systole = _float(sys_vals[0], ln, "systole")
    tau0 = 0.0
    if "tau0" in header:
        ln, vals = header["tau0"]
        tau0 = _float(vals[0], ln, "tau0")

    # gluings
    if "gluings" not in sections:
        raise ParseError("gluings required", None, "gluings")
    targets = -np.ones((n, 4), dtype=int)
    perm_table: list[list[Optional[tuple]]] = [[None] * 4 for _ in range(n)]
    first_line: dict[tuple[int, int], int] = {}
    for lineno, line in sections["gluings"]:
        words = line.split()
        if len(words) != 4:
            raise ParseError("gluing lines are 'tet face target perm'", lineno, "gluings")
        t, f, u = (_int(w, lineno, "gluings") for w in words[:3])
        perm_s = words[3]
        if len(perm_s) != 4 or not perm_s.isdigit():
            raise ParseError(f"permutation must be 4 digits, got {perm_s!r}", lineno, "gluings")
        if not (0 <= t < n and 0 <= f < 4):
            raise ParseError(f"face ({t}, {f}) out of range", lineno, "gluings")
        if (t, f) in first_line:
            raise ValidationError(
                f"face ({t}, {f}) glued twice: line {first_line[(t, f)]} and line {lineno}"
            )
        first_line[(t, f)] = lineno
        targets[t, f] = u
        perm_table[t][f] = tuple(int(c) for c in perm_s)
    missing = [(t, f) for t in range(n) for f in range(4) if perm_table[t][f] is None]
    if missing:
        raise ValidationError(f"faces without a gluing: {missing}")
    perms = tuple(tuple(row) for row in perm_table)
    validate_gluings(targets, perms)

    # shapes
    if "shapes" not in sections:
        raise ParseError("shapes required", None, "shapes")
    rows = sections["shapes"]
    if len(rows) != n:
        raise ParseError(f"expected {n} shapes, found {len(rows)}", rows[-1][0] if rows else None, "shapes")
    shapes = np.empty(n, dtype=complex)
    for k, (lineno, line) in enumerate(rows):
        words = line.split()
        if len(words) != 2:
            raise ParseError("shape lines are 're im'", lineno, "shapes")
        shapes[k] = complex(_float(words[0], lineno, "shapes"), _float(words[1], lineno, "shapes"))
        if shapes[k].imag <= 0:
            raise ValidationError(f"shape of tetrahedron {k} has non-positive imaginary part")

    # cusps
    vclass = vertex_classes(targets, perms)
    n_cusps = int(vclass.max()) + 1
    rows = sections.get("cusps")
    if rows is None:
        raise ParseError("cusps required", None, "cusps")
    if len(rows) != n_cusps:
        raise ValidationError(f"triangulation has {n_cusps} cusps but {len(rows)} cusp lines were given")
    cusps = []
    for lineno, line in rows:
        words = line.split()
        if len(words) != 4:
            raise ParseError("cusp lines are 'xi_re xi_im eta_re eta_im'", lineno, "cusps")
        a, b, c, d = (_float(w, lineno, "cusps") for w in words)
        cusps.append(CuspData.from_translations(complex(a, b), complex(c, d)))

    if not systole > 0:
        raise ValidationError("systole must be positive")

    ball = None
    if "thurston_ball" in sections:
        vecs = [[_float(w, ln, "thurston_ball") for w in line.split()] for ln, line in sections["thurston_ball"]]
        if not vecs or len({len(v) for v in vecs}) != 1:
            raise ParseError("thurston_ball vertices must share one dimension", None, "thurston_ball")
        ball = np.array(vecs, dtype=float)

    norms: dict[tuple[int, ...], float] = {}
    for lineno, line in sections.get("class_norms", []):
        if ":" not in line:
            raise ParseError("class_norms lines are 'c1 c2 ... : value'", lineno, "class_norms")
        lhs, rhs = line.split(":", 1)
        coords = tuple(_int(w, lineno, "class_norms") for w in lhs.split())
        norms[coords] = _float(rhs.strip(), lineno, "class_norms")

    cover = None
    if "cover_of" in header:
        ln, vals = header["cover_of"]
        if len(vals) != 2:
            raise ParseError("cover_of needs 'name degree'", ln, "cover_of")
        rows = sections.get("cover_of", [])
        matrix = tuple(tuple(_int(w, lineno, "cover_of") for w in line.split()) for lineno, line in rows)
        if not matrix:
            raise ParseError("cover_of needs a class correspondence matrix", ln, "cover_of")
        cover = CoverDecl(vals[0], _int(vals[1], ln, "cover_of"), matrix)

    M = TriangulatedManifold(
        name=name,
        targets=targets,
        perms=perms,
        shapes=shapes,
        cusps=cusps,
        systole=systole,
        tau0=tau0,
        thurston_ball=ball,
        class_norms=norms,
        cover_of=cover,
        vertex_cusp=vclass,
        oriented=is_oriented(perms),
    )
    M.edge_residual = edge_equation_residual(targets, perms, shapes)
    if M.edge_residual > EDGE_RESIDUAL_TOL:
        raise ValidationError(f"edge equations violated: residual {M.edge_residual:.3e}")
    return M


def parse_manifold(path) -> TriangulatedManifold:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    return parse_manifold_text(path.read_text(encoding="utf-8"))


def format_manifold(M: TriangulatedManifold) -> str:
    out = [f"name {M.name}", f"tetrahedra {M.n_tets}", "gluings"]
    for t in range(M.n_tets):
        for f in range(4):
            out.append(f"{t} {f} {int(M.targets[t, f])} {''.join(map(str, M.perms[t][f]))}")
    out.append("shapes")
    out += [f"{float(z.real)!r} {float(z.imag)!r}" for z in M.shapes]
    out.append("cusps")
    out += [" ".join(repr(float(x)) for x in (c.xi.real, c.xi.imag, c.eta.real, c.eta.imag)) for c in M.cusps]
    out.append(f"systole {float(M.systole)!r}")
    out.append(f"tau0 {float(M.tau0)!r}")
    if M.thurston_ball is not None:
        out.append("thurston_ball")
        out += [" ".join(repr(float(x)) for x in row) for row in M.thurston_ball]
    if M.class_norms:
        out.append("class_norms")
        out += [f"{' '.join(map(str, k))} : {float(v)!r}" for k, v in M.class_norms.items()]
    if M.cover_of is not None:
        out.append(f"cover_of {M.cover_of.base} {M.cover_of.degree}")
        out += [" ".join(map(str, row)) for row in M.cover_of.matrix]
    return "\n".join(out) + "\n"


def write_manifold(M: TriangulatedManifold, path) -> None:
    Path(path).write_text(format_manifold(M), encoding="utf-8")


# ----------------------------------------------------------------------------
# model cusps


@dataclass(frozen=True)
class ModelCusp:
    cusp: CuspData
    base_height: float
    top_height: float


def parse_model_cusp(path) -> ModelCusp:
    """Read a model-cusp file with keys ``xi``, ``eta`` (re im), ``base_height``
    and optionally ``top_height`` (default: base + 3.5)."""
    text = Path(path).read_text(encoding="utf-8")
    vals: dict[str, tuple[int, list[str]]] = {}
    for lineno, line in _tokens(text):
        words = line.split()
        vals[words[0]] = (lineno, words[1:])
    for key in ("xi", "eta", "base_height"):
        if key not in vals:
            raise ParseError(f"{key} required", None, key)

    def cx(key):
        ln, w = vals[key]
        if len(w) != 2:
            raise ParseError(f"{key} needs 're im'", ln, key)
        return complex(_float(w[0], ln, key), _float(w[1], ln, key))

    ln, w = vals["base_height"]
    base = _float(w[0], ln, "base_height")
    top = base + 3.5
    if "top_height" in vals:
        ln, w = vals["top_height"]
        top = _float(w[0], ln, "top_height")
    if not 0 < base < top:
        raise ValidationError("heights must satisfy 0 < base_height < top_height")
    return ModelCusp(CuspData.from_translations(cx("xi"), cx("eta")), base, top)
