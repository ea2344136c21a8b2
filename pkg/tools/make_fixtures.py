"""Regenerate the bundled manifold fixtures.

Development-only: needs snappy (triangulations, shapes, cusp translations,
systoles).  The package itself never imports it.

The s789 norm ball is exact: the dual surface of the generator is a closed
genus-2 surface (chi_- = 2), and no smaller value is possible because a
nonzero image class has positive norm and closed orientable surfaces have
even Euler characteristic.

    python3 tools/make_fixtures.py [outdir]
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import snappy

from hypnorms import cohomology as co
from hypnorms.geometry import volume
from hypnorms.manifold_io import (
    CoverDecl,
    CuspData,
    TriangulatedManifold,
    edge_equation_residual,
    format_manifold,
    is_oriented,
    parse_manifold_text,
    vertex_classes,
)

HERE = Path(__file__).resolve().parent
DEFAULT_OUT = HERE.parent / "src" / "hypnorms" / "data"


def parse_snappea(text: str):
    """(targets, perms, shapes) from a SnapPea triangulation file."""
    lines = text.splitlines()
    idx = [j for j, l in enumerate(lines) if l.strip().isdigit()]
    n = int(lines[idx[0]].strip())
    body = [l for l in lines[idx[0] + 1:] if l.strip()]
    targets, perms, shapes = [], [], []
    for t in range(n):
        blk = body[t * 8:(t + 1) * 8]
        targets.append([int(x) for x in blk[0].split()])
        perms.append(tuple(tuple(int(c) for c in p) for p in blk[1].split()))
        re, im = map(float, blk[7].split())
        shapes.append(complex(re, im))
    return np.array(targets), tuple(perms), np.array(shapes)


def systole(S) -> float:
    cutoff = 1.0
    while True:
        lengths = S.length_spectrum(cutoff)
        if len(lengths):
            return float(min(g.length.real for g in lengths))
        cutoff += 0.5


def from_snappy(S, name: str | None = None, **extra) -> TriangulatedManifold:
    S = S.copy()
    S.set_peripheral_curves("shortest")
    targets, perms, shapes = parse_snappea(S._to_string())
    full = np.array([complex(z) for z in S.tetrahedra_shapes("rect")])
    assert np.max(np.abs(full - shapes)) < 1e-9
    shapes = full
    vclass = vertex_classes(targets, perms)
    # snappy cusp order may differ from first-appearance order
    cusp_of_snappy = {}
    text_lines = [l for l in S._to_string().splitlines() if l.strip()]
    n = len(shapes)
    start = next(j for j, l in enumerate(text_lines) if l.strip() == str(n))
    for t in range(n):
        cidx = [int(x) for x in text_lines[start + 1 + 8 * t + 2].split()]
        for v in range(4):
            cusp_of_snappy.setdefault(int(vclass[t, v]), cidx[v])
    S_max = S.copy()
    trans = S_max.cusp_translations(policy="greedy") if S.num_cusps() > 1 else S_max.cusp_translations()
    cusps = []
    for c in range(int(vclass.max()) + 1):
        m, l = trans[cusp_of_snappy[c]]
        cusps.append(CuspData.from_translations(complex(m), complex(l)))
    M = TriangulatedManifold(
        name=name or S.name(),
        targets=targets,
        perms=perms,
        shapes=shapes,
        cusps=cusps,
        systole=systole(S),
        vertex_cusp=vclass,
        oriented=is_oriented(perms),
        **extra,
    )
    res = edge_equation_residual(targets, perms, shapes)
    assert res < 1e-9, (name, res)
    return M


def to_snappea(M: TriangulatedManifold) -> str:
    lines = ["% Triangulation", M.name, "not_attempted 0.0", "oriented_manifold", "CS_unknown", ""]
    lines += [f"{M.n_cusps} 0", *["    torus   0.000000000000   0.000000000000"] * M.n_cusps, "", str(M.n_tets)]
    for t in range(M.n_tets):
        lines.append(" ".join(str(int(u)) for u in M.targets[t]))
        lines.append(" ".join("".join(map(str, p)) for p in M.perms[t]))
        lines.append(" ".join(str(int(c)) for c in M.vertex_cusp[t]))
        lines += [" ".join(["0"] * 16)] * 4
        z = complex(M.shapes[t])
        lines.append(f"{z.real!r} {z.imag!r}")
        lines.append("")
    return "\n".join(lines) + "\n"


def cover_systole(C: TriangulatedManifold) -> float:
    """Systole of a combinatorially built cover, checked against snappy's solution."""
    S = snappy.Manifold(to_snappea(C))
    assert abs(S.volume() - volume(C)) < 1e-9, (S.volume(), volume(C))
    return systole(S)


def write(M: TriangulatedManifold, out: Path) -> None:
    text = format_manifold(M)
    parse_manifold_text(text)  # must round-trip through the validator
    (out / f"{M.name}.tri").write_text(text, encoding="utf-8")


def double_cover(M: TriangulatedManifold, name: str):
    """Double cover of M classified by the image generator reduced mod 2.

    Tetrahedron t on sheet s becomes 2t + s; crossing a face shifts the sheet
    by the generator's jump across it.  Returns the cover and the pullback
    matrix (cover image coordinates of the pulled-back base generators).
    """
    B = co.image_subspace(M)
    K = B.complex_
    jumps = co.dual_jumps(K, co.per_tet_potentials(B.reps[0]))
    n = M.n_tets
    targets = np.empty((2 * n, 4), dtype=int)
    perms = [[None] * 4 for _ in range(2 * n)]
    for t in range(n):
        for f in range(4):
            fid = int(K.face_of[t, f])
            shift = int(jumps[fid]) % 2
            u = int(M.targets[t, f])
            for s in range(2):
                targets[2 * t + s, f] = 2 * u + (s + shift) % 2
                perms[2 * t + s][f] = M.perms[t][f]
    perms = tuple(tuple(r) for r in perms)
    shapes = np.repeat(M.shapes, 2)
    vclass = vertex_classes(targets, perms)
    base_cusp = {}
    for t in range(2 * n):
        for v in range(4):
            base_cusp.setdefault(int(vclass[t, v]), int(M.vertex_cusp[t // 2, v]))
    cusps = [M.cusps[base_cusp[c]] for c in range(len(base_cusp))]
    C = TriangulatedManifold(
        name=name, targets=targets, perms=perms, shapes=shapes, cusps=cusps,
        systole=M.systole, vertex_cusp=vclass, oriented=is_oriented(perms),
    )
    CB = co.image_subspace(C)
    matrix = []
    for rep in B.reps:
        coords = CB.coords_of(np.repeat(rep, 2, axis=0))
        assert coords is not None and all(c.denominator == 1 for c in coords)
        matrix.append([int(c) for c in coords])
    # rows of the declared matrix are cover coordinates, columns base coordinates
    matrix = tuple(tuple(row) for row in np.array(matrix, dtype=int).T.tolist())
    return C, matrix


def main(out: Path = DEFAULT_OUT) -> None:
    out.mkdir(parents=True, exist_ok=True)
    s789 = from_snappy(
        snappy.Manifold("s789"),
        thurston_ball=np.array([[0.5], [-0.5]]),
        class_norms={(1,): 2.0},
    )
    write(s789, out)
    write(from_snappy(snappy.Manifold("m004")), out)
    write(from_snappy(snappy.Manifold("m203")), out)
    cover, matrix = double_cover(s789, "s789_cover2")
    cover.cover_of = CoverDecl("s789", 2, matrix)
    cover.systole = cover_systole(cover)
    # the base generator pulls back to 2 g'; norms multiply by the degree, so Th(g') = 2
    cover.thurston_ball = np.array([[0.5], [-0.5]])
    cover.class_norms = {(1,): 2.0}
    write(cover, out)


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else DEFAULT_OUT)
