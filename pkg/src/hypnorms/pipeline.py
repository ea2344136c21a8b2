"""Batch pipeline: load manifolds, compute harmonic representatives and norms, write reports.

Each input file is analysed independently (triangulations ``.tri`` and closed
meshes ``.mesh``).  For every configured refinement and truncation height
the harmonic representative of each image-basis class is computed; the
finest mesh supplies the report values, the rest feed the convergence tables.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from . import cohomology as co
from . import cusp as cu
from . import hodge as hd
from . import inequalities as iq
from . import mesh as ms
from .geometry import MARGULIS_MU, truncation_constants, volume
from .manifold_io import parse_manifold

log = logging.getLogger("hypnorms")

WORKERS_ENV = "HYPNORMS_WORKERS"
SUPPORTED_SUFFIXES = (".tri", ".mesh")
REPORT_VERSION = 1
UPPER_BOUND_SAMPLES = 256


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    inputs: list[str] = field(default_factory=list)
    heights: Optional[list[float]] = None  # truncation heights T (top horotorus at e^T); None: tau only
    refinements: list[int] = field(default_factory=lambda: [1])
    quadrature_order: int = hd.QUADRATURE_ORDER
    solver_rtol: float = hd.SOLVER_RTOL
    ds_samples: int = 4096
    out: str = "hypnorms_out"
    l1_min: bool = True
    l1_max_tets: int = 120_000
    flux: bool = True

    def validate(self) -> "RunConfig":
        if self.heights is not None:
            self.heights = [float(h) for h in self.heights]
            if not self.heights or any(b <= a for a, b in zip(self.heights, self.heights[1:])):
                raise ConfigError("heights must be non-empty and strictly ascending")
        self.refinements = sorted({int(r) for r in self.refinements})
        if not self.refinements or self.refinements[0] < 0 or self.refinements[-1] > ms.MAX_REFINEMENT:
            raise ConfigError(f"refinements must lie in [0, {ms.MAX_REFINEMENT}]")
        if self.quadrature_order != hd.QUADRATURE_ORDER:
            raise ConfigError(f"only the {hd.QUADRATURE_ORDER}-point cell rule is available")
        if not self.solver_rtol > 0 or not self.ds_samples > 0 or not self.l1_max_tets > 0:
            raise ConfigError("tolerances and sample counts must be positive")
        self.inputs = [str(p) for p in self.inputs]
        return self

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def expand_inputs(paths) -> list[Path]:
    """Input files in deterministic order; directories contribute their supported files."""
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            out += sorted(q for q in p.iterdir() if q.suffix in SUPPORTED_SUFFIXES)
        elif p.is_file():
            out.append(p)
        else:
            raise ConfigError(f"input not found: {p}")
    return out


# ----------------------------------------------------------------------------
# JSON plumbing


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


# ----------------------------------------------------------------------------
# per-manifold analysis


@dataclass
class Source:
    name: str
    kind: str  # "ideal" | "closed"
    data: object
    basis: co.ImageBasis
    vol: float
    constants: iq.RHSConstants
    hyperbolic: bool
    tau: Optional[float]

    def mesh(self, refinement: int, T: Optional[float]) -> ms.MetricMesh:
        if self.kind == "ideal":
            return ms.build_metric_mesh(self.data, T, refinement)
        return ms.mesh_from_file(self.data, refinement + 1)


def load_source(path: Path) -> Source:
    if path.suffix == ".tri":
        M = parse_manifold(path)
        tc = truncation_constants(M)
        return Source(M.name, "ideal", M, co.image_subspace(M), volume(M), iq.rhs_constants(M), True, tc.tau)
    if path.suffix == ".mesh":
        mf = ms.parse_mesh(path)
        C = mf.complex
        basis = co.image_subspace_mesh(C.n_vertices, C.edges, C.face_edges, C.tet_faces, C.tet_edges)
        m0 = ms.mesh_from_file(mf, 1)
        # closed file meshes carry flat cells: a non-hyperbolic control
        return Source(mf.name, "closed", mf, basis, float(m0.analytic_volume), iq.rhs_constants(mf), False, None)
    raise ValueError(f"unsupported input type {path.suffix!r}")


def _unit(rank: int, i: int) -> tuple[int, ...]:
    return tuple(1 if j == i else 0 for j in range(rank))


def _thurston_evaluator(src: Source, records: list[dict], mesh, samples_cache: dict):
    """Thurston norm on real image coordinates, plus a provenance label."""
    ball = getattr(src.data, "thurston_ball", None)
    if ball is not None:
        return (lambda x: co.ball_gauge(ball, x)), "ingested"
    if src.basis.rank == 1:
        th = records[0]["thurston"]["value"] / abs(float(records[0]["coords"][0]))
        return (lambda x: abs(float(x[0])) * th), records[0]["thurston"]["provenance"]
    zeros = [[float(c) for c in r["coords"]] for r in records if r["thurston"]["provenance"] == "ingested" and r["thurston"]["value"] == 0]
    if zeros and np.linalg.matrix_rank(np.array(zeros)) == src.basis.rank:
        # a seminorm vanishing on a spanning set vanishes everywhere
        return (lambda x: 0.0), "ingested"

    def ev(x):
        q = [Fraction(float(v)).limit_denominator(24) for v in x]
        key = tuple(q)
        if key not in samples_cache:
            samples_cache[key] = co.thurston_norm(co.CohomologyClass.of(q), src.data, mesh, src.basis).value
        return samples_cache[key]

    return ev, "upper_bound"


def analyze(path, cfg: RunConfig) -> dict:
    """Full pipeline for one input; returns the report dictionary."""
    path = Path(path)
    src = load_source(path)
    rank = src.basis.rank
    heights = [None] if src.kind == "closed" else (cfg.heights or [src.tau])
    report = {
        "version": REPORT_VERSION,
        "manifold": src.name,
        "input": path.name,
        "kind": src.kind,
        "config": asdict(cfg),
        "rank": rank,
        "b1": src.basis.homology.b1,
        "constants": {
            "vol": src.vol,
            "systole": src.constants.systole,
            "d_max": src.constants.diameter,
            "mu": MARGULIS_MU,
            "tau": src.tau,
            "v_ln_sqrt2": iq.v_of_r(math.log(math.sqrt(2.0))),
            "inv_sqrt_v_ln_sqrt2": 1 / math.sqrt(iq.v_of_r(math.log(math.sqrt(2.0)))),
            "rhs_main": src.constants.main,
            "rhs_linf": src.constants.linf,
            "rhs_branch": src.constants.branch,
        },
        "provenance": {"vol": "computed", "systole": "ingested", "d_max": "computed" if src.kind == "ideal" else None},
        "thurston_ball": getattr(src.data, "thurston_ball", None),
        "cover_of": None,
        "classes": [],
        "convergence": {},
    }
    cover = getattr(src.data, "cover_of", None)
    if cover is not None:
        report["cover_of"] = {"base": cover.base, "degree": cover.degree, "matrix": cover.matrix}
    if rank == 0:
        report["D"] = {"error": "no L2 harmonic forms"}
        report["inequalities"] = []
        return report

    units = [_unit(rank, i) for i in range(rank)]
    classes = co.listed_classes(src.data, src.basis) or units
    rows = {i: [] for i in range(len(classes))}
    final = {}
    l1_mesh = None
    for r in cfg.refinements:
        for T in heights:
            mesh = src.mesh(r, T)
            M1 = hd.dec_operators(mesh).M1
            forms = [hd.harmonic_representative(src.basis, c, mesh, rtol=cfg.solver_rtol) for c in classes]
            for i, F in enumerate(forms):
                nb = hd.norms(F, mesh, M1)
                disc = None
                if cfg.flux:
                    disc = hd.flux_check(F, hd.harmonic_surface(F, mesh), mesh, M1).discrepancy
                rows[i].append({"refinement": r, "level": mesh.level, "height": T, "n_tets": mesh.n_tets,
                                "l2": nb.l2, "l1": nb.l1, "linf": nb.linf, "flux_discrepancy": disc, "residual": F.residual})
            if mesh.n_tets <= cfg.l1_max_tets and T == heights[-1]:
                l1_mesh = (r, mesh, forms)
            final = {"mesh": mesh, "forms": forms, "M1": M1, "refinement": r}
    mesh, forms, M1 = final["mesh"], final["forms"], final["M1"]
    basis_forms = forms if classes == units else [hd.harmonic_representative(src.basis, u, mesh, rtol=cfg.solver_rtol) for u in units]
    X = np.column_stack([F.edge_values for F in basis_forms])
    gram = X.T @ (M1 @ X)
    gram = 0.5 * (gram + gram.T)
    report["gram"] = gram
    report["finest"] = {"refinement": final["refinement"], "n_tets": mesh.n_tets, "mesh_volume": mesh.total_volume()}

    records = []
    for i, F in enumerate(forms):
        cls = co.CohomologyClass.of(classes[i])
        th = co.thurston_norm(cls, src.data, mesh, src.basis)
        fin = rows[i][-1]
        rec = {"coords": cls.coords, "thurston": {"value": th.value, "provenance": th.provenance},
               "l2": fin["l2"], "l1": fin["l1"], "linf": fin["linf"], "cv": hd.constant_length_cv(mesh, F),
               "flux_discrepancy": fin["flux_discrepancy"], "residual": F.residual, "l1_min": None, "l1_min_refinement": None}
        if cfg.l1_min and l1_mesh is not None:
            r1, m1, f1 = l1_mesh
            rec["l1_min"], _ = hd.l1_minimize(m1, f1[i].cocycle)
            rec["l1_min_refinement"] = r1
        rec["error_budget"] = _error_budget(src, cfg, rows[i], F, mesh, heights)
        records.append(rec)
    report["classes"] = records
    report["convergence"] = {str(i): rows[i] for i in range(len(classes))}

    class_records = [
        iq.ClassRecord(r["coords"], r["thurston"]["value"], r["thurston"]["provenance"], r["l2"], r["l1"], r["l1_min"], r["linf"], r["cv"],
                       r["error_budget"]["total"], r["error_budget"])
        for r in records
    ]
    entries = iq.main_inequality_report(src.vol, src.constants, class_records, src.hyperbolic)
    report["inequalities"] = [e.as_dict() for e in entries]
    report["sharpness"] = [
        asdict(iq.sharpness_diagnostics(r["cv"], r["thurston"]["value"], r["thurston"]["provenance"], r["l1_min"], e.left_strict))
        for r, e in zip(records, entries)
    ]
    try:
        ev, prov = _thurston_evaluator(src, records, mesh, {})
        ball = getattr(src.data, "thurston_ball", None)
        # each upper-bound sample costs a dual-surface construction
        samples = cfg.ds_samples if prov == "ingested" else min(cfg.ds_samples, UPPER_BOUND_SAMPLES)
        D = iq.functionals_DiDs(src.vol, gram, ball=ball, norm=None if ball is not None else ev, samples=samples)
        report["D"] = {"Di": D.Di, "Ds": D.Ds, "argmin": D.argmin, "argmax": D.argmax, "method": D.method,
                       "resolution": D.resolution, "thurston_provenance": prov}
    except (ValueError, np.linalg.LinAlgError) as exc:
        report["D"] = {"error": str(exc)}
    return report


def _error_budget(src: Source, cfg: RunConfig, rows: list[dict], F, mesh, heights) -> dict:
    """Solver residual, truncation tail and mesh tolerance for one class (absolute, in L2 units)."""
    fin = rows[-1]
    solver = fin["residual"] * fin["l2"]
    tail, tail_method = 0.0, "closed"
    if src.kind == "ideal":
        same_r = [row for row in rows if row["refinement"] == fin["refinement"]]
        if len(same_r) > 1:
            lam1 = min(cu.torus_spectrum(c, 1)[0][1] for c in src.data.cusps)
            sw = hd.truncation_sweep([row["height"] for row in same_r], [row["l2"] for row in same_r], lam1)
            tail, tail_method = abs(sw.extrapolated - fin["l2"]), "sweep"
        else:
            sq = 0.0
            for c in range(len(mesh.cusp_lattices)):
                try:
                    E = cu.cusp_expand(F, mesh, c)
                    sq += cu.tail_norms(E, float(mesh.layer_heights[c][-1]))[0] ** 2
                except ValueError:
                    pass
            tail, tail_method = math.sqrt(sq), "expansion"
    prev = [row for row in rows if row["height"] == fin["height"] and row["refinement"] < fin["refinement"]]
    if prev:
        mesh_tol, mesh_method = abs(fin["l2"] - prev[-1]["l2"]), "refinement difference"
    elif fin["flux_discrepancy"] is not None:
        mesh_tol, mesh_method = fin["flux_discrepancy"] * fin["l2"], "flux discrepancy"
    else:
        mesh_tol, mesh_method = 0.0, "none"
    return {"solver": solver, "tail": tail, "tail_method": tail_method, "mesh": mesh_tol, "mesh_method": mesh_method,
            "total": solver + tail + mesh_tol}


# ----------------------------------------------------------------------------
# batch driver


def _worker(args):
    path, cfg = args
    try:
        return str(path), analyze(path, cfg), None
    except Exception as exc:  # isolation: a failure is recorded, never propagated
        return str(path), None, f"{type(exc).__name__}: {exc}"


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer") from None
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1")
    return n


SUMMARY_FIELDS = ["input", "manifold", "status", "error", "kind", "rank", "vol", "rhs_main", "rhs_branch",
                  "Di", "Ds", "all_hold", "all_strict", "classes"]


def _summary_row(path: str, rep: Optional[dict], err: Optional[str]) -> dict:
    row = dict.fromkeys(SUMMARY_FIELDS, "")
    row["input"] = Path(path).name
    if rep is None:
        row.update(status="failed", error=err)
        return row
    ineq = [e for e in rep["inequalities"] if not e["skipped"]]
    D = rep.get("D", {})
    row.update(
        manifold=rep["manifold"], status="ok", kind=rep["kind"], rank=rep["rank"],
        vol=repr(float(rep["constants"]["vol"])), rhs_main=repr(float(rep["constants"]["rhs_main"])),
        rhs_branch=rep["constants"]["rhs_branch"],
        Di=repr(float(D["Di"])) if "Di" in D else "", Ds=repr(float(D["Ds"])) if "Ds" in D else "",
        all_hold=all(e["left_holds"] and e["right_holds"] for e in ineq), all_strict=all(e["left_strict"] for e in ineq),
        classes=len(rep["classes"]),
    )
    return row


def _csv(rows: list[dict], fields: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in fields})
    return buf.getvalue()


CONVERGENCE_FIELDS = ["refinement", "level", "height", "n_tets", "l2", "l1", "linf", "flux_discrepancy", "residual"]


def cover_checks(reports: dict[str, dict]) -> list[dict]:
    """Cover-scaling records for every cover whose base is in the batch."""
    by_name = {r["manifold"]: r for r in reports.values()}
    out = []
    for rep in sorted(by_name.values(), key=lambda r: r["manifold"]):
        cov = rep.get("cover_of")
        if not cov or cov["base"] not in by_name:
            continue
        base = by_name[cov["base"]]
        if base["rank"] == 0 or rep["rank"] == 0:
            continue
        Gb, Gc = np.asarray(base["gram"]), np.asarray(rep["gram"])
        Mx = np.asarray(cov["matrix"], dtype=np.int64)
        for i in range(base["rank"]):
            x = np.array(_unit(base["rank"], i))
            y = Mx @ x
            lb, lc = math.sqrt(x @ Gb @ x), math.sqrt(y @ Gc @ y)
            tb = _gauge(base, x)
            tc = _gauge(rep, y)
            rec = iq.cover_scaling_check(cov["degree"], Mx, x, lb, lc, base["constants"]["vol"], rep["constants"]["vol"], tb, tc)
            out.append({"cover": rep["manifold"], "base": base["manifold"], **asdict(rec)})
    return out


def _gauge(rep: dict, x) -> Optional[float]:
    ball = rep.get("thurston_ball")
    if ball is None:
        return None
    return co.ball_gauge(np.asarray(ball, dtype=float), x)


def run_batch(cfg: RunConfig) -> int:
    """Run every input; returns the exit status (0 all ok, 1 partial failures)."""
    cfg.validate()
    paths = expand_inputs(cfg.inputs)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if not paths:
        log.warning("no inputs: writing an empty summary")
        _atomic_write(out / "summary.csv", _csv([], SUMMARY_FIELDS))
        return 0
    jobs = [(p, cfg) for p in paths]
    n = min(_workers(), len(jobs))
    if n == 1:
        results = [_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_worker, jobs))
    summary, reports = [], {}
    for path, rep, err in results:
        stem = Path(path).stem
        if rep is None:
            log.error("%s failed: %s", path, err)
        else:
            reports[path] = rep
            _atomic_write(out / f"{stem}.report.json", dumps(rep))
            for k, rows in rep["convergence"].items():
                _atomic_write(out / f"{stem}.class{k}.convergence.csv", _csv(rows, CONVERGENCE_FIELDS))
        summary.append(_summary_row(path, rep, err))
    checks = cover_checks(reports)
    if checks:
        _atomic_write(out / "cover_checks.json", dumps(checks))
    _atomic_write(out / "summary.csv", _csv(summary, SUMMARY_FIELDS))
    return 0 if all(r["status"] == "ok" for r in summary) else 1


# ----------------------------------------------------------------------------
# model sweeps


def model_sweeps(out) -> dict[str, Path]:
    """Plot-ready tables for v(r), the peripheral models, retraction decay and the Bessel identity."""
    out = Path(out)
    files = {}
    r = np.linspace(0.05, 5.0, 100)
    files["v_of_r"] = _table(out / "v_of_r.csv", ["r", "v", "inv_sqrt_v"], [(x, iq.v_of_r(x), 1 / math.sqrt(iq.v_of_r(x))) for x in r])
    rows = [(c, v, math.log((c + 1) / (c - 1)), v / math.log((c + 1) / (c - 1))) for c, v in cu.model_peripheral_norms("torus", [5, 10, 20, 40])]
    files["torus_model"] = _table(out / "torus_model.csv", ["c", "norm_sq", "log_ratio", "proportionality"], rows)
    b = cu.blowup_model()
    files["blowup_model"] = _table(out / "blowup_model.csv", ["z", "partial_norm_sq", "log_z"], [(z, p, math.log(z)) for z, p in zip(b.heights, b.partial_norms)])
    square = (1 + 0j, 1j)
    exp = cu.CuspExpansion(0, [(1 + 0j, 1.0 + 0j)], 1.0, 1.0, square)
    rr = [cu.retraction_compactify(exp, i) for i in (1, 2, 4, 8, 16)]
    files["retraction"] = _table(out / "retraction_decay.csv", ["i", "cutoff_start", "error", "tail"], [(x.support_index, x.cutoff_start, x.error, x.tail) for x in rr])
    z = np.linspace(0.1, 10.0, 100)
    files["bessel"] = _table(out / "bessel_residuals.csv", ["z", "residual"], list(zip(z, cu.bessel_identity_residuals(z))))
    return files


def _table(path: Path, header: list[str], rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    _atomic_write(path, buf.getvalue())
    return path
