"""3D solves, limit comparisons and convergence sweeps over eps."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .capacity import build_capacitary_set, coercivity_eigen, penalty_form, relative_gaps
from .fem import (Frame, assemble_body_load, assemble_prestrain_load, assemble_stiffness,
                  impose_dirichlet, solve_spd, strain_at_quadrature, values_at_quadrature)
from .geometry import build_cylinder_mesh, build_section_mesh
from .limit import CellStrainBasis, eval_E, eval_limit_displacement, solve_limit
from .material import voigt_to_strain
from .regimes import corrector_eval

log = logging.getLogger(__name__)

CSV_COLUMNS = ("epsilon", "r_epsilon", "regime", "rho", "err_disp", "err_strain", "energy_ratio",
               "cg_iters", "residual")


@dataclass
class Solve3D:
    eps: float
    r_eps: float
    mesh: object
    U: object
    seconds: float = 0.0

    @property
    def stats(self):
        return self.U.stats

    @property
    def ndof(self):
        return 3 * len(self.mesh.nodes)


def cylinder_mesh(config, eps):
    return build_cylinder_mesh(config.section, config.patch, eps, config.r_eps(eps),
                               axial_n=config.axial_n, grading=config.grading, n_side=config.n_side,
                               axial_h=config.axial_h_factor * eps, axial_refine=config.axial_refine)


def solve3d(config, eps, loads=None):
    """Clamped 3D problem on the thin cylinder for one ``eps``."""
    t0 = time.perf_counter()
    loads = loads or config.loads
    mesh = cylinder_mesh(config, eps)
    system = assemble_stiffness(mesh, config.material, Frame.cylinder(eps))
    rhs = np.zeros(system.ndof)
    f, h = loads.f_field(), loads.h_field()
    if f is not None:
        rhs += assemble_body_load(mesh, f, eps)
    if h is not None:
        rhs += assemble_prestrain_load(mesh, h, eps)
    system = impose_dirichlet(system.with_rhs(rhs),
                              np.concatenate([mesh.node_sets["gamma0"], mesh.node_sets["gamma1"]]))
    U = solve_spd(system, tol=config.tol, maxit=config.maxit, method=config.method)
    dt = time.perf_counter() - t0
    log.info("solve3d eps=%g dof=%d it=%d res=%.2e %.1fs", eps, system.ndof, U.stats.iterations,
             U.stats.residual, dt)
    return Solve3D(eps, config.r_eps(eps), mesh, U, dt)


def limit_section(config):
    """Cell mesh sharing the boundary polygon of the cylinder sections."""
    if config.section.shape == "disc":
        return build_section_mesh(config.section, n_side=config.n_side, refine=config.limit_refine)
    return build_section_mesh(config.section, h=config.limit_section_h)


@dataclass
class LimitContext:
    regime: object
    solution: object
    capacitary: object = None
    penalty: object = None
    coercivity: float | None = None
    bracket: dict = field(default_factory=dict)


def prepare_limit(config, loads=None):
    """Limit solve (once per study) and, for critical regimes, the capacitary data."""
    loads = loads or config.loads
    regime = config.regime
    cset = None
    pen = None
    lam = None
    bracket = {}
    if regime.is_critical:
        A0 = config.material.voigt_at(np.zeros((1, 3)))[0]
        L = max(config.capacity_L)
        kw = dict(n_side=config.capacity_n_side, grading=config.capacity_grading)
        cset = build_capacitary_set(A0, config.patch, L, "natural", **kw)
        clamped = build_capacitary_set(A0, config.patch, L, "clamped", **kw)
        bracket = {"L": L, "relative_gap": relative_gaps({(L, "natural"): cset, (L, "clamped"): clamped}, L)}
        pen = penalty_form(regime, cset)
        lam = coercivity_eigen(pen)
    sol = solve_limit(regime, config.material, limit_section(config), loads.f_field(), loads.h_field(),
                      n_axial=config.limit_n_axial, penalty=pen)
    return LimitContext(regime, sol, cset, pen, lam, bracket)


# ---------------------------------------------------------------------------
# error functionals


def _reference_points(mesh, eps):
    pts, w, _, _ = mesh.quadrature()
    y = pts.copy()
    y[..., 1:] /= eps
    return pts, y, w


def err_disp(U, sol, mesh, eps):
    """Normalized ``int |U_1 - u_1|^2 + sum |eps U_a - u_a|^2`` over the cylinder."""
    vals, w, pts = values_at_quadrature(mesh, U)
    y = pts.copy()
    y[..., 1:] /= eps
    u = eval_limit_displacement(sol, y.reshape(-1, 3)).reshape(vals.shape)
    d = vals * np.array([1.0, eps, eps]) - u
    return float(np.sum(w * np.sum(d * d, axis=-1)) / np.sum(w))


def limit_strain_on_mesh(sol, mesh, eps):
    """``E(u, v, w)(x_1, x'/eps)`` at the mesh quadrature points, (ne, nq, 3, 3)."""
    pts, w, _, _ = mesh.quadrature()
    ne, nq = w.shape
    plane = mesh.meta.get("plane")
    if plane is None:
        y = pts.copy()
        y[..., 1:] /= eps
        return eval_E(sol, y.reshape(-1, 3)).reshape(ne, nq, 3, 3)
    nquad = len(plane.quads)
    nlay = ne // nquad
    yp = pts[:nquad, :, 1:].reshape(-1, 2) / eps
    basis = CellStrainBasis(sol, yp)
    # y1 depends only on the layer and the Gauss level, not on the plane quad
    theta = sol.fields(pts[::nquad, :, 0].ravel())["theta"].reshape(nlay, nq, 4)
    near = sol.nearest_cell(pts[::nquad, :, 0].ravel()).reshape(nlay, nq)
    Ev = np.zeros((nlay, nquad, nq, 6))
    homogeneous = sol.cells and all(c.modes is sol.cells[0].modes for c in sol.cells)
    cache = {}

    def modes_for(q):
        key = 0 if homogeneous else q
        if key not in cache:
            cache[key] = basis.modes(sol.cells[q]).reshape(nquad, nq, 4, 6)
        return cache[key]

    for q in np.unique(near):
        lay, g = np.nonzero(near == q)
        M = modes_for(q)
        hs = basis.h_strain(sol.cells[q]).reshape(nquad, nq, 6)
        for gg in np.unique(g):
            rows = lay[g == gg]
            Ev[rows, :, gg] = np.einsum("lm,pmi->lpi", theta[rows, gg], M[:, gg]) + hs[None, :, gg]
    return voigt_to_strain(Ev.reshape(ne, nq, 6))


def err_strain(U, sol, mesh, eps, r_eps, regime=None, capacitary=None):
    """Normalized ``int |e(U) - E - P(x / (eps r_eps))|^2`` over the cylinder."""
    samples = strain_at_quadrature(mesh, U)
    diff = samples.strain - limit_strain_on_mesh(sol, mesh, eps)
    if regime is not None and regime.is_critical:
        z = samples.points.reshape(-1, 3) / (eps * r_eps)
        P = corrector_eval(regime, capacitary, sol.trace, eps, r_eps, z)
        diff = diff - P.reshape(diff.shape)
    w = samples.weights
    return float(np.sum(w * np.einsum("eqij,eqij->eq", diff, diff)) / np.sum(w))


def corrector_seminorm(ctx, mesh, eps, r_eps):
    """Normalized ``int |P(x / (eps r_eps))|^2`` over the cylinder; 0 for non-critical regimes."""
    if not ctx.regime.is_critical:
        return 0.0
    pts, w, _, _ = mesh.quadrature()
    P = corrector_eval(ctx.regime, ctx.capacitary, ctx.solution.trace, eps, r_eps,
                       pts.reshape(-1, 3) / (eps * r_eps))
    return float(w.ravel() @ np.einsum("nij,nij->n", P, P) / np.sum(w))


def strain_seminorm(U, mesh):
    s = strain_at_quadrature(mesh, U)
    return float(np.sum(s.weights * np.einsum("eqij,eqij->eq", s.strain, s.strain)) / np.sum(s.weights))


def load_norm(loads, mesh, eps):
    """``(1/|Omega|) int |f|^2 + (1/|Omega|) int |h|^2`` evaluated through the cylinder map."""
    _, y, w = _reference_points(mesh, eps)
    y = y.reshape(-1, 3)
    w = w.ravel()
    total = 0.0
    f, h = loads.f_field(), loads.h_field()
    if f is not None:
        total += float(w @ np.sum(f(y) ** 2, axis=1))
    if h is not None:
        total += float(w @ np.sum(h(y) ** 2, axis=(1, 2)))
    return total / float(w.sum())


def face_average_u1(U, mesh):
    """Area-weighted mean of ``U_1`` over the end face ``x_1 = 0``."""
    plane = mesh.meta["plane"]
    _, w, _, N = plane.quadrature()
    u1 = U.nodal[: len(plane.nodes), 0]
    vals = np.einsum("qa,ea->eq", N, u1[plane.quads])
    return float(np.sum(w * vals) / np.sum(w))


# ---------------------------------------------------------------------------
# studies


@dataclass
class StudyRow:
    epsilon: float
    r_epsilon: float
    regime: str
    rho: float | None
    err_disp: float = math.nan
    err_strain: float = math.nan
    energy_ratio: float = math.nan
    cg_iters: int = -1
    residual: float = math.nan
    u1_face: float = math.nan
    corrector: float = math.nan
    ndof: int = 0
    seconds: float = 0.0
    error: str = ""

    def csv_values(self):
        rho = "" if self.rho is None else _fmt(self.rho)
        return [_fmt(self.epsilon), _fmt(self.r_epsilon), self.regime, rho, _fmt(self.err_disp),
                _fmt(self.err_strain), _fmt(self.energy_ratio), str(self.cg_iters), _fmt(self.residual)]


def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return f"{float(x):.10e}"


@dataclass
class ConvergenceReport:
    rows: list
    header: str
    limit: LimitContext
    verdict: dict = field(default_factory=dict)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def to_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for r in self.rows:
            wr.writerow(r.csv_values())
        return buf.getvalue()

    def summary(self):
        lines = [self.header]
        if self.limit.coercivity is not None:
            lines.append(f"penalty smallest eigenvalue: {self.limit.coercivity:.6e}")
        if self.limit.bracket:
            gaps = " ".join(f"{g:.3e}" for g in self.limit.bracket["relative_gap"])
            lines.append(f"capacity bracket at L={self.limit.bracket['L']:g}: relative gaps {gaps}")
        lines.append("trace: " + " ".join(f"{v:.6e}" for v in self.limit.solution.trace))
        for r in self.rows:
            msg = f"eps={r.epsilon:g} err_disp={r.err_disp:.4e} err_strain={r.err_strain:.4e} " \
                  f"energy_ratio={r.energy_ratio:.4e} u1_face={r.u1_face:.4e} corrector={r.corrector:.4e} " \
                  f"dof={r.ndof} " \
                  f"iters={r.cg_iters} time={r.seconds:.1f}s"
            lines.append(msg + (f" ERROR {r.error}" if r.error else ""))
        for k, v in self.verdict.items():
            lines.append(f"{k}: {'pass' if v else 'fail'}")
        return "\n".join(lines) + "\n"

    @property
    def passed(self):
        return all(self.verdict.values())


def _strictly_decreasing(x, factor=1.0):
    x = np.asarray(x, dtype=float)
    if len(x) < 2 or not np.all(np.isfinite(x)):
        return bool(len(x) >= 1 and np.all(x == 0))
    if np.all(x == 0):
        return True
    return bool(np.all(x[:-1] > factor * x[1:]))


def bounded_ratio(ratios, margin=3.0):
    r = np.asarray([v for v in ratios if np.isfinite(v)], dtype=float)
    if len(r) == 0:
        return True
    med = float(np.median(r))
    return bool(r.max() <= margin * med) if med > 0 else bool(np.all(r == 0))


def evaluate(config, ctx, sol3d, loads=None):
    """Error metrics of one 3D solution against the limit."""
    loads = loads or config.loads
    eps, r = sol3d.eps, sol3d.r_eps
    row = StudyRow(eps, r, ctx.regime.tag.value, ctx.regime.rho)
    row.cg_iters = sol3d.stats.iterations
    row.residual = sol3d.stats.residual
    row.ndof = sol3d.ndof
    row.seconds = sol3d.seconds
    row.err_disp = err_disp(sol3d.U, ctx.solution, sol3d.mesh, eps)
    row.err_strain = err_strain(sol3d.U, ctx.solution, sol3d.mesh, eps, r, ctx.regime, ctx.capacitary)
    lnorm = load_norm(loads, sol3d.mesh, eps)
    row.energy_ratio = strain_seminorm(sol3d.U, sol3d.mesh) / lnorm if lnorm > 0 else math.nan
    row.u1_face = face_average_u1(sol3d.U, sol3d.mesh)
    row.corrector = corrector_seminorm(ctx, sol3d.mesh, eps, r)
    return row


def run_study(config, out_dir=None, threads=1, ctx=None, keep_solutions=False):
    """Sweep over ``config.eps``; failures are recorded per eps and the sweep continues."""
    ctx = ctx or prepare_limit(config)
    header = ctx.regime.header()
    solutions = {}

    def one(eps):
        try:
            s = solve3d(config, eps)
            row = evaluate(config, ctx, s)
            if keep_solutions:
                solutions[eps] = s
            return row
        except Exception as exc:  # noqa: BLE001 - recorded in the report
            log.exception("eps=%g failed", eps)
            row = StudyRow(eps, config.r_eps(eps), ctx.regime.tag.value, ctx.regime.rho)
            row.error = f"{type(exc).__name__}: {exc}"
            return row

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, config.eps))
    else:
        rows = [one(e) for e in config.eps]
    report = ConvergenceReport(rows, header, ctx)
    report.verdict = {
        "err_disp decreasing": _strictly_decreasing([r.err_disp for r in rows]),
        "err_strain decreasing": _strictly_decreasing([r.err_strain for r in rows]),
        "energy ratio bounded": bounded_ratio([r.energy_ratio for r in rows]),
        "all solves succeeded": not any(r.error for r in rows),
    }
    if ctx.coercivity is not None:
        report.verdict["penalty coercive"] = ctx.coercivity > 0
    report.solutions = solutions
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def write_report(report, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "study.csv").write_text(report.to_csv())
    (out / "summary.txt").write_text(report.summary())


def energy_bound_report(config, report=None):
    """Per eps: normalized strain energy over the load norm, and a boundedness verdict."""
    if config.loads.f_is_zero and config.loads.h_is_zero:
        rows = [(e, None) for e in config.eps]
        return {"rows": rows, "bounded": True, "applicable": False}
    report = report or run_study(config)
    rows = [(r.epsilon, r.energy_ratio) for r in report.rows]
    return {"rows": rows, "bounded": bounded_ratio([v for _, v in rows]), "applicable": True}
