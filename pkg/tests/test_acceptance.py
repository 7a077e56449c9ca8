"""Acceptance suite: one test per criterion, each at its stated tolerance.

Every test records a verdict line; the terminal summary prints one
``criterion N: PASS|FAIL`` line per criterion (see ``conftest.py``). Run
alone with ``pytest tests/test_acceptance.py -v``.
"""
import math
import time

import numpy as np
import pytest

from clampedbeam.capacity import (bracket, coercivity_eigen, penalty_form, relative_gaps)
from clampedbeam.config import build_config
from clampedbeam.fem import Frame, assemble_stiffness
from clampedbeam.geometry import SectionSpec, build_section_mesh
from clampedbeam.limit import beam_loads, micro_cell_solve, solve_limit, solve_monolithic
from clampedbeam.material import MaterialField
from clampedbeam.regimes import Regime, RegimeSpec, classify
from clampedbeam.study import evaluate, prepare_limit, run_study, solve3d

RESULTS = {}
TITLES = {
    1: "cross-section stiffness oracle",
    2: "closed-form rod with penalty",
    3: "penalty coercivity at L=16",
    4: "truncation bracketing",
    5: "orthogonality of hatted potentials",
    6: "corrector convergence (p=2)",
    7: "regime discrimination (p=2 vs p=2/3)",
    8: "normalized energy bound",
    9: "condensed vs monolithic limit solver",
    10: "zero-load and linearity suite",
}

ISO = MaterialField.isotropic(1.0, 0.3)
MU = 1.0 / 2.6
DISC = SectionSpec.disc(1.0)
AXIAL = lambda y: np.column_stack([np.ones(len(y)), np.zeros(len(y)), np.zeros(len(y))])
SWEEP = {"study.eps": "0.2, 0.1, 0.05", "mesh.axial_h_factor": "0.5"}


def check(n, ok, detail):
    RESULTS[n] = (bool(ok), detail)
    assert ok, f"criterion {n} ({TITLES[n]}): {detail}"


# ---------------------------------------------------------------------------
# shared fixtures


@pytest.fixture(scope="module")
def capacity_sets():
    t0 = time.perf_counter()
    A0 = ISO.voigt_at(np.zeros((1, 3)))[0]
    sets = bracket(A0, DISC, (8.0, 16.0))
    return sets, time.perf_counter() - t0


@pytest.fixture(scope="module")
def bending_sweep():
    cfg = build_config({**SWEEP, "regime.p": "2", "load.f1": "1 + y2", "load.f2": "1"})
    t0 = time.perf_counter()
    report = run_study(cfg)
    return cfg, report, time.perf_counter() - t0


def axial_sweep(p):
    cfg = build_config({**SWEEP, "regime.p": p, "load.f1": "1"})
    return run_study(cfg)


# ---------------------------------------------------------------------------
# criteria


def test_criterion_1_cross_section():
    t0 = time.perf_counter()
    D = micro_cell_solve(build_section_mesh(DISC), ISO).D
    exact = np.array([math.pi, math.pi / 4, math.pi / 4, MU * math.pi / 2])
    rel = np.abs(np.diag(D) - exact) / exact
    off = np.max(np.abs(D - np.diag(np.diag(D)))) / np.linalg.norm(D)
    Dsq = micro_cell_solve(build_section_mesh(SectionSpec.rect(1.0, 1.0)), ISO).D
    tors = abs(Dsq[3, 3] - MU * 0.140577) / (MU * 0.140577)
    dt = time.perf_counter() - t0
    check(1, np.all(rel < 0.01) and off < 1e-3 and tors < 0.01 and dt < 30,
          f"max rel err {rel.max():.2e}, off-diag {off:.1e}, square torsion err {tors:.2e}, {dt:.1f}s")


def test_criterion_2_penalized_rod(capacity_sets):
    sets, _ = capacity_sets
    t0 = time.perf_counter()
    section = build_section_mesh(DISC)
    free = solve_limit(classify(1.0, 2), ISO, section, AXIAL, n_axial=32)
    D1 = free.cells[0].D[0, 0]
    N = beam_loads(AXIAL, section, [0.0]).N[0]
    cset = sets[(16.0, "natural")]
    k = cset.phi1_hat_gram()
    values, errs = [], []
    for rho in (1e-3, 1.0, 1e3):
        regime = RegimeSpec(Regime.CRITICAL_1, rho, 1, rho)
        sol = solve_limit(regime, ISO, section, AXIAL, n_axial=32, penalty=penalty_form(regime, cset))
        expected = N / (2 * (D1 + rho * k))
        values.append(sol.trace[2])
        errs.append(abs(sol.trace[2] - expected) / expected)
    t_free = free.trace[2]
    monotone = 0.5 * 1.005 >= t_free and t_free > values[0] > values[1] > values[2] > 0
    dt = time.perf_counter() - t0
    check(2, abs(t_free - 0.5) <= 0.0025 and max(errs) <= 0.01 and monotone and dt < 60,
          f"free zeta1(0)={t_free:.5f}, k={k:.4f}, penalized {['%.4e' % v for v in values]}, "
          f"max rel err {max(errs):.1e}, {dt:.1f}s")


def test_criterion_3_coercivity(capacity_sets):
    sets, dt = capacity_sets
    cset = sets[(16.0, "natural")]
    eig = {}
    for tag in (Regime.CRITICAL_3, Regime.CRITICAL_1, Regime.CRITICAL_THIRD):
        eig[tag.value] = coercivity_eigen(penalty_form(RegimeSpec(tag, 1.0, 0, 1.0), cset))
    gaps = relative_gaps(sets, 16.0)
    check(3, all(v > 0 for v in eig.values()) and dt < 300,
          " ".join(f"{k}={v:.4e}" for k, v in eig.items()) + f" (rho=1); bracket gaps at L=16 max {gaps.max():.2e}")


def test_criterion_4_bracketing(capacity_sets):
    sets, dt = capacity_sets
    ordered = all(np.all(np.diag(sets[(L, "natural")].G) <= np.diag(sets[(L, "clamped")].G) * (1 + 1e-12))
                  for L in (8.0, 16.0))
    g8, g16 = relative_gaps(sets, 8.0), relative_gaps(sets, 16.0)
    check(4, ordered and np.all(g16 < g8) and dt < 600,
          f"gap ratio L16/L8 per entry {np.array2string(g16 / g8, precision=3)}, {dt:.1f}s")


def test_criterion_5_orthogonality(capacity_sets):
    sets, _ = capacity_sets
    res = max(sets[(L, ff)].orthogonality_residuals().max() for L in (8.0, 16.0) for ff in ("natural", "clamped"))
    check(5, res <= 1e-8, f"max relative residual {res:.2e}")


def test_criterion_6_corrector_convergence(bending_sweep):
    cfg, report, dt = bending_sweep
    ed, es = report.column("err_disp"), report.column("err_strain")
    dofs = [r.ndof for r in report.rows]
    ok = (np.all(ed[:-1] >= 1.1 * ed[1:]) and np.all(es[:-1] >= 1.1 * es[1:])
          and dt <= 900 and max(dofs) <= 2.1e5)
    check(6, ok, f"err_disp {np.array2string(ed, precision=3)} err_strain {np.array2string(es, precision=3)} "
                 f"max dof {max(dofs)}, {dt:.0f}s")


def test_criterion_7_regime_discrimination():
    rep2 = axial_sweep("2")
    rep23 = axial_sweep("2/3")
    z2 = rep2.limit.solution.trace[2]
    z23 = rep23.limit.solution.trace[2]
    u2, u23 = rep2.column("u1_face"), rep23.column("u1_face")
    stable = z2 > 0 and abs(u2[-1] - z2) <= 0.2 * z2
    dropping = abs(z23) < 1e-14 and np.all(np.diff(u23) < 0) and np.all(u23 > 0)
    check(7, stable and dropping,
          f"p=2: zeta1(0)={z2:.4f}, face means {np.array2string(u2, precision=4)}; "
          f"p=2/3: zeta1(0)={z23:.1e}, face means {np.array2string(u23, precision=4)}")


def test_criterion_8_energy_bound(bending_sweep):
    _, report, _ = bending_sweep
    r = report.column("energy_ratio")
    check(8, np.all(np.isfinite(r)) and r.max() <= 3 * np.median(r),
          f"ratios {np.array2string(r, precision=4)}, max/median {r.max() / np.median(r):.3f}")


def test_criterion_9_monolithic():
    section = build_section_mesh(DISC, n_side=4)
    mat = MaterialField.isotropic(1.0, 0.3, modulation=lambda y: 1 + 0.5 * y[:, 0] * y[:, 1] ** 2)
    f = lambda y: np.column_stack([1 + y[:, 1], 0.5 + y[:, 0], -y[:, 2]])

    def h(y):
        H = np.zeros((len(y), 3, 3))
        H[:, 0, 1] = H[:, 1, 0] = 0.3 * y[:, 2]
        H[:, 2, 2] = y[:, 0]
        return H

    worst = 0.0
    for p in (4, 2, "1/2", "1/5"):
        r = classify(1.0, p)
        sol = solve_limit(r, mat, section, f, h, n_axial=4)
        q = solve_monolithic(r, mat, section, f, h, n_axial=4)
        worst = max(worst, np.linalg.norm(q - sol.q) / np.linalg.norm(sol.q))
    check(9, worst <= 1e-8, f"max relative difference {worst:.2e}")


def test_criterion_10_linearity():
    coarse = {"study.eps": "0.5", "mesh.n_side": "4", "mesh.axial_h_factor": "1.0", "limit.n_axial": "8",
              "limit.refine": "1"}
    zero_cfg = build_config(coarse)
    zero_rep = run_study(zero_cfg, keep_solutions=True)
    zero_ok = (not np.any(zero_rep.solutions[0.5].U.values) and not np.any(zero_rep.limit.solution.q)
               and zero_rep.rows[0].err_disp == 0 and zero_rep.rows[0].err_strain == 0)
    cfg = build_config({**coarse, "load.f1": "1 + y2", "load.f3": "y1", "load.h12": "0.1 * y3"})
    s = 3.0
    ctx, ctx_s = prepare_limit(cfg), prepare_limit(cfg, cfg.loads.scaled(s))
    a, b = solve3d(cfg, 0.5), solve3d(cfg, 0.5, cfg.loads.scaled(s))
    ra = evaluate(cfg, ctx, a)
    rb = evaluate(cfg, ctx_s, b, cfg.loads.scaled(s))
    sol_ok = (np.linalg.norm(b.U.values - s * a.U.values) <= 1e-8 * np.linalg.norm(b.U.values)
              and np.allclose(ctx_s.solution.q, s * ctx.solution.q, rtol=1e-10, atol=1e-14))
    err_ok = (math.isclose(rb.err_disp, s**2 * ra.err_disp, rel_tol=1e-6)
              and math.isclose(rb.err_strain, s**2 * ra.err_strain, rel_tol=1e-6))
    K = assemble_stiffness(a.mesh, cfg.material, Frame.cylinder(0.5)).K
    x = a.mesh.nodes
    rig = [np.tile(e, (len(x), 1)).ravel() for e in np.eye(3)] + [np.cross(w, x).ravel() for w in np.eye(3)]
    rig_e = max(abs(u @ (K @ u)) / (u @ u) for u in rig) / abs(K).max()
    check(10, zero_ok and sol_ok and err_ok and rig_e < 1e-12,
          f"zero loads ok={zero_ok}, solutions scale={sol_ok}, errors scale s^2={err_ok}, "
          f"rigid energy {rig_e:.1e}")


if __name__ == "__main__":  # pragma: no cover
    import sys
    sys.exit(pytest.main([__file__, "-v"]))
