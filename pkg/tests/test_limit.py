import math

import numpy as np
import pytest

from clampedbeam.capacity import PenaltyForm, zero_penalty
from clampedbeam.errors import DomainError
from clampedbeam.geometry import SectionSpec, build_section_mesh
from clampedbeam.limit import (BeamMesh, BeamSolution, assemble_limit_system, beam_loads, eval_E,
                               eval_limit_displacement, micro_cell_solve, solve_limit, solve_monolithic,
                               trace_vector)
from clampedbeam.material import MaterialField
from clampedbeam.regimes import Regime, RegimeSpec, classify, constraint_set

ISO = MaterialField.isotropic(1.0, 0.3)
MU = 1.0 / 2.6
F_AXIAL = lambda y: np.column_stack([np.ones(len(y)), np.zeros(len(y)), np.zeros(len(y))])


@pytest.fixture(scope="module")
def disc():
    return build_section_mesh(SectionSpec.disc(1.0), h=0.05)


@pytest.fixture(scope="module")
def coarse_disc():
    return build_section_mesh(SectionSpec.disc(1.0), n_side=4)


@pytest.fixture(scope="module")
def disc_cell(disc):
    return micro_cell_solve(disc, ISO)


def test_disc_stiffness(disc_cell):
    D = disc_cell.D
    exact = np.array([math.pi, math.pi / 4, math.pi / 4, MU * math.pi / 2])
    assert np.all(np.abs(np.diag(D) - exact) / exact < 0.01)
    off = D - np.diag(np.diag(D))
    assert np.max(np.abs(off)) < 1e-3 * np.linalg.norm(D)
    assert np.linalg.eigvalsh(D)[0] > 0
    assert not np.any(disc_cell.g)


def test_square_torsion():
    sq = build_section_mesh(SectionSpec.rect(1.0, 1.0), h=0.05)
    D = micro_cell_solve(sq, ISO).D
    assert abs(D[3, 3] - MU * 0.140577) / (MU * 0.140577) < 0.01
    assert np.isclose(D[0, 0], 1.0, rtol=1e-10)


def test_micro_gauge_constraints(disc, disc_cell):
    pts, w, _, N = disc.quadrature()
    for m in range(4):
        u = disc_cell.modes[:, m].reshape(-1, 3)
        vals = np.einsum("qa,eak->eqk", N, u[disc.quads])
        y2, y3 = pts[..., 0], pts[..., 1]
        assert np.all(np.abs(np.sum(w[..., None] * vals, axis=(0, 1))) < 1e-12)
        assert abs(np.sum(w * (y3 * vals[..., 1] - y2 * vals[..., 2]))) < 1e-12


def test_beam_loads(disc):
    area = disc.area
    L = beam_loads(F_AXIAL, disc, [0.3])
    assert abs(L.N[0] - math.pi) / math.pi < 0.01 and np.isclose(L.N[0], area)
    assert np.allclose(L.M, 0, atol=1e-12) and np.allclose(L.Q, 0)
    L = beam_loads(lambda y: np.column_stack([0 * y[:, 0], np.ones(len(y)), 0 * y[:, 0]]), disc, [0.3])
    assert np.isclose(L.Q[0, 0], area) and L.Q[0, 1] == 0 and L.N[0] == 0
    L = beam_loads(lambda y: np.column_stack([y[:, 1], 0 * y[:, 0], 0 * y[:, 0]]), disc, [0.3])
    assert abs(L.N[0]) < 1e-12 and abs(L.M[0, 0] - math.pi / 4) / (math.pi / 4) < 0.01


def _system(regime, section, penalty=None, n=4):
    beam = BeamMesh(n)
    cell = micro_cell_solve(section, ISO)
    qpts, _ = beam.quadrature()
    loads = beam_loads(F_AXIAL, section, qpts)
    pen = penalty or zero_penalty(regime.tag)
    return beam, assemble_limit_system(beam, [cell] * len(qpts), loads, constraint_set(regime), pen, regime)


def test_assembly_trace_constraints(coarse_disc):
    beam, s = _system(classify(1.0, "1/4"), coarse_disc)
    assert set(beam.trace_dofs()) <= set(s.fixed)
    beam, s = _system(classify(1.0, 4), coarse_disc)
    assert not set(beam.trace_dofs()) & set(s.fixed)
    assert np.max(abs(s.K - s.K.T)) == 0
    Kff, _, _ = s.reduced()
    assert np.linalg.eigvalsh(Kff.toarray())[0] > 0


def test_assembly_penalty_adds_exactly(coarse_disc):
    r = RegimeSpec(Regime.CRITICAL_1, 1.0, 1, 1.0)
    M = np.zeros((6, 6))
    M[2, 2] = 0.7
    beam, s0 = _system(r, coarse_disc, PenaltyForm(Regime.CRITICAL_1, 1.0, np.zeros((6, 6))))
    _, s1 = _system(r, coarse_disc, PenaltyForm(Regime.CRITICAL_1, 1.0, M))
    d = beam.trace_dofs()[2]
    assert s1.K[d, d] - s0.K[d, d] == pytest.approx(0.7, abs=1e-15)
    assert abs(s1.K - s0.K).sum() == pytest.approx(0.7, abs=1e-14)


def test_assembly_rejects_mismatch(coarse_disc):
    with pytest.raises(ValueError):
        _system(classify(1.0, 1), coarse_disc, zero_penalty(Regime.CRITICAL_3))
    M = np.zeros((6, 6))
    M[0, 0] = 1.0
    with pytest.raises(ValueError):
        _system(classify(1.0, 1), coarse_disc, PenaltyForm(Regime.CRITICAL_1, 1.0, M))


def test_zero_loads_zero_solution(coarse_disc):
    sol = solve_limit(classify(1.0, 2), ISO, coarse_disc, None, None, n_axial=8)
    assert not np.any(sol.q) and not np.any(trace_vector(sol))
    y = np.array([[0.3, 0.1, 0.2]])
    assert not np.any(eval_limit_displacement(sol, y)) and not np.any(eval_E(sol, y))


def test_free_end_rod(disc, disc_cell):
    sol = solve_limit(classify(1.0, 2), ISO, disc, F_AXIAL, None, n_axial=16)
    N = beam_loads(F_AXIAL, disc, [0.0]).N[0]
    assert abs(sol.trace[2] - 0.5) < 0.005 * 0.5
    assert np.isclose(sol.trace[2], N / (2 * disc_cell.D[0, 0]), rtol=1e-10)
    y = np.linspace(0, 1, 11)
    zeta1 = sol.fields(y)["val"][:, 0]
    assert np.allclose(zeta1, N / disc_cell.D[0, 0] * (1 - y**2) / 2, rtol=1e-10, atol=1e-14)


@pytest.mark.parametrize("rho_k", [1e-3, 1.0, 1e3])
def test_penalized_rod(disc, disc_cell, rho_k):
    M = np.zeros((6, 6))
    M[2, 2] = rho_k
    pen = PenaltyForm(Regime.CRITICAL_1, 1.0, M)
    sol = solve_limit(RegimeSpec(Regime.CRITICAL_1, 1.0, 1, 1.0), ISO, disc, F_AXIAL, None, 16, pen)
    N = beam_loads(F_AXIAL, disc, [0.0]).N[0]
    expected = N / (2 * (disc_cell.D[0, 0] + rho_k))
    assert abs(sol.trace[2] - expected) <= 0.005 * expected


def test_critical_needs_penalty(coarse_disc):
    with pytest.raises(ValueError):
        solve_limit(classify(1.0, 1), ISO, coarse_disc, F_AXIAL)


def _manual(sol, zeta1=None, zeta2=None, c=None):
    beam = sol.beam
    q = np.zeros(beam.ndof)
    o = beam.offsets()
    xl = np.linspace(0, 1, beam.n_lag)
    if zeta1 is not None:
        q[o["zeta1"]:o["zeta1"] + beam.n_lag] = zeta1(xl)
    if c is not None:
        q[o["c"]:o["c"] + beam.n_lag] = c(xl)
    if zeta2 is not None:
        val, der = zeta2
        q[o["zeta2"]:o["zeta2"] + beam.n_herm:2] = val(beam.x)
        q[o["zeta2"] + 1:o["zeta2"] + beam.n_herm:2] = der(beam.x)
    return BeamSolution(beam, q, sol.cells, sol.section, sol.regime, sol.penalty)


@pytest.fixture(scope="module")
def zero_sol(disc):
    return solve_limit(classify(1.0, 2), ISO, disc, None, None, n_axial=8)


def test_eval_displacement_examples(zero_sol, rng):
    y = np.column_stack([rng.uniform(0, 1, 20), rng.uniform(-0.5, 0.5, (20, 2))])
    s = _manual(zero_sol, zeta1=lambda t: 1 - t)
    assert np.allclose(eval_limit_displacement(s, y), np.column_stack([1 - y[:, 0], 0 * y[:, :2]]), atol=1e-14)
    q = lambda t: t * (1 - t) ** 2
    dq = lambda t: (1 - t) ** 2 - 2 * t * (1 - t)
    s = _manual(zero_sol, zeta2=(q, dq))
    u = eval_limit_displacement(s, y)
    assert np.allclose(u[:, 0], -dq(y[:, 0]) * y[:, 1], atol=1e-13)
    assert np.allclose(u[:, 1], q(y[:, 0]), atol=1e-13) and not np.any(u[:, 2])
    ends = np.column_stack([np.ones(5), rng.uniform(-0.5, 0.5, (5, 2))])
    assert np.allclose(eval_limit_displacement(s, ends), 0, atol=1e-14)


def test_eval_out_of_domain(zero_sol):
    with pytest.raises(DomainError):
        eval_limit_displacement(zero_sol, [[1.5, 0, 0]])
    with pytest.raises(DomainError):
        eval_E(zero_sol, [[0.5, 0.9, 0.9]])


def test_eval_E_extension_poisson(zero_sol, rng):
    s = _manual(zero_sol, zeta1=lambda t: t - 1)
    r = np.sqrt(rng.uniform(0, 0.8, 30))
    a = rng.uniform(0, 2 * np.pi, 30)
    y = np.column_stack([rng.uniform(0, 1, 30), r * np.cos(a), r * np.sin(a)])
    E = eval_E(s, y)
    assert np.allclose(E[:, 0, 0], 1.0, atol=1e-12)
    assert np.all(np.abs(E[:, 1, 1] + 0.3) < 0.003) and np.all(np.abs(E[:, 2, 2] + 0.3) < 0.003)


def test_eval_E_disc_twist_no_warping(zero_sol, rng):
    s = _manual(zero_sol, c=lambda t: t - 1)
    r = np.sqrt(rng.uniform(0, 0.8, 30))
    a = rng.uniform(0, 2 * np.pi, 30)
    y = np.column_stack([rng.uniform(0, 1, 30), r * np.cos(a), r * np.sin(a)])
    E = eval_E(s, y)
    assert np.all(np.abs(E[:, 0, 1] - 0.5 * y[:, 2]) < 1e-3)
    assert np.all(np.abs(E[:, 0, 2] + 0.5 * y[:, 1]) < 1e-3)


def _mixed_load(y):
    return np.column_stack([1 + y[:, 1], 0.5 + y[:, 0], -y[:, 2]])


def _prestress(y):
    H = np.zeros((len(y), 3, 3))
    H[:, 0, 0] = y[:, 2]
    H[:, 0, 1] = H[:, 1, 0] = 0.3 * y[:, 2]
    H[:, 1, 1] = 0.2 + y[:, 0]
    return H


@pytest.mark.parametrize("p", [4, 2, "1/2", "1/5", 1])
def test_monolithic_equivalence(coarse_disc, p):
    regime = classify(1.0, p)
    mat = MaterialField.isotropic(1.0, 0.3, modulation=lambda y: 1 + 0.5 * y[:, 0])
    pen = None
    if regime.is_critical:
        M = np.zeros((6, 6))
        M[2, 2] = 0.8
        pen = PenaltyForm(regime.tag, 1.0, M)
    sol = solve_limit(regime, mat, coarse_disc, _mixed_load, _prestress, n_axial=4, penalty=pen)
    q = solve_monolithic(regime, mat, coarse_disc, _mixed_load, _prestress, n_axial=4, penalty=pen)
    assert np.linalg.norm(q - sol.q) <= 1e-8 * np.linalg.norm(sol.q)


def test_energy_identity(coarse_disc):
    M = np.zeros((6, 6))
    M[2, 2] = 2.0
    pen = PenaltyForm(Regime.CRITICAL_1, 1.0, M)
    sol = solve_limit(RegimeSpec(Regime.CRITICAL_1, 1.0, 1, 1.0), ISO, coarse_disc, _mixed_load, _prestress,
                      n_axial=8, penalty=pen)
    assert sol.energy > 0 and sol.penalty_energy > 0
    assert abs(sol.energy + sol.penalty_energy - sol.work) <= 1e-10 * sol.work


def test_homogeneous_cells_constant(coarse_disc):
    sol = solve_limit(classify(1.0, 2), ISO, coarse_disc, F_AXIAL, None, n_axial=4)
    D0 = sol.cells[0].D
    assert all(np.array_equal(c.D, D0) for c in sol.cells)
