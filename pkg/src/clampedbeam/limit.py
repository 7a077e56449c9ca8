"""Limit rod problem: cross-section cell condensation plus a 1D beam solve.

The limit unknowns are the Bernoulli-Navier rod fields ``zeta_1`` (axial),
``zeta_2, zeta_3`` (transverse) and the twist ``c``, plus the micro fields
``v_1`` (warping) and ``w_2, w_3`` (in-section) that carry no axial
derivative. The micro fields are eliminated slice by slice, which leaves
a 4x4 effective stiffness ``D(y_1)`` acting on the macrostrain

    theta = (zeta_1', zeta_2'', zeta_3'', c').

Strain vectors use Voigt order ``(11, 22, 33, 23, 13, 12)`` with engineering
shears.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError
from .fem import SparseSystem
from .geometry import Locator
from .material import stress_to_voigt, voigt_to_strain
from .regimes import TRACE_SLOTS, constraint_set

N_MODES = 4
MODE_NAMES = ("extension", "bending2", "bending3", "torsion")

_GL3 = np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_GW3 = np.array([5.0, 8.0, 5.0]) / 9.0


# ---------------------------------------------------------------------------
# cross-section cell problems


def mode_strains(yp):
    """Voigt strains (n, 4, 6) of the unit macrostrain modes at section points ``yp`` (n, 2)."""
    y2, y3 = yp[:, 0], yp[:, 1]
    E = np.zeros((len(yp), N_MODES, 6))
    E[:, 0, 0] = 1.0
    E[:, 1, 0] = -y2
    E[:, 2, 0] = -y3
    E[:, 3, 4] = -y2  # 2 E_13
    E[:, 3, 5] = y3   # 2 E_12
    return E


def micro_bmatrix(dNdx):
    """Voigt strain operator (..., 6, 3 nn) for node unknowns ``(v_1, w_2, w_3)``."""
    shp = dNdx.shape[:-2]
    nn = dNdx.shape[-2]
    d2, d3 = dNdx[..., 0], dNdx[..., 1]
    B = np.zeros(shp + (6, 3 * nn))
    B[..., 1, 1::3] = d2
    B[..., 2, 2::3] = d3
    B[..., 3, 1::3] = d3
    B[..., 3, 2::3] = d2
    B[..., 4, 0::3] = d3
    B[..., 5, 0::3] = d2
    return B


@dataclass
class SectionBlocks:
    """Section integrals at one axial position, before condensation."""

    Kc: sp.csr_matrix        # int B^T C B
    Kmc: np.ndarray          # (ndof, 4) int B^T C E_m
    Kmm: np.ndarray          # (4, 4) int E_m^T C E_n
    Cc: sp.csr_matrix        # (4, ndof) micro gauge constraints
    hm: np.ndarray           # (4,) int E_m . h
    hc: np.ndarray           # (ndof,) int B^T h


class _SectionQuadrature:
    def __init__(self, section):
        self.section = section
        pts, w, dNdx, N = section.quadrature()
        self.pts, self.w, self.N = pts, w, N
        self.B = micro_bmatrix(dNdx)               # (ne, nq, 6, 12)
        self.modes = mode_strains(pts.reshape(-1, 2)).reshape(pts.shape[:2] + (N_MODES, 6))
        conn = section.quads
        self.dofs = (3 * conn[:, :, None] + np.arange(3)).reshape(len(conn), -1)
        self.ndof = 3 * len(section.nodes)
        nd = self.dofs.shape[1]
        self.rows = np.repeat(self.dofs, nd, axis=1).ravel()
        self.cols = np.tile(self.dofs, (1, nd)).ravel()
        self.Cc = self._constraints()

    def _constraints(self):
        y2, y3 = self.pts[..., 0], self.pts[..., 1]
        wN = self.w[..., None] * self.N[None, :, :]   # (ne, nq, nn)
        rows = []
        for comp, weight in ((0, 1.0), (1, 1.0), (2, 1.0)):
            r = np.zeros(self.ndof)
            np.add.at(r, self.dofs[:, comp::3].ravel(), (weight * wN).sum(axis=1).ravel())
            rows.append(r)
        r = np.zeros(self.ndof)
        np.add.at(r, self.dofs[:, 1::3].ravel(), (y3[..., None] * wN).sum(axis=1).ravel())
        np.add.at(r, self.dofs[:, 2::3].ravel(), (-y2[..., None] * wN).sum(axis=1).ravel())
        rows.append(r)
        return sp.csr_matrix(np.array(rows))

    def blocks(self, C, hv=None):
        """Section integrals for Voigt stiffness ``C`` (ne, nq, 6, 6) and prestress ``hv`` (ne, nq, 6)."""
        w, B, Em = self.w, self.B, self.modes
        CB = np.matmul(C, B)
        Ke = np.einsum("eq,eqia,eqib->eab", w, B, CB, optimize=True)
        Ke = 0.5 * (Ke + Ke.transpose(0, 2, 1))
        Kc = sp.coo_matrix((Ke.ravel(), (self.rows, self.cols)), shape=(self.ndof, self.ndof)).tocsr()
        Kc = (0.5 * (Kc + Kc.T)).tocsr()
        CE = np.einsum("eqij,eqmj->eqmi", C, Em)
        Kmc = np.zeros((self.ndof, N_MODES))
        np.add.at(Kmc, self.dofs.ravel(), np.einsum("eq,eqia,eqmi->eam", w, B, CE).reshape(-1, N_MODES))
        Kmm = np.einsum("eq,eqmi,eqni->mn", w, Em, CE)
        Kmm = 0.5 * (Kmm + Kmm.T)
        hm = np.zeros(N_MODES)
        hc = np.zeros(self.ndof)
        if hv is not None:
            hm = np.einsum("eq,eqmi,eqi->m", w, Em, hv)
            np.add.at(hc, self.dofs.ravel(), np.einsum("eq,eqia,eqi->ea", w, B, hv).ravel())
        return SectionBlocks(Kc, Kmc, Kmm, self.Cc, hm, hc)


class _SaddleSolver:
    """LU factorization of ``[[Kc, Cc^T], [Cc, 0]]``."""

    def __init__(self, blocks):
        n = blocks.Kc.shape[0]
        self.n = n
        M = sp.bmat([[blocks.Kc, blocks.Cc.T], [blocks.Cc, None]], format="csc")
        try:
            self.lu = spla.splu(M)
        except RuntimeError as exc:
            raise np.linalg.LinAlgError(f"singular cell system: {exc}") from exc
        probe = self.lu.solve(np.ones(M.shape[0]))
        if not np.all(np.isfinite(probe)):
            raise np.linalg.LinAlgError("singular cell system (degenerate section)")

    def solve(self, rhs):
        rhs = np.atleast_2d(np.asarray(rhs, dtype=float).T).T
        full = np.vstack([rhs, np.zeros((N_MODES, rhs.shape[1]))])
        return self.lu.solve(full)[: self.n]


@dataclass
class CellData:
    """Condensed section response at one axial position ``y1``.

    ``modes[:, m]`` is the micro field for unit macrostrain ``m`` and
    ``h_mode`` the micro response to the prestress.
    """

    y1: float
    D: np.ndarray
    g: np.ndarray
    modes: np.ndarray        # (ndof, 4)
    h_mode: np.ndarray       # (ndof,)
    h_energy: float          # h_mode . int B^T h
    section: object = field(repr=False, default=None)


def _slice_voigt(material, pts2, y1):
    y = np.column_stack([np.full(len(pts2), y1), pts2])
    return material.voigt_at(y)


def _slice_h(h, pts2, y1):
    if h is None:
        return None
    y = np.column_stack([np.full(len(pts2), y1), pts2])
    H = np.asarray(h(y), dtype=float).reshape(len(pts2), 3, 3)
    return stress_to_voigt(0.5 * (H + H.transpose(0, 2, 1)))


def _condense(blocks, solver, y1, section, modal=None):
    if modal is None:
        chi = solver.solve(-blocks.Kmc)
        D = blocks.Kmm + blocks.Kmc.T @ chi
        D = 0.5 * (D + D.T)
    else:
        chi, D = modal
    if np.any(blocks.hc):
        chi_h = solver.solve(blocks.hc)[:, 0]
    else:
        chi_h = np.zeros(solver.n)
    g = blocks.hm + chi.T @ blocks.hc
    return CellData(float(y1), D, g, chi, chi_h, float(chi_h @ blocks.hc), section)


def micro_cell_solve(section, material, y1=0.0, h=None):
    """Condense the micro unknowns at the slice ``y1``.

    Parameters
    ----------
    section : SectionMesh
        Mesh of ``S`` in the stretched variable ``y'``.
    material : MaterialField
        Elasticity tensor; evaluated at ``(y1, y')``.
    h : callable, optional
        Prestress ``h(y)`` returning (n, 3, 3) for points (n, 3).

    Returns
    -------
    CellData
    """
    quad = _SectionQuadrature(section)
    pts2 = quad.pts.reshape(-1, 2)
    C = _slice_voigt(material, pts2, y1).reshape(quad.pts.shape[:2] + (6, 6))
    hv = _slice_h(h, pts2, y1)
    hv = None if hv is None else hv.reshape(quad.pts.shape[:2] + (6,))
    blocks = quad.blocks(C, hv)
    return _condense(blocks, _SaddleSolver(blocks), y1, section)


# ---------------------------------------------------------------------------
# 1D discretization


def _lagrange2(xi):
    N = np.stack([xi * (xi - 1) / 2, 1 - xi**2, xi * (xi + 1) / 2], axis=-1)
    dN = np.stack([xi - 0.5, -2 * xi, xi + 0.5], axis=-1)
    return N, dN


def _hermite(t, h):
    """Hermite cubic basis on ``[0, h]`` at ``t = s / h`` in [0, 1]: values, d/ds, d2/ds2."""
    H = np.stack([1 - 3 * t**2 + 2 * t**3, h * (t - 2 * t**2 + t**3), 3 * t**2 - 2 * t**3, h * (-t**2 + t**3)], -1)
    dH = np.stack([(-6 * t + 6 * t**2) / h, 1 - 4 * t + 3 * t**2, (6 * t - 6 * t**2) / h, -2 * t + 3 * t**2], -1)
    d2H = np.stack([(-6 + 12 * t) / h**2, (-4 + 6 * t) / h, (6 - 12 * t) / h**2, (-2 + 6 * t) / h], -1)
    return H, dH, d2H


@dataclass(frozen=True)
class BeamMesh:
    """Uniform 1D mesh with dof layout ``[zeta_1 | c | zeta_2 | zeta_3]``."""

    n: int

    @property
    def x(self):
        return np.linspace(0.0, 1.0, self.n + 1)

    @property
    def h(self):
        return 1.0 / self.n

    @property
    def n_lag(self):
        return 2 * self.n + 1

    @property
    def n_herm(self):
        return 2 * (self.n + 1)

    @property
    def ndof(self):
        return 2 * self.n_lag + 2 * self.n_herm

    def offsets(self):
        return {"zeta1": 0, "c": self.n_lag, "zeta2": 2 * self.n_lag, "zeta3": 2 * self.n_lag + self.n_herm}

    def element_dofs(self, k):
        o = self.offsets()
        lag = 2 * k + np.arange(3)
        herm = 2 * k + np.arange(4)
        return np.concatenate([o["zeta1"] + lag, o["c"] + lag, o["zeta2"] + herm, o["zeta3"] + herm])

    def trace_dofs(self):
        """Global dofs of the trace slots ``(zeta2, zeta3, zeta1, c, zeta2', zeta3')`` at ``y1 = 0``."""
        o = self.offsets()
        return np.array([o["zeta2"], o["zeta3"], o["zeta1"], o["c"], o["zeta2"] + 1, o["zeta3"] + 1])

    def clamped_dofs(self):
        o = self.offsets()
        last_lag = self.n_lag - 1
        last_h = self.n_herm - 2
        return np.array([o["zeta1"] + last_lag, o["c"] + last_lag,
                         o["zeta2"] + last_h, o["zeta2"] + last_h + 1,
                         o["zeta3"] + last_h, o["zeta3"] + last_h + 1])

    def quadrature(self):
        """Axial Gauss points (3 per element) and weights."""
        x = self.x
        pts = (x[:-1, None] + 0.5 * self.h * (1 + _GL3[None, :])).ravel()
        w = np.tile(0.5 * self.h * _GW3, self.n)
        return pts, w

    def operators(self, s, k):
        """Local basis data at local coordinate ``s`` in [0, h] of element ``k``.

        Returns (values 4x14 for (zeta1, c, zeta2, zeta3), theta operator 4x14,
        slope operator 2x14 for (zeta2', zeta3')).
        """
        h = self.h
        s = np.atleast_1d(np.asarray(s, dtype=float))
        xi = 2 * s / h - 1
        N, dN = _lagrange2(xi)
        dN = dN * 2 / h
        H, dH, d2H = _hermite(s / h, h)
        m = len(s)
        val = np.zeros((m, 4, 14))
        th = np.zeros((m, 4, 14))
        slope = np.zeros((m, 2, 14))
        val[:, 0, 0:3] = N
        val[:, 1, 3:6] = N
        val[:, 2, 6:10] = H
        val[:, 3, 10:14] = H
        th[:, 0, 0:3] = dN
        th[:, 1, 6:10] = d2H
        th[:, 2, 10:14] = d2H
        th[:, 3, 3:6] = dN
        slope[:, 0, 6:10] = dH
        slope[:, 1, 10:14] = dH
        return val, th, slope


# ---------------------------------------------------------------------------
# loads and assembly


@dataclass
class BeamLoads:
    """Section resultants of ``f`` at the axial quadrature points."""

    N: np.ndarray
    M: np.ndarray   # (nq, 2)
    Q: np.ndarray   # (nq, 2)


def beam_loads(f, section, y1):
    """``N = int f_1``, ``M_a = int f_1 y_a``, ``Q_a = int f_a`` on the sections at ``y1``."""
    y1 = np.atleast_1d(np.asarray(y1, dtype=float))
    pts, w, _, _ = section.quadrature()
    p2 = pts.reshape(-1, 2)
    w = w.ravel()
    Nr, M, Q = np.zeros(len(y1)), np.zeros((len(y1), 2)), np.zeros((len(y1), 2))
    if f is None:
        return BeamLoads(Nr, M, Q)
    for i, t in enumerate(y1):
        F = np.asarray(f(np.column_stack([np.full(len(p2), t), p2])), dtype=float).reshape(-1, 3)
        Nr[i] = w @ F[:, 0]
        M[i] = (w * F[:, 0]) @ p2
        Q[i] = w @ F[:, 1:]
    return BeamLoads(Nr, M, Q)


def _check_penalty(regime, penalty):
    if penalty is None:
        return
    if regime is not None and penalty.tag is not regime.tag:
        raise ValueError(f"penalty for {penalty.tag.value} used with regime {regime.tag.value}")
    if regime is not None and not penalty.is_zero:
        fixed = constraint_set(regime)
        nz = np.flatnonzero(np.any(penalty.matrix != 0, axis=0))
        if any(int(i) in fixed for i in nz):
            raise ValueError("penalty acts on a constrained trace slot")


def assemble_limit_system(beam, cells, loads, constraints=(), penalty=None, regime=None):
    """1D Galerkin system with condensed stiffness, trace constraints and penalty.

    ``cells`` holds one CellData per axial quadrature point.
    """
    _check_penalty(regime, penalty)
    qpts, qw = beam.quadrature()
    if len(cells) != len(qpts):
        raise ValueError("one cell per axial quadrature point is required")
    rows, cols, vals = [], [], []
    rhs = np.zeros(beam.ndof)
    for k in range(beam.n):
        dofs = beam.element_dofs(k)
        s = qpts[3 * k:3 * k + 3] - beam.x[k]
        val, th, slope = beam.operators(s, k)
        Ke = np.zeros((14, 14))
        fe = np.zeros(14)
        for j in range(3):
            q = 3 * k + j
            c = cells[q]
            Ke += qw[q] * th[j].T @ c.D @ th[j]
            fe += qw[q] * (th[j].T @ c.g)
            fe += qw[q] * (loads.N[q] * val[j, 0] + loads.Q[q] @ val[j, 2:4] - loads.M[q] @ slope[j])
        rows.append(np.repeat(dofs, 14))
        cols.append(np.tile(dofs, 14))
        vals.append(Ke.ravel())
        np.add.at(rhs, dofs, fe)
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(beam.ndof, beam.ndof)).tocsr()
    if penalty is not None and not penalty.is_zero:
        td = beam.trace_dofs()
        P = sp.coo_matrix(penalty.matrix)
        K = K + sp.coo_matrix((P.data, (td[P.row], td[P.col])), shape=K.shape)
    K = (0.5 * (K + K.T)).tocsr()
    fixed = np.unique(np.concatenate([beam.clamped_dofs(), beam.trace_dofs()[sorted(constraints)]]
                                     if len(constraints) else [beam.clamped_dofs()])).astype(np.int64)
    return SparseSystem(K, rhs, fixed, np.zeros(len(fixed)))


# ---------------------------------------------------------------------------
# solution and evaluation


@dataclass
class BeamSolution:
    beam: BeamMesh
    q: np.ndarray                 # 1D coefficients
    cells: list                   # CellData per axial quadrature point
    section: object
    regime: object = None
    penalty: object = None
    energy: float = 0.0           # int A E:E
    penalty_energy: float = 0.0
    work: float = 0.0             # int f.u + int h:E

    @property
    def trace(self):
        return trace_vector(self)

    def fields(self, y1, derivatives=False):
        """Rod fields at ``y1`` (m,): dict with zeta1, c, zeta2, zeta3, dzeta2, dzeta3, theta."""
        y1 = np.atleast_1d(np.asarray(y1, dtype=float))
        if np.any((y1 < -1e-12) | (y1 > 1 + 1e-12)):
            raise DomainError("y1 outside [0, 1]")
        beam = self.beam
        k = np.clip((y1 / beam.h).astype(int), 0, beam.n - 1)
        s = y1 - beam.x[k]
        out = {"val": np.zeros((len(y1), 4)), "theta": np.zeros((len(y1), 4)), "slope": np.zeros((len(y1), 2))}
        for kk in np.unique(k):
            idx = np.flatnonzero(k == kk)
            val, th, slope = beam.operators(s[idx], kk)
            qe = self.q[beam.element_dofs(kk)]
            out["val"][idx] = val @ qe
            out["theta"][idx] = th @ qe
            out["slope"][idx] = slope @ qe
        return out

    def nearest_cell(self, y1):
        qpts, _ = self.beam.quadrature()
        y1 = np.atleast_1d(y1)
        k = np.clip((y1 / self.beam.h).astype(int), 0, self.beam.n - 1)
        cand = 3 * k[:, None] + np.arange(3)
        best = np.argmin(np.abs(qpts[cand] - y1[:, None]), axis=1)
        return cand[np.arange(len(y1)), best]


def _cells_for(beam, section, material, h):
    """Cell data at every axial quadrature point; reuses one factorization when possible."""
    qpts, _ = beam.quadrature()
    quad = _SectionQuadrature(section)
    pts2 = quad.pts.reshape(-1, 2)
    shape = quad.pts.shape[:2]
    cells = []
    base = None
    modal = None
    for t in qpts:
        hv = _slice_h(h, pts2, t)
        hv = None if hv is None else hv.reshape(shape + (6,))
        if material.is_homogeneous and base is not None:
            blocks, solver = base
            if hv is not None:
                blocks = SectionBlocks(blocks.Kc, blocks.Kmc, blocks.Kmm, blocks.Cc,
                                       np.einsum("eq,eqmi,eqi->m", quad.w, quad.modes, hv),
                                       _hc(quad, hv))
            else:
                blocks = SectionBlocks(blocks.Kc, blocks.Kmc, blocks.Kmm, blocks.Cc,
                                       np.zeros(N_MODES), np.zeros(quad.ndof))
        else:
            C = _slice_voigt(material, pts2, t).reshape(shape + (6, 6))
            blocks = quad.blocks(C, hv)
            solver = _SaddleSolver(blocks)
            base = (blocks, solver)
        cell = _condense(blocks, solver, t, section, modal if material.is_homogeneous else None)
        modal = (cell.modes, cell.D)
        cells.append(cell)
    return cells


def _hc(quad, hv):
    hc = np.zeros(quad.ndof)
    np.add.at(hc, quad.dofs.ravel(), np.einsum("eq,eqia,eqi->ea", quad.w, quad.B, hv).ravel())
    return hc


def solve_limit(regime, material, section, f=None, h=None, n_axial=32, penalty=None):
    """Solve the limit problem for one regime.

    ``f`` and ``h`` are callables on reference points ``y`` (n, 3) returning
    (n, 3) and (n, 3, 3). ``penalty`` is required for critical regimes.
    """
    from .capacity import zero_penalty
    if penalty is None:
        if regime.is_critical:
            raise ValueError(f"{regime.tag.value} needs a penalty form")
        penalty = zero_penalty(regime.tag)
    beam = BeamMesh(int(n_axial))
    cells = _cells_for(beam, section, material, h)
    qpts, qw = beam.quadrature()
    loads = beam_loads(f, section, qpts)
    system = assemble_limit_system(beam, cells, loads, constraint_set(regime), penalty, regime)
    Kff, b, free = system.reduced()
    q = np.zeros(beam.ndof)
    if np.any(b):
        q[free] = spla.spsolve(Kff.tocsc(), b)
    sol = BeamSolution(beam, q, cells, section, regime, penalty)
    _energy_balance(sol, loads)
    return sol


def _energy_balance(sol, loads):
    qpts, qw = sol.beam.quadrature()
    F = sol.fields(qpts)
    th = F["theta"]
    energy = work = 0.0
    for i, c in enumerate(sol.cells):
        energy += qw[i] * (th[i] @ c.D @ th[i] + c.h_energy)
        work += qw[i] * (th[i] @ c.g + c.h_energy)
        work += qw[i] * (loads.N[i] * F["val"][i, 0] + loads.Q[i] @ F["val"][i, 2:4] - loads.M[i] @ F["slope"][i])
    t = trace_vector(sol)
    sol.energy = float(energy)
    sol.penalty_energy = float(t @ sol.penalty.matrix @ t) if sol.penalty is not None else 0.0
    sol.work = float(work)


def trace_vector(sol):
    """``(zeta2(0), zeta3(0), zeta1(0), c(0), zeta2'(0), zeta3'(0))``."""
    return sol.q[sol.beam.trace_dofs()].copy()


def _check_points(sol, y):
    y = np.atleast_2d(np.asarray(y, dtype=float))
    spec = sol.section.meta.get("spec")
    if np.any((y[:, 0] < -1e-12) | (y[:, 0] > 1 + 1e-12)):
        raise DomainError("y1 outside [0, 1]")
    if spec is not None and not np.all(spec.contains(y[:, 1:], tol=1e-9)):
        raise DomainError("y' outside the section")
    return y


def eval_limit_displacement(sol, y):
    """``(zeta1 - zeta_a' y_a, zeta2, zeta3)`` at points ``y`` (n, 3)."""
    y = _check_points(sol, y)
    F = sol.fields(y[:, 0])
    u = np.empty((len(y), 3))
    u[:, 0] = F["val"][:, 0] - np.einsum("na,na->n", F["slope"], y[:, 1:])
    u[:, 1:] = F["val"][:, 2:4]
    return u


class CellStrainBasis:
    """Voigt strains of the condensed modes at fixed section points.

    ``basis(points)`` returns (n, 4, 6) for ``E_m + B chi_m`` and the
    micro strains of each cell's prestress response are available through
    ``h_strain``.
    """

    def __init__(self, sol, points):
        section = sol.section
        self.sol = sol
        points = np.atleast_2d(points)
        eids, xi = Locator(section).locate(points)
        from . import elements
        conn = section.quads[eids]
        X = section.nodes[conn]
        _, dN = elements.shape(2, xi)
        J = np.einsum("knd,knl->kdl", X, dN)
        dNdx = np.einsum("knl,kld->knd", dN, np.linalg.inv(J))
        self.B = micro_bmatrix(dNdx)                                   # (n, 6, 12)
        self.dofs = (3 * conn[:, :, None] + np.arange(3)).reshape(len(conn), -1)
        self.E = mode_strains(points)

    def modes(self, cell):
        local = cell.modes[self.dofs]                                  # (n, 12, 4)
        return self.E + np.einsum("nia,nam->nmi", self.B, local)

    def h_strain(self, cell):
        return np.einsum("nia,na->ni", self.B, cell.h_mode[self.dofs])


def eval_E(sol, y, cells=None):
    """Limit strain tensor (n, 3, 3) at points ``y`` (n, 3).

    Micro contributions come from the cell at the nearest axial quadrature point.
    """
    y = _check_points(sol, y)
    cells = sol.cells if cells is None else cells
    basis = CellStrainBasis(sol, y[:, 1:])
    th = sol.fields(y[:, 0])["theta"]
    near = sol.nearest_cell(y[:, 0])
    Ev = np.zeros((len(y), 6))
    for q in np.unique(near):
        idx = np.flatnonzero(near == q)
        sub = _subset(basis, idx)
        Ev[idx] = np.einsum("nm,nmi->ni", th[idx], sub.modes(cells[q])) + sub.h_strain(cells[q])
    return voigt_to_strain(Ev)


def _subset(basis, idx):
    out = object.__new__(CellStrainBasis)
    out.sol, out.B, out.dofs, out.E = basis.sol, basis.B[idx], basis.dofs[idx], basis.E[idx]
    return out


# ---------------------------------------------------------------------------
# monolithic oracle


def solve_monolithic(regime, material, section, f=None, h=None, n_axial=4, penalty=None):
    """Macro and per-quadrature micro unknowns solved as one saddle system.

    Returns the 1D coefficient vector; used to check the condensed solver.
    """
    from .capacity import zero_penalty
    penalty = penalty if penalty is not None else zero_penalty(regime.tag)
    beam = BeamMesh(int(n_axial))
    qpts, qw = beam.quadrature()
    quad = _SectionQuadrature(section)
    pts2 = quad.pts.reshape(-1, 2)
    shape = quad.pts.shape[:2]
    loads = beam_loads(f, section, qpts)
    nm = quad.ndof
    nq = len(qpts)
    nmac = beam.ndof
    n_micro = nq * nm
    n_mult = nq * N_MODES
    ntot = nmac + n_micro + n_mult
    blocks_list = []
    rhs = np.zeros(ntot)
    trip = [[], [], []]

    def add(r, c, v):
        trip[0].append(np.asarray(r).ravel())
        trip[1].append(np.asarray(c).ravel())
        trip[2].append(np.asarray(v).ravel())

    for q, t in enumerate(qpts):
        hv = _slice_h(h, pts2, t)
        hv = None if hv is None else hv.reshape(shape + (6,))
        C = _slice_voigt(material, pts2, t).reshape(shape + (6, 6))
        blocks_list.append(quad.blocks(C, hv))
    for k in range(beam.n):
        dofs = beam.element_dofs(k)
        s = qpts[3 * k:3 * k + 3] - beam.x[k]
        val, th, slope = beam.operators(s, k)
        for j in range(3):
            q = 3 * k + j
            bl = blocks_list[q]
            w = qw[q]
            mdofs = nmac + q * nm + np.arange(nm)
            Kmm = w * th[j].T @ bl.Kmm @ th[j]
            add(np.repeat(dofs, 14), np.tile(dofs, 14), Kmm)
            Kx = w * bl.Kmc @ th[j]                      # (nm, 14)
            R, Cc = np.meshgrid(mdofs, dofs, indexing="ij")
            add(R, Cc, Kx)
            add(Cc, R, Kx)
            Kc = (w * bl.Kc).tocoo()
            add(mdofs[Kc.row], mdofs[Kc.col], Kc.data)
            cdofs = nmac + n_micro + q * N_MODES + np.arange(N_MODES)
            G = bl.Cc.tocoo()
            add(cdofs[G.row], mdofs[G.col], G.data)
            add(mdofs[G.col], cdofs[G.row], G.data)
            np.add.at(rhs, dofs, w * (th[j].T @ bl.hm + loads.N[q] * val[j, 0]
                                       + loads.Q[q] @ val[j, 2:4] - loads.M[q] @ slope[j]))
            rhs[mdofs] += w * bl.hc
    K = sp.coo_matrix((np.concatenate(trip[2]), (np.concatenate(trip[0]), np.concatenate(trip[1]))),
                      shape=(ntot, ntot)).tocsr()
    if not penalty.is_zero:
        td = beam.trace_dofs()
        P = sp.coo_matrix(penalty.matrix)
        K = K + sp.coo_matrix((P.data, (td[P.row], td[P.col])), shape=K.shape)
    cons = constraint_set(regime)
    fixed = np.concatenate([beam.clamped_dofs(), beam.trace_dofs()[sorted(cons)]]) if cons else beam.clamped_dofs()
    keep = np.setdiff1d(np.arange(ntot), fixed)
    K = K.tocsr()[keep][:, keep].tocsc()
    x = np.zeros(ntot)
    if np.any(rhs[keep]):
        x[keep] = spla.splu(K).solve(rhs[keep])
    return x[:nmac]


__all__ = [
    "MODE_NAMES", "TRACE_SLOTS", "mode_strains", "micro_cell_solve", "CellData", "BeamMesh", "BeamLoads",
    "beam_loads", "assemble_limit_system", "solve_limit", "BeamSolution", "trace_vector",
    "eval_limit_displacement", "eval_E", "CellStrainBasis", "solve_monolithic",
]
