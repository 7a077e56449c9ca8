"""Capacitary potentials on a truncated half-space and the penalty forms they induce.

Six potentials are computed at the frozen tensor ``A(0)``, indexed by
generator:

====  ==========  ==============================
slot  name        patch profile on ``{0} x S_0``
====  ==========  ==============================
0     phi1        ``e1``
1     phi2        ``e2``
2     phi3        ``e3``
3     psi1        ``z3 e2 - z2 e3``
4     psi2        ``-z2 e1``
5     psi3        ``-z3 e1``
====  ==========  ==============================

The half-space is truncated to ``(0, L) x (-L, L)^2``. Both far-field
variants clamp the end face ``z_1 = L``; ``clamped`` also clamps the lateral
faces ``|z_alpha| = L`` while ``natural`` leaves them traction free. A fully
traction-free truncation is useless here: every patch profile is the trace of
a rigid motion, which would then carry zero energy. The ``natural`` space
contains the ``clamped`` one, so its energies never exceed the clamped ones
on a common mesh.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import elements
from .errors import CoercivityError, DomainError
from .fem import (Frame, assemble_stiffness, factorize_spd, impose_dirichlet, pcg,
                  strain_at_quadrature, SolverStats, DisplacementField)
from .geometry import Locator, build_halfbox_mesh
from .material import strain_to_voigt
from .regimes import ACTIVE_SLOTS, Regime

log = logging.getLogger(__name__)

PROFILE_KINDS = ("axial", "trans2", "trans3", "torsion", "rot2", "rot3")
GENERATORS = ("phi1", "phi2", "phi3", "psi1", "psi2", "psi3")
FARFIELDS = ("natural", "clamped")


def patch_profile(kind, z, patch=None, tol=1e-9):
    """Boundary profile of a potential at patch points ``z`` (n, 3) or (3,).

    Points must satisfy ``z_1 = 0`` and, if ``patch`` is given, lie in the
    closed patch.
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    if np.any(np.abs(z[:, 0]) > tol):
        raise DomainError("patch profiles are defined on z_1 = 0 only")
    if patch is not None and not np.all(patch.contains(z[:, 1:], tol=tol)):
        raise DomainError("point outside the patch")
    out = np.zeros((len(z), 3))
    z2, z3 = z[:, 1], z[:, 2]
    if kind == "axial":
        out[:, 0] = 1.0
    elif kind == "trans2":
        out[:, 1] = 1.0
    elif kind == "trans3":
        out[:, 2] = 1.0
    elif kind == "torsion":
        out[:, 1], out[:, 2] = z3, -z2
    elif kind == "rot2":
        out[:, 0] = -z2
    elif kind == "rot3":
        out[:, 0] = -z3
    else:
        raise ValueError(f"unknown profile kind {kind!r}")
    return out[0] if single else out


class PotentialProblem:
    """Factorized half-box problem shared by all potentials with the same far field."""

    def __init__(self, A0, patch, L, farfield="natural", n_side=6, grading=1.3,
                 method="direct", tol=1e-10):
        if farfield not in FARFIELDS:
            raise ValueError(f"far field must be one of {FARFIELDS}")
        self.A0 = np.asarray(A0, dtype=float)
        self.patch = patch
        self.L = float(L)
        self.farfield = farfield
        self.method = method
        self.tol = tol
        self.mesh = build_halfbox_mesh(patch, L, grading=grading, n_side=n_side)
        system = assemble_stiffness(self.mesh, _ConstantMaterial(self.A0), Frame.frozen())
        far = self.mesh.node_sets["farfield" if farfield == "clamped" else "far_end"]
        nodes = np.concatenate([self.mesh.node_sets["patch"], far])
        self.system = impose_dirichlet(system, nodes, 0.0)
        self._patch_nodes = self.mesh.node_sets["patch"]
        self._Kff, _, self._free = self.system.reduced()
        self._Kfc = self.system.K.tocsr()[self._free]
        self._solve = factorize_spd(self._Kff) if method == "direct" else None

    def solve(self, boundary):
        """Potential with patch values ``boundary`` (n_patch, 3); zero elsewhere on the Dirichlet set."""
        u = np.zeros(self.system.ndof)
        dofs = (3 * self._patch_nodes[:, None] + np.arange(3)).ravel()
        u[dofs] = np.asarray(boundary, dtype=float).ravel()
        b = -(self._Kfc @ u)
        if not np.any(b):
            return DisplacementField(u, SolverStats(0, 0.0, self.method))
        if self._solve is not None:
            x = self._solve(b)
            it, res = 0, float(np.linalg.norm(b - self._Kff @ x) / np.linalg.norm(b))
        else:
            x, it, res = pcg(self._Kff, b, self.tol)
        u[self._free] = x
        return DisplacementField(u, SolverStats(it, res, self.method))

    def profile(self, kind):
        z = self.mesh.nodes[self._patch_nodes]
        return patch_profile(kind, z, self.patch)


@dataclass(frozen=True)
class _ConstantMaterial:
    C: np.ndarray
    is_homogeneous = True

    def voigt_at(self, y):
        return np.broadcast_to(self.C, (len(y), 6, 6))


def solve_potential(kind, A0, L, farfield="natural", patch=None, scale=1.0, **mesh_params):
    """Single capacitary potential; builds its own half-box problem."""
    from .geometry import SectionSpec
    patch = patch or SectionSpec.disc(1.0)
    prob = PotentialProblem(A0, patch, L, farfield, **mesh_params)
    return prob.solve(scale * prob.profile(kind)), prob


def energy_gram(samples, A0):
    """``G_ij = sum_quad w A0 e(p_i) : e(p_j)`` for a list of strain samples."""
    if not samples:
        return np.zeros((0, 0))
    w = samples[0].weights
    for s in samples[1:]:
        if s.weights.shape != w.shape or not np.array_equal(s.weights, w):
            raise ValueError("potentials live on different meshes")
    ev = np.stack([strain_to_voigt(s.strain) for s in samples])  # (k, ne, nq, 6)
    sig = np.einsum("ij,k...j->k...i", A0, ev)
    G = np.einsum("eq,keqi,leqi->kl", w, ev, sig, optimize=True)
    return 0.5 * (G + G.T)


def orthogonalize(target, basis, G, max_cond=1e12):
    """Coefficients ``c`` with ``G_BB c = -G_B,target``.

    The combined potential ``p_target + c_k p_basis[k]`` is then
    ``A(0)``-energy-orthogonal to every basis potential.
    """
    basis = list(basis)
    Gbb = G[np.ix_(basis, basis)]
    cond = np.linalg.cond(Gbb)
    log.info("orthogonalize target=%s basis=%s cond=%.3e", target, basis, cond)
    if not np.isfinite(cond) or cond > max_cond:
        raise np.linalg.LinAlgError(f"basis Gram block is singular or ill-conditioned (cond {cond:.3e})")
    return np.linalg.solve(Gbb, -G[basis, target])


@dataclass(frozen=True)
class CapacitarySet:
    """Six potentials on one half-box mesh with their Gram matrix."""

    mesh: object
    fields: np.ndarray  # (6, ndof)
    L: float
    farfield: str
    A0: np.ndarray
    G: np.ndarray
    a: np.ndarray  # (2,) for phi1_hat
    b: np.ndarray  # (3, 3), row i for psi_hat^i
    cond: float
    stats: tuple = field(default=())

    def phi1_hat_coefficients(self):
        c = np.zeros(6)
        c[0] = 1.0
        c[1:3] = self.a
        return c

    def psi_hat_coefficients(self):
        """(3, 6): row ``i`` expresses ``psi_hat^{i+1}`` over the generators."""
        c = np.zeros((3, 6))
        c[:, 3:] = np.eye(3)
        c[:, :3] = self.b
        return c

    def phi1_hat_gram(self):
        c = self.phi1_hat_coefficients()
        return float(c @ self.G @ c)

    def psi_hat_gram(self):
        c = self.psi_hat_coefficients()
        M = c @ self.G @ c.T
        return 0.5 * (M + M.T)

    def orthogonality_residuals(self):
        """Relative energy products of the hatted potentials against the phi's.

        Recomputed from the stored strain fields, not from ``G``.
        """
        samples = self._samples
        hat = [self.phi1_hat_coefficients()] + list(self.psi_hat_coefficients())
        against = [(0, (1, 2))] + [(i, (0, 1, 2)) for i in range(1, 4)]
        ev = self._voigt_strains
        sig = np.einsum("ij,k...j->k...i", self.A0, ev)
        w = samples.weights
        out = []
        for (i, basis) in against:
            comb = np.tensordot(hat[i], ev, axes=1)
            comb_sig = np.tensordot(hat[i], sig, axes=1)
            self_e = float(np.einsum("eq,eqi,eqi->", w, comb, comb_sig))
            for k in basis:
                cross = float(np.einsum("eq,eqi,eqi->", w, comb_sig, ev[k]))
                out.append(abs(cross) / np.sqrt(self_e * self.G[k, k]))
        return np.array(out)

    @cached_property
    def _samples(self):
        return strain_at_quadrature(self.mesh, self.fields[0])

    @cached_property
    def _voigt_strains(self):
        return np.stack([strain_to_voigt(strain_at_quadrature(self.mesh, f).strain) for f in self.fields])

    @cached_property
    def _locator(self):
        return Locator(self.mesh)

    def strain_combination(self, coef, z):
        """Strain (n, 3, 3) of ``sum_k coef_k p_k`` at points ``z``; zero outside the box."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        out = np.zeros((len(z), 3, 3))
        L = self.L
        inside = (z[:, 0] >= 0) & (z[:, 0] <= L) & (np.abs(z[:, 1]) <= L) & (np.abs(z[:, 2]) <= L)
        idx = np.flatnonzero(inside)
        if not len(idx):
            return out
        eids, xi, found = self._locator.try_locate(z[idx])
        idx, eids, xi = idx[found], eids[found], xi[found]
        U = np.tensordot(np.asarray(coef, dtype=float), self.fields, axes=1).reshape(-1, 3)
        conn = self.mesh.elements[eids]
        X = self.mesh.nodes[conn]
        _, dN = elements.shape(3, xi)
        J = np.einsum("knd,knl->kdl", X, dN)
        dNdx = np.einsum("knl,kld->knd", dN, np.linalg.inv(J))
        grad = np.einsum("kni,knd->kid", U[conn], dNdx)
        out[idx] = 0.5 * (grad + grad.transpose(0, 2, 1))
        return out

    def shell_energy_fraction(self, inner=0.5):
        """Per generator: share of energy in elements with centroid beyond ``inner * L``."""
        cent = self.mesh.nodes[self.mesh.elements].mean(axis=1)
        shell = np.max(np.abs(cent), axis=1) > inner * self.L
        ev = self._voigt_strains
        sig = np.einsum("ij,k...j->k...i", self.A0, ev)
        dens = np.einsum("eq,keqi,keqi->ke", self._samples.weights, ev, sig)
        tot = dens.sum(axis=1)
        return np.where(tot > 0, dens[:, shell].sum(axis=1) / np.where(tot > 0, tot, 1.0), 0.0)


def build_capacitary_set(A0, patch, L, farfield="natural", n_side=6, grading=1.3,
                         method="direct", tol=1e-10):
    """Solve the six potentials, form the Gram matrix and the hat coefficients."""
    prob = PotentialProblem(A0, patch, L, farfield, n_side=n_side, grading=grading,
                            method=method, tol=tol)
    sols = [prob.solve(prob.profile(k)) for k in PROFILE_KINDS]
    fields = np.stack([s.values for s in sols])
    G = energy_gram([strain_at_quadrature(prob.mesh, f) for f in fields], prob.A0)
    a = orthogonalize(0, (1, 2), G)
    b = np.stack([orthogonalize(3 + i, (0, 1, 2), G) for i in range(3)])
    cond = float(np.linalg.cond(G[:3, :3]))
    return CapacitarySet(prob.mesh, fields, float(L), farfield, prob.A0, G, a, b, cond,
                         tuple(s.stats for s in sols))


@dataclass(frozen=True)
class PenaltyForm:
    """``rho`` times the Gram of the regime's generators on its active trace slots."""

    tag: Regime
    rho: float
    matrix: np.ndarray  # (6, 6) in trace-slot order

    @property
    def active(self):
        return ACTIVE_SLOTS.get(self.tag, ())

    @property
    def is_zero(self):
        return not np.any(self.matrix)

    def active_block(self):
        s = list(self.active)
        return self.matrix[np.ix_(s, s)]


def zero_penalty(tag):
    return PenaltyForm(Regime(tag), 0.0, np.zeros((6, 6)))


def penalty_form(regime, cset=None):
    tag = regime.tag
    if not tag.is_critical:
        return zero_penalty(tag)
    if cset is None:
        raise ValueError(f"{tag.value} needs a capacitary set")
    if tag is Regime.CRITICAL_3:
        block = cset.G[1:3, 1:3]
    elif tag is Regime.CRITICAL_1:
        block = np.array([[cset.phi1_hat_gram()]])
    else:
        block = cset.psi_hat_gram()
    M = np.zeros((6, 6))
    s = list(ACTIVE_SLOTS[tag])
    M[np.ix_(s, s)] = regime.rho * block
    return PenaltyForm(tag, float(regime.rho), 0.5 * (M + M.T))


def coercivity_eigen(P):
    """Smallest eigenvalue of the active block; raises if it is not positive."""
    if not P.tag.is_critical:
        raise ValueError("coercivity is defined for critical regimes only")
    lam = float(np.linalg.eigvalsh(P.active_block()).min())
    if not lam > 0:
        raise CoercivityError(f"penalty block not positive definite (min eigenvalue {lam:.3e})")
    return lam


def bracket(A0, patch, Ls, **kw):
    """Natural and clamped capacitary sets for each truncation in ``Ls``."""
    out = {}
    for L in Ls:
        for ff in FARFIELDS:
            out[(float(L), ff)] = build_capacitary_set(A0, patch, L, ff, **kw)
    return out


def relative_gaps(sets, L):
    """Per Gram diagonal entry: ``(clamped - natural) / clamped`` at truncation ``L``."""
    nat = np.diag(sets[(float(L), "natural")].G)
    cla = np.diag(sets[(float(L), "clamped")].G)
    return (cla - nat) / cla


__all__ = [
    "PROFILE_KINDS", "GENERATORS", "FARFIELDS", "patch_profile", "PotentialProblem", "solve_potential",
    "energy_gram", "orthogonalize", "CapacitarySet", "build_capacitary_set", "PenaltyForm",
    "penalty_form", "zero_penalty", "coercivity_eigen", "bracket", "relative_gaps",
]
