"""Galerkin assembly and SPD solves for linearized elasticity on hex meshes."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import elements
from .errors import ConvergenceError
from .material import IDENTITY_VOIGT, strain_to_voigt, stress_to_voigt

log = logging.getLogger(__name__)

_CHUNK = 2048


@dataclass(frozen=True)
class Frame:
    """How material coordinates ``y`` are obtained from mesh coordinates ``x``.

    ``cylinder``: ``y = (x_1, x'/eps)``; ``frozen``: the tensor is ``A(0)``
    everywhere; ``physical``: ``y = x``.
    """

    kind: str = "physical"
    eps: float = 1.0

    @classmethod
    def cylinder(cls, eps):
        return cls("cylinder", float(eps))

    @classmethod
    def frozen(cls):
        return cls("frozen")

    def to_material(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "cylinder":
            return np.concatenate([x[..., :1], x[..., 1:] / self.eps], axis=-1)
        if self.kind == "frozen":
            return np.zeros_like(x)
        return x


def voigt_field(material, frame, pts):
    """Voigt matrices at physical points ``pts`` (..., 3): (..., 6, 6) or a single (6, 6)."""
    if material is None:
        return IDENTITY_VOIGT
    if material.is_homogeneous or frame.kind == "frozen":
        return material.voigt_at(np.zeros((1, 3)))[0]
    shp = pts.shape[:-1]
    return material.voigt_at(frame.to_material(pts).reshape(-1, 3)).reshape(shp + (6, 6))


@dataclass
class SparseSystem:
    """Symmetric system ``K u = rhs`` with eliminated Dirichlet dofs."""

    K: sp.csr_matrix
    rhs: np.ndarray
    fixed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    fixed_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def ndof(self):
        return self.K.shape[0]

    @property
    def free(self):
        mask = np.ones(self.ndof, dtype=bool)
        mask[self.fixed] = False
        return np.flatnonzero(mask)

    def with_rhs(self, rhs):
        return SparseSystem(self.K, np.asarray(rhs, dtype=float), self.fixed, self.fixed_values)

    def reduced(self):
        """``(K_ff, b_f - K_fc u_c, free)`` after symmetric elimination."""
        free = self.free
        K = self.K.tocsr()
        Kff = K[free][:, free].tocsr()
        b = self.rhs[free]
        if len(self.fixed) and np.any(self.fixed_values):
            b = b - K[free][:, self.fixed] @ self.fixed_values
        return Kff, b, free


@dataclass
class SolverStats:
    iterations: int
    residual: float
    method: str


@dataclass
class DisplacementField:
    """Nodal coefficients (3 per node, node-major) with solver statistics."""

    values: np.ndarray
    stats: SolverStats | None = None

    @property
    def nodal(self):
        return self.values.reshape(-1, 3)

    def __mul__(self, s):
        return DisplacementField(self.values * s, self.stats)

    __rmul__ = __mul__


@dataclass
class StrainSamples:
    strain: np.ndarray   # (ne, nq, 3, 3)
    weights: np.ndarray  # (ne, nq), Gauss weight times detJ
    points: np.ndarray   # (ne, nq, 3)


def _geometry(mesh):
    pts, wdet, dNdx, N = mesh.quadrature()
    return pts, wdet, dNdx, N


def _bmatrix(dNdx):
    """Engineering-strain operator (…, 6, 3 nn) from shape gradients (…, nn, 3)."""
    shp = dNdx.shape[:-2]
    nn = dNdx.shape[-2]
    B = np.zeros(shp + (6, 3 * nn))
    dx, dy, dz = dNdx[..., 0], dNdx[..., 1], dNdx[..., 2]
    B[..., 0, 0::3] = dx
    B[..., 1, 1::3] = dy
    B[..., 2, 2::3] = dz
    B[..., 3, 1::3] = dz
    B[..., 3, 2::3] = dy
    B[..., 4, 0::3] = dz
    B[..., 4, 2::3] = dx
    B[..., 5, 0::3] = dy
    B[..., 5, 1::3] = dx
    return B


def element_dofs(conn):
    return (3 * conn[:, :, None] + np.arange(3)[None, None, :]).reshape(len(conn), -1)


def assemble_stiffness(mesh, material=None, frame=Frame()):
    """Global stiffness of ``int A e(u) : e(v)``; ``material=None`` is the identity form."""
    conn = mesh.elements
    ndof = 3 * len(mesh.nodes)
    dofs = element_dofs(conn)
    nd = dofs.shape[1]
    data = np.empty((len(conn), nd, nd))
    xi, w = elements.gauss(3)
    N, dN = elements.shape(3, xi)
    for s in range(0, len(conn), _CHUNK):
        X = mesh.nodes[conn[s:s + _CHUNK]]
        detJ, dNdx = elements.jacobians(X, dN)
        pts = np.einsum("pn,end->epd", N, X)
        C = voigt_field(material, frame, pts)
        B = _bmatrix(dNdx)
        CB = np.matmul(C, B)
        Ke = np.einsum("ep,epia,epib->eab", w[None, :] * detJ, B, CB, optimize=True)
        data[s:s + _CHUNK] = 0.5 * (Ke + Ke.transpose(0, 2, 1))
    rows = np.repeat(dofs, nd, axis=1).ravel()
    cols = np.tile(dofs, (1, nd)).ravel()
    K = sp.coo_matrix((data.ravel(), (rows, cols)), shape=(ndof, ndof)).tocsr()
    K = (0.5 * (K + K.T)).tocsr()
    K.sort_indices()
    return SparseSystem(K, np.zeros(ndof))


def _material_points(mesh, eps):
    pts, wdet, dNdx, N = _geometry(mesh)
    y = Frame.cylinder(eps).to_material(pts)
    return pts, y, wdet, dNdx, N


def assemble_body_load(mesh, f, eps=1.0):
    """Load vector of ``int F . v`` with ``F = (f_1, eps f_2, eps f_3)(x_1, x'/eps)``.

    ``f`` maps ``(n, 3)`` reference points to ``(n, 3)`` values.
    """
    pts, y, wdet, dNdx, N = _material_points(mesh, eps)
    ne, nq = wdet.shape
    F = np.asarray(f(y.reshape(-1, 3)), dtype=float).reshape(ne, nq, 3)
    F = F * np.array([1.0, eps, eps])
    fe = np.einsum("eq,qa,eqk->eak", wdet, N, F)
    b = np.zeros(3 * len(mesh.nodes))
    np.add.at(b, element_dofs(mesh.elements).ravel(), fe.reshape(-1))
    return b


def assemble_prestrain_load(mesh, h, eps=1.0):
    """Load vector of ``int H : e(v)`` with ``H(x) = h(x_1, x'/eps)`` symmetric."""
    pts, y, wdet, dNdx, N = _material_points(mesh, eps)
    ne, nq = wdet.shape
    H = np.asarray(h(y.reshape(-1, 3)), dtype=float).reshape(ne, nq, 3, 3)
    if not np.allclose(H, H.transpose(0, 1, 3, 2), rtol=0, atol=1e-14 * max(1.0, np.abs(H).max())):
        raise ValueError("prestress field h must be symmetric")
    hv = stress_to_voigt(H)
    b = np.zeros(3 * len(mesh.nodes))
    for s in range(0, ne, _CHUNK):
        B = _bmatrix(dNdx[s:s + _CHUNK])
        fe = np.einsum("eq,eqia,eqi->ea", wdet[s:s + _CHUNK], B, hv[s:s + _CHUNK])
        np.add.at(b, element_dofs(mesh.elements[s:s + _CHUNK]).ravel(), fe.ravel())
    return b


def impose_dirichlet(system, nodes, values=0.0):
    """Constrain all three components on ``nodes`` to ``values`` (per node or broadcast)."""
    nodes = np.asarray(nodes, dtype=np.int64).ravel()
    if nodes.size == 0:
        raise ValueError("empty Dirichlet set leaves the elasticity system singular")
    vals = np.broadcast_to(np.asarray(values, dtype=float), (len(nodes), 3))
    dofs = (3 * nodes[:, None] + np.arange(3)).ravel()
    current = dict(zip(system.fixed.tolist(), system.fixed_values.tolist()))
    current.update(zip(dofs.tolist(), vals.ravel().tolist()))
    fixed = np.array(sorted(current), dtype=np.int64)
    fv = np.array([current[d] for d in fixed.tolist()], dtype=float)
    return SparseSystem(system.K, system.rhs, fixed, fv)


_STAGNATION = 8.0


def pcg(K, b, tol=1e-10, maxit=None):
    """Jacobi-preconditioned conjugate gradients from a zero initial guess.

    Stops when the true relative residual is below ``tol``, or below a small
    multiple of the float64 rounding floor of ``K @ x`` when ``tol`` is not
    attainable at that level.
    """
    n = len(b)
    maxit = maxit if maxit is not None else int(50 * math.sqrt(max(n, 1))) + 10
    x = np.zeros(n)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, 0, 0.0
    dinv = 1.0 / K.diagonal()
    floor = 0.0
    r = b.copy()
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxit + 1):
        Kp = K @ p
        alpha = rz / (p @ Kp)
        x += alpha * p
        r -= alpha * Kp
        rel = np.linalg.norm(r) / bnorm
        if rel <= max(tol, floor):
            r = b - K @ x
            true = np.linalg.norm(r) / bnorm
            if true <= tol:
                return x, it, true
            # float64 cannot resolve K x below ~eps_mach |K| |x|; accept once there
            floor = _STAGNATION * np.finfo(float).eps * np.linalg.norm(abs(K) @ np.abs(x)) / bnorm
            if true <= floor:
                log.warning("pcg: tol %.1e below rounding floor; stopped at %.2e", tol, true)
                return x, it, true
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"PCG did not converge in {maxit} iterations (residual {rel:.3e})",
                           residual=rel, iterations=maxit)


def solve_spd(system, tol=1e-10, maxit=None, method="pcg"):
    """Solve the constrained system; ``method`` is ``pcg`` or ``direct``."""
    Kff, b, free = system.reduced()
    u = np.zeros(system.ndof)
    u[system.fixed] = system.fixed_values
    if len(free) == 0:
        return DisplacementField(u, SolverStats(0, 0.0, method))
    if method == "pcg":
        x, it, res = pcg(Kff, b, tol, maxit)
    elif method == "direct":
        x = sparse_cholesky_solve(Kff, b)
        bn = np.linalg.norm(b)
        res = float(np.linalg.norm(b - Kff @ x) / bn) if bn > 0 else 0.0
        it = 0
    else:
        raise ValueError(f"unknown solver method {method!r}")
    u[free] = x
    log.debug("solve_spd %s: n=%d it=%d res=%.2e", method, len(free), it, res)
    return DisplacementField(u, SolverStats(it, float(res), method))


def sparse_cholesky_solve(K, b):
    """Direct solve of an SPD sparse system (CHOLMOD if available, else SuperLU)."""
    return factorize_spd(K)(b)


def factorize_spd(K):
    """Return a callable solving ``K x = b`` for one or more right-hand sides."""
    try:
        from cvxopt import cholmod, matrix, spmatrix
    except ImportError:  # pragma: no cover - cvxopt is optional
        import scipy.sparse.linalg as spla
        lu = spla.splu(sp.csc_matrix(K))
        return lu.solve
    Kc = sp.tril(K).tocoo()
    A = spmatrix(Kc.data.tolist(), Kc.row.tolist(), Kc.col.tolist(), size=K.shape)
    cholmod.options["supernodal"] = 2
    F = cholmod.symbolic(A, uplo="L")
    cholmod.numeric(A, F)

    def solve(b):
        b = np.asarray(b, dtype=float)
        X = matrix(b.reshape(len(b), -1).copy(order="F"))
        cholmod.solve(F, X)
        return np.array(X).reshape(b.shape)

    return solve


def strain_at_quadrature(mesh, U):
    """Symmetric gradients of the interpolated field at each Gauss point."""
    pts, wdet, dNdx, N = _geometry(mesh)
    vals = U.nodal if isinstance(U, DisplacementField) else np.asarray(U).reshape(-1, 3)
    Ue = vals[mesh.elements]
    grad = np.einsum("eqak,eai->eqik", dNdx, Ue)
    return StrainSamples(0.5 * (grad + grad.transpose(0, 1, 3, 2)), wdet, pts)


def values_at_quadrature(mesh, U):
    pts, wdet, dNdx, N = _geometry(mesh)
    vals = U.nodal if isinstance(U, DisplacementField) else np.asarray(U).reshape(-1, 3)
    return np.einsum("qa,eai->eqi", N, vals[mesh.elements]), wdet, pts


def quadratic_energy(samples, material=None, frame=Frame()):
    """``sum w A e : e`` over the samples (``|e|^2`` when ``material`` is None)."""
    ev = strain_to_voigt(samples.strain)
    C = voigt_field(material, frame, samples.points)
    sig = np.einsum("...ij,...j->...i", C, ev)
    return float(np.sum(samples.weights * np.einsum("...i,...i->...", sig, ev)))
