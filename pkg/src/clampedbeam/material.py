"""Anisotropic, heterogeneous linear elasticity tensors in Voigt form.

Conventions
-----------
Voigt ordering is (11, 22, 33, 23, 13, 12). Strain vectors carry
engineering shear (``2 e_23, 2 e_13, 2 e_12``); stress vectors do not.
With that choice ``sigma_v = C @ eps_v`` and ``eps_v @ C @ eps_v`` is the
energy density ``A e : e``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, InadmissibleMaterialError
from .geometry import SectionSpec

VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))

# eps_v = _MANDEL_TO_ENG * mandel, so the Frobenius-normalized form is T C T
_MANDEL_SCALE = np.array([1.0, 1.0, 1.0, np.sqrt(2.0), np.sqrt(2.0), np.sqrt(2.0)])

IDENTITY_VOIGT = np.diag([1.0, 1.0, 1.0, 0.5, 0.5, 0.5])


def strain_to_voigt(e):
    """Symmetric ``(..., 3, 3)`` strains to ``(..., 6)`` engineering vectors."""
    e = np.asarray(e, dtype=float)
    return np.stack(
        [e[..., 0, 0], e[..., 1, 1], e[..., 2, 2],
         e[..., 1, 2] + e[..., 2, 1], e[..., 0, 2] + e[..., 2, 0],
         e[..., 0, 1] + e[..., 1, 0]],
        axis=-1,
    )


def voigt_to_strain(v):
    v = np.asarray(v, dtype=float)
    e = np.empty(v.shape[:-1] + (3, 3))
    e[..., 0, 0], e[..., 1, 1], e[..., 2, 2] = v[..., 0], v[..., 1], v[..., 2]
    e[..., 1, 2] = e[..., 2, 1] = 0.5 * v[..., 3]
    e[..., 0, 2] = e[..., 2, 0] = 0.5 * v[..., 4]
    e[..., 0, 1] = e[..., 1, 0] = 0.5 * v[..., 5]
    return e


def stress_to_voigt(s):
    s = np.asarray(s, dtype=float)
    return np.stack(
        [s[..., 0, 0], s[..., 1, 1], s[..., 2, 2],
         s[..., 1, 2], s[..., 0, 2], s[..., 0, 1]],
        axis=-1,
    )


def voigt_to_stress(v):
    v = np.asarray(v, dtype=float)
    s = np.empty(v.shape[:-1] + (3, 3))
    for k, (i, j) in enumerate(VOIGT_PAIRS):
        s[..., i, j] = v[..., k]
        s[..., j, i] = v[..., k]
    return s


def lame(young, poisson):
    """Return ``(lambda, mu)`` for an isotropic solid."""
    if not -1.0 < poisson < 0.5:
        raise InadmissibleMaterialError(f"Poisson ratio {poisson} outside (-1, 0.5)")
    lam = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson))
    mu = young / (2.0 * (1.0 + poisson))
    return lam, mu


def isotropic_voigt(young, poisson):
    lam, mu = lame(young, poisson)
    C = np.zeros((6, 6))
    C[:3, :3] = lam
    C[np.arange(3), np.arange(3)] = lam + 2.0 * mu
    C[np.arange(3, 6), np.arange(3, 6)] = mu
    return C


def voigt_from_21(coeffs):
    """Build a symmetric 6x6 matrix from its upper triangle, row-major."""
    c = np.asarray(coeffs, dtype=float).ravel()
    if c.size != 21:
        raise ValueError(f"expected 21 Voigt coefficients, got {c.size}")
    C = np.zeros((6, 6))
    iu = np.triu_indices(6)
    C[iu] = c
    return C + np.triu(C, 1).T


def normalized_form(C):
    """The quadratic form of ``C`` w.r.t. the Frobenius norm on symmetric tensors."""
    return C * _MANDEL_SCALE[:, None] * _MANDEL_SCALE[None, :]


@dataclass(frozen=True)
class MaterialField:
    """Elasticity tensor ``A(y)`` on the reference domain ``[0, 1] x S``.

    ``modulation`` is an optional positive scalar field ``g(y)`` multiplying
    the base tensor; it takes ``(n, 3)`` points and returns ``(n,)`` values.
    """

    kind: str
    base: np.ndarray
    modulation: Optional[Callable] = None
    section: Optional[SectionSpec] = None
    young: Optional[float] = None
    poisson: Optional[float] = None
    label: str = field(default="", compare=False)

    @classmethod
    def isotropic(cls, young=1.0, poisson=0.3, modulation=None, section=None):
        return cls("isotropic", isotropic_voigt(young, poisson), modulation, section,
                   young=float(young), poisson=float(poisson))

    @classmethod
    def from_voigt(cls, coeffs, modulation=None, section=None):
        C = np.asarray(coeffs, dtype=float)
        if C.shape != (6, 6):
            C = voigt_from_21(C)
        if not np.array_equal(C, C.T):
            raise InadmissibleMaterialError("Voigt matrix must be symmetric")
        return cls("voigt", C, modulation, section)

    @classmethod
    def identity(cls):
        """The form with ``A xi : xi = |xi|^2``."""
        return cls("voigt", IDENTITY_VOIGT.copy())

    @property
    def is_homogeneous(self):
        return self.modulation is None

    def check_domain(self, y, tol=1e-9):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        bad = (y[:, 0] < -tol) | (y[:, 0] > 1.0 + tol)
        if self.section is not None:
            bad |= ~self.section.contains(y[:, 1:], tol=tol)
        if np.any(bad):
            raise DomainError(f"point {y[np.argmax(bad)]} lies outside the closed reference domain")

    def voigt_at(self, y):
        """Voigt matrices at ``(n, 3)`` points, shape ``(n, 6, 6)``. No domain check."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        out = np.broadcast_to(self.base, (y.shape[0], 6, 6))
        if self.modulation is None:
            return out
        g = np.broadcast_to(np.asarray(self.modulation(y), dtype=float), (y.shape[0],))
        return out * g[:, None, None]


def eval_tensor(material, y):
    """Voigt matrix of ``A(y)`` at a single point of the closed reference domain."""
    y = np.asarray(y, dtype=float).reshape(3)
    material.check_domain(y)
    return np.array(material.voigt_at(y[None, :])[0])


def tensor_apply(V, e):
    """Stress tensor ``A e`` for symmetric ``e`` (any leading batch shape)."""
    return voigt_to_stress(np.einsum("...ij,...j->...i", V, strain_to_voigt(e)))


def _sample_points(material, resolution):
    n = int(resolution)
    if n < 1:
        raise ValueError("sample grid must be nonempty")
    y1 = np.linspace(0.0, 1.0, n + 1)
    sec = material.section or SectionSpec.disc(1.0)
    lo, hi = sec.bounding_box()
    s2 = np.linspace(lo[0], hi[0], 2 * n + 1)
    s3 = np.linspace(lo[1], hi[1], 2 * n + 1)
    Y2, Y3 = np.meshgrid(s2, s3, indexing="ij")
    pts2 = np.column_stack([Y2.ravel(), Y3.ravel()])
    pts2 = pts2[sec.contains(pts2)]
    pts = np.column_stack([np.repeat(y1, len(pts2)), np.tile(pts2, (len(y1), 1))])
    return pts


def coercivity_estimate(material, sample_grid=8):
    """Smallest eigenvalue of the normalized quadratic form over a sample grid."""
    if material.is_homogeneous:
        mhat = float(np.linalg.eigvalsh(normalized_form(material.base))[0])
    else:
        pts = _sample_points(material, sample_grid)
        Cs = material.voigt_at(pts)
        mhat = float(np.linalg.eigvalsh(normalized_form(Cs))[:, 0].min())
    if not mhat > 0.0:
        raise InadmissibleMaterialError(f"coercivity estimate {mhat:g} is not positive")
    return mhat
