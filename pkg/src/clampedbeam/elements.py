"""Bilinear quadrilateral and trilinear hexahedral reference elements."""
import numpy as np

QUAD_SIGNS = np.array([(-1, -1), (1, -1), (1, 1), (-1, 1)], dtype=float)
HEX_SIGNS = np.array(
    [(-1, -1, -1), (1, -1, -1), (1, 1, -1), (-1, 1, -1),
     (-1, -1, 1), (1, -1, 1), (1, 1, 1), (-1, 1, 1)],
    dtype=float,
)

_G = 1.0 / np.sqrt(3.0)


def signs_for(dim):
    return QUAD_SIGNS if dim == 2 else HEX_SIGNS


def shape(dim, xi):
    """Shape functions and reference gradients at points ``xi`` of shape (p, dim).

    Returns ``N`` with shape (p, nn) and ``dN`` with shape (p, nn, dim).
    """
    s = signs_for(dim)
    xi = np.atleast_2d(xi)
    fac = 1.0 + xi[:, None, :] * s[None, :, :]  # (p, nn, dim)
    N = np.prod(fac, axis=2) / 2.0**dim
    dN = np.empty(fac.shape)
    for d in range(dim):
        others = np.prod(np.delete(fac, d, axis=2), axis=2)
        dN[:, :, d] = s[None, :, d] * others / 2.0**dim
    return N, dN


def gauss(dim):
    """Tensor 2-point Gauss rule on [-1, 1]^dim (points ordered like the nodes)."""
    return _G * signs_for(dim), np.ones(2**dim)


def jacobians(X, dN):
    """Jacobian data for element coordinates ``X`` (ne, nn, dim) at ``dN`` (p, nn, dim).

    Returns ``(detJ, dNdx)`` with shapes (ne, p) and (ne, p, nn, dim).
    """
    J = np.einsum("enk,pnl->epkl", X, dN)
    detJ = np.linalg.det(J)
    invJ = np.linalg.inv(J)
    dNdx = np.einsum("pnl,eplk->epnk", dN, invJ)
    return detJ, dNdx


def forward_map(X, xi):
    """Physical coordinates of local points ``xi`` (k, dim) in elements ``X`` (k, nn, dim)."""
    dim = X.shape[2]
    N, _ = shape(dim, xi)
    return np.einsum("kn,knd->kd", N, X)


def invert_map(X, p, iters=30):
    """Newton inversion of the multilinear map for paired elements and points.

    ``X`` is (k, nn, dim) and ``p`` is (k, dim). Returns local coordinates
    (k, dim); entries may fall outside [-1, 1] when the point is outside.
    """
    k, nn, dim = X.shape
    xi = np.zeros((k, dim))
    for _ in range(iters):
        N, dN = shape(dim, xi)
        x = np.einsum("kn,knd->kd", N, X)
        J = np.einsum("knd,knl->kdl", X, dN)
        r = x - p
        try:
            step = np.linalg.solve(J, r[..., None])[..., 0]
        except np.linalg.LinAlgError:
            det = np.linalg.det(J)
            J[np.abs(det) < 1e-300] = np.eye(dim)
            step = np.linalg.solve(J, r[..., None])[..., 0]
        xi = np.clip(xi - step, -3.0, 3.0)
        if np.max(np.abs(step), initial=0.0) < 1e-14:
            break
    return xi

