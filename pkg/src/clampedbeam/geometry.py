"""Structured, graded quadrilateral and hexahedral meshes.

Discs are meshed with an O-grid: a uniform core square, a blending layer
onto a circle, then geometrically graded rings. Rectangles use tensor grids
graded away from an optional central patch. Volume meshes are extrusions of
a plane mesh along the first coordinate with geometric grading toward
``x_1 = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import elements
from .errors import LocateError, MeshError

_REL_TOL = 1e-12


@dataclass(frozen=True)
class SectionSpec:
    """A centered disc of given radius or a centered ``width x height`` rectangle."""

    shape: str
    radius: float = 1.0
    width: float = 1.0
    height: float = 1.0

    def __post_init__(self):
        if self.shape not in ("disc", "rect"):
            raise MeshError(f"unknown section shape {self.shape!r}")
        if self.shape == "disc" and not self.radius > 0:
            raise MeshError("disc radius must be positive")
        if self.shape == "rect" and not (self.width > 0 and self.height > 0):
            raise MeshError("rectangle sides must be positive")

    @classmethod
    def disc(cls, radius=1.0):
        return cls("disc", radius=float(radius))

    @classmethod
    def rect(cls, width=1.0, height=1.0):
        return cls("rect", width=float(width), height=float(height))

    @property
    def area(self):
        if self.shape == "disc":
            return math.pi * self.radius**2
        return self.width * self.height

    @property
    def diameter(self):
        if self.shape == "disc":
            return 2.0 * self.radius
        return math.hypot(self.width, self.height)

    def scaled(self, r):
        if self.shape == "disc":
            return SectionSpec.disc(self.radius * r)
        return SectionSpec.rect(self.width * r, self.height * r)

    def bounding_box(self):
        if self.shape == "disc":
            return np.array([-self.radius] * 2), np.array([self.radius] * 2)
        half = np.array([self.width, self.height]) / 2.0
        return -half, half

    def contains(self, pts, tol=0.0):
        """Closed-set membership of ``(n, 2)`` points, with relative tolerance."""
        pts = np.atleast_2d(pts)
        if self.shape == "disc":
            return np.hypot(pts[:, 0], pts[:, 1]) <= self.radius * (1.0 + tol) + 1e-300
        return (np.abs(pts[:, 0]) <= self.width / 2 * (1.0 + tol)) & (
            np.abs(pts[:, 1]) <= self.height / 2 * (1.0 + tol)
        )


@dataclass
class SectionMesh:
    """Quadrilateral mesh of a plane region with named node sets."""

    nodes: np.ndarray
    quads: np.ndarray
    node_sets: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    dim = 2

    @property
    def elements(self):
        return self.quads

    def quadrature(self):
        """Physical Gauss points, weights ``w * detJ`` and shape gradients."""
        return _quadrature(self.nodes, self.quads, 2)

    @property
    def area(self):
        return float(self.quadrature()[1].sum())

    def scaled(self, factor):
        return SectionMesh(self.nodes * factor, self.quads, dict(self.node_sets), dict(self.meta))


@dataclass
class VolumeMesh:
    """Hexahedral mesh built by extruding a plane mesh along the first axis."""

    nodes: np.ndarray
    hexes: np.ndarray
    node_sets: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    dim = 3

    @property
    def elements(self):
        return self.hexes

    def quadrature(self):
        return _quadrature(self.nodes, self.hexes, 3)

    @property
    def volume(self):
        return float(self.quadrature()[1].sum())


def _quadrature(nodes, conn, dim):
    xi, w = elements.gauss(dim)
    N, dN = elements.shape(dim, xi)
    X = nodes[conn]
    detJ, dNdx = elements.jacobians(X, dN)
    pts = np.einsum("pn,end->epd", N, X)
    return pts, w[None, :] * detJ, dNdx, N


def check_jacobians(mesh):
    xi, _ = elements.gauss(mesh.dim)
    _, dN = elements.shape(mesh.dim, xi)
    detJ, _ = elements.jacobians(mesh.nodes[mesh.elements], dN)
    if not np.all(detJ > 0):
        bad = int(np.argmin(detJ.min(axis=1)))
        raise MeshError(f"non-positive Jacobian in element {bad} (det {detJ.min():.3e})")


# ---------------------------------------------------------------------------
# 1D spacings


def _geometric_sizes(first, ratio, cap, length):
    """Sizes growing from ``first`` by ``ratio`` (capped) that exactly fill ``length``."""
    if not (first > 0 and ratio >= 1.0 and length > 0):
        raise MeshError("degenerate grading parameters")
    sizes = []
    total = 0.0
    s = first
    while total + s < length * (1 - 1e-9):
        sizes.append(s)
        total += s
        s = min(s * ratio, cap)
        if len(sizes) > 100000:
            raise MeshError("grading produced too many layers")
    rem = length - total
    if sizes and rem < 0.5 * sizes[-1]:
        sizes[-1] += rem
    else:
        sizes.append(rem)
    return np.asarray(sizes)


def graded_axis(length, first, ratio, cap):
    """Node coordinates on ``[0, length]`` refined geometrically toward 0."""
    sizes = _geometric_sizes(first, ratio, cap, length)
    x = np.concatenate([[0.0], np.cumsum(sizes)])
    x[-1] = length
    return x


def _symmetric_axis(half, patch_half, n_patch, ratio, h_max):
    if patch_half is None:
        n = max(1, int(math.ceil(2 * half / h_max - 1e-9)))
        return np.linspace(-half, half, n + 1)
    if not patch_half < half:
        raise MeshError("patch not inside section")
    core = np.linspace(-patch_half, patch_half, n_patch + 1)
    step = 2 * patch_half / n_patch
    outer = patch_half + graded_axis(half - patch_half, step * ratio, ratio, max(h_max, step))
    return np.concatenate([-outer[::-1], core[1:-1], outer])


# ---------------------------------------------------------------------------
# plane meshes


def _orient_ccw(nodes, quads):
    p = nodes[quads]
    x, y = p[..., 0], p[..., 1]
    area2 = np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)
    flip = area2 < 0
    quads = quads.copy()
    quads[flip] = quads[flip][:, ::-1]
    return quads


def _tensor_plane(xs, ys):
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    nx, ny = len(xs), len(ys)
    idx = np.arange(nx * ny).reshape(nx, ny)
    quads = np.column_stack(
        [idx[:-1, :-1].ravel(), idx[1:, :-1].ravel(), idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()]
    )
    return nodes, quads


def _ogrid(n_side, rho0, radii, outer_square=None, core_frac=0.5, n_blend=None):
    """O-grid: core square, blend onto circle ``rho0``, rings at ``radii``.

    ``radii`` are the ring radii beyond ``rho0`` (increasing). If
    ``outer_square`` is given, rings blend toward the square of that
    half-side so the last ring lies on it.
    """
    a = core_frac * rho0
    g = np.linspace(-a, a, n_side + 1)
    core_nodes, core_quads = _tensor_plane(g, g)
    idx = np.arange((n_side + 1) ** 2).reshape(n_side + 1, n_side + 1)
    # counterclockwise perimeter of the core square
    perim = np.concatenate([
        idx[:, 0][:-1],            # bottom, left to right
        idx[-1, :][:-1],           # right, bottom to top
        idx[::-1, -1][:-1],        # top, right to left
        idx[0, ::-1][:-1],         # left, top to bottom
    ])
    q = core_nodes[perim]
    u = q / np.linalg.norm(q, axis=1)[:, None]
    qsq = q / np.max(np.abs(q), axis=1)[:, None]
    m = len(perim)
    if n_blend is None:
        n_blend = max(1, n_side // 2)
    rings = []
    for j in range(1, n_blend + 1):
        t = j / n_blend
        rings.append((1 - t) * q + t * rho0 * u)
    for s in radii:
        if outer_square is None:
            rings.append(s * u)
        else:
            w = (s - rho0) / (outer_square - rho0)
            rings.append((1 - w) * s * u + w * s * qsq)
    nodes = np.vstack([core_nodes] + rings)
    ring_ids = [perim] + [len(core_nodes) + m * j + np.arange(m) for j in range(len(rings))]
    quads = [core_quads]
    for inner, outer in zip(ring_ids[:-1], ring_ids[1:]):
        quads.append(np.column_stack([inner, np.roll(inner, -1), np.roll(outer, -1), outer]))
    quads = _orient_ccw(nodes, np.vstack(quads))
    n_core_disc = len(core_nodes) + m * n_blend
    return nodes, quads, ring_ids[-1], n_core_disc


def _ring_radii(rho0, R, first, ratio, cap):
    if not rho0 < R:
        raise MeshError("patch not inside section")
    return rho0 + graded_axis(R - rho0, first, ratio, cap)[1:]


def build_section_mesh(spec, h=0.05, n_side=None, refine=1):
    """Conforming quadrilateral mesh of a section with target element size ``h``.

    For discs, ``n_side`` fixes the O-grid boundary polygon (``4 * n_side``
    edges, the same polygon the cylinder meshes use) instead of deriving it
    from ``h``. ``refine`` splits every quad into ``refine**2`` bilinear
    sub-quads, which keeps the boundary polygon unchanged.
    """
    if not h > 0:
        raise MeshError("element size must be positive")
    if spec.shape == "rect":
        xs = _symmetric_axis(spec.width / 2, None, 0, 1.0, h)
        ys = _symmetric_axis(spec.height / 2, None, 0, 1.0, h)
        nodes, quads = _tensor_plane(xs, ys)
        quads = _orient_ccw(nodes, quads)
        bnd = np.flatnonzero(
            np.isclose(np.abs(nodes[:, 0]), spec.width / 2) | np.isclose(np.abs(nodes[:, 1]), spec.height / 2)
        )
        mesh = SectionMesh(nodes, quads, {"boundary": bnd}, {"spec": spec, "h": h})
    else:
        R = spec.radius
        if n_side is None:
            n_side = max(2, int(math.ceil(2 * math.pi * R / (4 * h) - 1e-9)))
            n_blend = max(1, int(math.ceil(0.5 * R / h)))
        else:
            n_blend = max(1, n_side // 2)
        nodes, quads, outer, _ = _ogrid(n_side, R, [], n_blend=n_blend)
        mesh = SectionMesh(nodes, quads, {"boundary": outer}, {"spec": spec, "h": h, "n_side": n_side})
    if refine > 1:
        mesh = refine_section(mesh, refine)
    check_jacobians(mesh)
    return mesh


def refine_section(mesh, k):
    """Split each quad into ``k x k`` quads through its bilinear map."""
    t = np.linspace(-1.0, 1.0, k + 1)
    xi = np.array([(a, b) for a in t for b in t])
    N, _ = elements.shape(2, xi)
    pts = np.einsum("pn,end->epd", N, mesh.nodes[mesh.quads]).reshape(-1, 2)
    scale = np.ptp(mesh.nodes, axis=0).max()
    key = np.round(pts / (scale * 1e-10)).astype(np.int64)
    _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    nodes = pts[first]
    local = inv.reshape(len(mesh.quads), k + 1, k + 1)
    quads = np.stack([local[:, :-1, :-1], local[:, 1:, :-1], local[:, 1:, 1:], local[:, :-1, 1:]], axis=-1)
    quads = _orient_ccw(nodes, quads.reshape(-1, 4))
    old_bnd = mesh.nodes[mesh.node_sets.get("boundary", np.zeros(0, dtype=np.int64))]
    sets = {}
    if len(old_bnd):
        # boundary edges of the coarse mesh stay straight, so test collinearity per coarse edge
        sets["boundary"] = _boundary_nodes(nodes, quads)
    meta = dict(mesh.meta)
    meta["refine"] = meta.get("refine", 1) * k
    return SectionMesh(nodes, quads, sets, meta)


def _boundary_nodes(nodes, quads):
    edges = np.concatenate([quads[:, [0, 1]], quads[:, [1, 2]], quads[:, [2, 3]], quads[:, [3, 0]]])
    edges = np.sort(edges, axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    return np.unique(uniq[counts == 1])


def build_patch_section(spec, patch, r, n_side=4, ratio=1.3, h_max=None):
    """Section mesh of ``S`` refined around the patch ``r * S_0`` (unit scale).

    The patch boundary is resolved by ``4 * n_side`` element edges. Returns a
    mesh whose ``patch`` node set holds the nodes in the closed patch.
    """
    if not r > 0:
        raise MeshError("patch scale must be positive")
    if spec.shape != patch.shape:
        raise MeshError("section and patch must share a shape kind (disc/disc or rect/rect)")
    if n_side < 2:
        raise MeshError("patch needs at least 8 boundary edges")
    if spec.shape == "disc":
        R = spec.radius
        rho0 = r * patch.radius
        if not rho0 < R:
            raise MeshError("patch not inside section")
        h_max = h_max or 2 * math.pi * R / (4 * n_side)
        first = 2 * math.pi * rho0 / (4 * n_side)
        radii = _ring_radii(rho0, R, first, ratio, h_max)
        nodes, quads, outer, n_patch_nodes = _ogrid(n_side, rho0, radii)
        pset = np.arange(n_patch_nodes)
        nodes[outer] = R * nodes[outer] / np.linalg.norm(nodes[outer], axis=1)[:, None]
    else:
        pw, ph = r * patch.width / 2, r * patch.height / 2
        if not (pw < spec.width / 2 and ph < spec.height / 2):
            raise MeshError("patch not inside section")
        h_max = h_max or min(spec.width, spec.height) / (2 * n_side)
        xs = _symmetric_axis(spec.width / 2, pw, n_side, ratio, h_max)
        ys = _symmetric_axis(spec.height / 2, ph, n_side, ratio, h_max)
        nodes, quads = _tensor_plane(xs, ys)
        quads = _orient_ccw(nodes, quads)
        pset = np.flatnonzero(SectionSpec.rect(2 * pw, 2 * ph).contains(nodes, tol=_REL_TOL))
        outer = np.flatnonzero(
            np.isclose(np.abs(nodes[:, 0]), spec.width / 2) | np.isclose(np.abs(nodes[:, 1]), spec.height / 2)
        )
    mesh = SectionMesh(nodes, quads, {"boundary": outer, "patch": pset},
                       {"spec": spec, "patch": patch, "r": r, "n_side": n_side})
    check_jacobians(mesh)
    return mesh


# ---------------------------------------------------------------------------
# volume meshes


def _extrude(plane, axial):
    nn = len(plane.nodes)
    nl = len(axial)
    nodes = np.column_stack([np.repeat(axial, nn), np.tile(plane.nodes, (nl, 1))])
    quads = plane.quads
    layers = np.arange(nl - 1)
    hexes = np.empty((len(layers), len(quads), 8), dtype=np.int64)
    for i, (s1, s2, s3) in enumerate(elements.HEX_SIGNS):
        qn = int(np.flatnonzero((elements.QUAD_SIGNS[:, 0] == s2) & (elements.QUAD_SIGNS[:, 1] == s3))[0])
        layer = layers + (1 if s1 > 0 else 0)
        hexes[:, :, i] = layer[:, None] * nn + quads[None, :, qn]
    return nodes, hexes.reshape(-1, 8)


def build_cylinder_mesh(spec, patch, eps, r_eps, axial_n=40, grading=1.3, n_side=8, axial_h=None,
                        axial_refine=1):
    """Hexahedral mesh of ``(0, 1) x eps S`` refined toward ``{0} x eps r_eps S_0``.

    ``axial_n`` sets the bulk axial element length ``1 / axial_n`` unless
    ``axial_h`` overrides it; layers grow geometrically by ``grading`` from a
    first layer comparable to the in-patch element size. ``axial_refine``
    splits every layer into equal parts, giving nested meshes.
    """
    if not (eps > 0 and r_eps > 0):
        raise MeshError("eps and r_eps must be positive")
    if axial_n < 4:
        raise MeshError("axial_n must be at least 4")
    unit = build_patch_section(spec, patch, r_eps, n_side=n_side, ratio=grading)
    plane = unit.scaled(eps)
    h_bulk = axial_h if axial_h is not None else 1.0 / axial_n
    patch_size = eps * r_eps * (patch.radius if patch.shape == "disc" else max(patch.width, patch.height) / 2)
    first = min(patch_size / n_side, h_bulk)
    axial = graded_axis(1.0, first, grading, h_bulk)
    if axial_refine > 1:
        t = np.arange(axial_refine) / axial_refine
        axial = np.append((axial[:-1, None] + np.diff(axial)[:, None] * t).ravel(), axial[-1])
    nodes, hexes = _extrude(plane, axial)
    nn = len(plane.nodes)
    sets = {
        "gamma0": np.asarray(unit.node_sets["patch"], dtype=np.int64),
        "gamma1": (len(axial) - 1) * nn + np.arange(nn),
        "lateral": (np.arange(len(axial))[:, None] * nn + unit.node_sets["boundary"][None, :]).ravel(),
    }
    mesh = VolumeMesh(nodes, hexes, sets, {
        "kind": "cylinder", "eps": eps, "r_eps": r_eps, "axial": axial,
        "plane": plane, "unit_section": unit, "spec": spec, "patch": patch,
    })
    check_jacobians(mesh)
    return mesh


def build_halfbox_mesh(patch, L, grading=1.3, n_side=4, core_layers=None):
    """Hexahedral mesh of ``(0, L) x (-L, L)^2`` graded away from ``{0} x S_0``."""
    if not L >= 4 * patch.diameter:
        raise MeshError(f"truncation L={L} must be at least 4 diam(S_0)={4 * patch.diameter}")
    if not grading > 1.0:
        raise MeshError("grading ratio must exceed 1")
    if patch.shape == "disc":
        rho0 = patch.radius
        first = 2 * math.pi * rho0 / (4 * n_side)
        radii = _ring_radii(rho0, L, first, grading, np.inf)
        pnodes, pquads, outer, n_patch_nodes = _ogrid(n_side, rho0, radii, outer_square=L, n_blend=core_layers)
        pset = np.arange(n_patch_nodes)
    else:
        pw, ph = patch.width / 2, patch.height / 2
        step = 2 * min(pw, ph) / n_side
        xs = _symmetric_axis(L, pw, n_side, grading, np.inf)
        ys = _symmetric_axis(L, ph, n_side, grading, np.inf)
        pnodes, pquads = _tensor_plane(xs, ys)
        pquads = _orient_ccw(pnodes, pquads)
        pset = np.flatnonzero(patch.contains(pnodes, tol=_REL_TOL))
        first = step
    on_side = np.isclose(np.max(np.abs(pnodes), axis=1), L, rtol=1e-12)
    plane = SectionMesh(pnodes, pquads, {"patch": pset, "boundary": np.flatnonzero(on_side)})
    axial = graded_axis(L, first, grading, np.inf)
    nodes, hexes = _extrude(plane, axial)
    nn = len(pnodes)
    nl = len(axial)
    end = np.zeros(len(nodes), dtype=bool)
    end[(nl - 1) * nn:] = True
    far = end | np.tile(on_side, nl)
    sets = {"patch": pset.astype(np.int64), "farfield": np.flatnonzero(far), "far_end": np.flatnonzero(end)}
    mesh = VolumeMesh(nodes, hexes, sets, {
        "kind": "halfbox", "L": L, "axial": axial, "plane": plane, "patch": patch,
        "grading": grading, "n_side": n_side,
    })
    check_jacobians(mesh)
    return mesh


# ---------------------------------------------------------------------------
# point location


class Locator:
    """Point location in a mesh; extruded meshes use an axial search."""

    def __init__(self, mesh, k=12):
        self.mesh = mesh
        self.k = k
        if mesh.dim == 3 and "plane" in mesh.meta:
            self._axial = np.asarray(mesh.meta["axial"])
            self._plane = Locator(mesh.meta["plane"], k)
        else:
            self._axial = None
            X = mesh.nodes[mesh.elements]
            self._X = X
            self._lo = X.min(axis=1)
            self._hi = X.max(axis=1)
            self._tree = cKDTree(X.mean(axis=1))

    def locate(self, pts, tol=1e-9):
        """Element ids (n,) and local coordinates (n, dim) for ``(n, dim)`` points.

        Raises LocateError if any point lies outside the mesh.
        """
        eids, xi, found = self.try_locate(pts, tol)
        if not np.all(found):
            raise LocateError(f"point {np.atleast_2d(pts)[np.argmin(found)]} is outside the mesh")
        return eids, xi

    def try_locate(self, pts, tol=1e-9):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self._axial is not None:
            return self._locate_extruded(pts, tol)
        n, dim = pts.shape
        eids = np.full(n, -1, dtype=np.int64)
        xi = np.zeros((n, dim))
        pending = np.arange(n)
        k = min(self.k, len(self._X))
        while len(pending):
            _, cand = self._tree.query(pts[pending], k=k)
            cand = np.atleast_2d(cand).reshape(len(pending), -1)
            self._try(pts, pending, cand, eids, xi, tol)
            pending = pending[eids[pending] < 0]
            if k >= len(self._X):
                break
            k = min(4 * k, len(self._X))
        return eids, np.clip(xi, -1.0, 1.0), eids >= 0

    def _try(self, pts, pending, cand, eids, xi, tol):
        scale = np.max(self._hi - self._lo, axis=1)
        for j in range(cand.shape[1]):
            todo = pending[eids[pending] < 0]
            if not len(todo):
                return
            c = cand[np.searchsorted(pending, todo), j]
            pad = 1e-9 * scale[c][:, None]
            inbox = np.all((pts[todo] >= self._lo[c] - pad) & (pts[todo] <= self._hi[c] + pad), axis=1)
            todo, c = todo[inbox], c[inbox]
            if not len(todo):
                continue
            loc = elements.invert_map(self._X[c], pts[todo])
            ok = np.all(np.abs(loc) <= 1.0 + tol, axis=1)
            eids[todo[ok]] = c[ok]
            xi[todo[ok]] = loc[ok]

    def _locate_extruded(self, pts, tol):
        ax = self._axial
        span = ax[-1] - ax[0]
        inside = (pts[:, 0] >= ax[0] - tol * span) & (pts[:, 0] <= ax[-1] + tol * span)
        layer = np.clip(np.searchsorted(ax, pts[:, 0], side="right") - 1, 0, len(ax) - 2)
        t = (pts[:, 0] - ax[layer]) / (ax[layer + 1] - ax[layer])
        pe, pxi, pfound = self._plane.try_locate(pts[:, 1:], tol)
        nq = len(self._plane.mesh.quads)
        eids = np.where(pfound & inside, layer * nq + pe, -1)
        xi = np.column_stack([np.clip(2 * t - 1, -1, 1), pxi])
        return eids, xi, eids >= 0


def point_locate(mesh, p):
    """Containing element and reference coordinates of a single point."""
    eids, xi = Locator(mesh).locate(np.asarray(p, dtype=float)[None, :])
    return int(eids[0]), xi[0]


def write_mesh(mesh, path):
    """Plain-text node/element listing with a one-line header."""
    with open(path, "w") as fh:
        fh.write(f"clampedbeam-mesh 1 dim={mesh.dim} nodes={len(mesh.nodes)} elements={len(mesh.elements)}\n")
        np.savetxt(fh, mesh.nodes, fmt="%.17g")
        np.savetxt(fh, mesh.elements, fmt="%d")
