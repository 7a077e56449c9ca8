import math

import numpy as np
import pytest

from clampedbeam import elements
from clampedbeam.errors import LocateError, MeshError
from clampedbeam.geometry import (SectionSpec, build_cylinder_mesh, build_halfbox_mesh, build_section_mesh,
                                  point_locate, write_mesh)

from conftest import box_mesh


def test_disc_section_area():
    m = build_section_mesh(SectionSpec.disc(1.0), h=0.05)
    assert abs(m.area - math.pi) / math.pi < 0.01
    r = np.hypot(*m.nodes[m.node_sets["boundary"]].T)
    assert np.all(np.abs(r - 1.0) < 0.05**2)


def test_square_and_rectangle_sections():
    m = build_section_mesh(SectionSpec.rect(1.0, 1.0), h=0.25)
    assert len(m.quads) == 16
    assert np.isclose(m.area, 1.0, rtol=1e-14)
    assert np.isclose(build_section_mesh(SectionSpec.rect(2.0, 1.0), h=0.5).area, 2.0, rtol=1e-14)


def test_refined_section_keeps_polygon():
    coarse = build_section_mesh(SectionSpec.disc(1.0), n_side=8)
    fine = build_section_mesh(SectionSpec.disc(1.0), n_side=8, refine=3)
    assert len(fine.quads) == 9 * len(coarse.quads)
    assert np.isclose(fine.area, coarse.area, rtol=1e-12)


def test_degenerate_specs():
    with pytest.raises(MeshError):
        SectionSpec.disc(0.0)
    with pytest.raises(MeshError):
        SectionSpec.rect(1.0, -1.0)
    with pytest.raises(MeshError):
        build_section_mesh(SectionSpec.disc(1.0), h=0.0)


@pytest.fixture(scope="module")
def cylinder():
    disc = SectionSpec.disc(1.0)
    return build_cylinder_mesh(disc, disc, 0.1, 0.01, axial_n=8)


def test_cylinder_sets(cylinder):
    x = cylinder.nodes
    g0 = cylinder.node_sets["gamma0"]
    g1 = cylinder.node_sets["gamma1"]
    assert len(g0) > 0
    assert np.all(x[g0, 0] == 0.0)
    assert np.all(np.hypot(x[g0, 1], x[g0, 2]) <= 0.001 * (1 + 1e-9))
    assert np.all(x[g1, 0] == 1.0)
    assert not set(g0) & set(g1)
    assert np.all(np.hypot(x[:, 1], x[:, 2]) <= 0.1 * (1 + 1e-12))


def test_cylinder_volume(cylinder):
    assert abs(cylinder.volume - 0.031416) / 0.031416 < 0.01


def test_cylinder_patch_resolved(cylinder):
    plane = cylinder.meta["unit_section"]
    patch_nodes = plane.node_sets["patch"]
    r = np.hypot(*plane.nodes[patch_nodes].T)
    rim = np.isclose(r, 0.01, rtol=1e-9)
    assert rim.sum() >= 8


def test_cylinder_axial_grading(cylinder):
    axial = cylinder.meta["axial"]
    assert axial[1] - axial[0] <= 0.1 * 0.01
    assert np.all(np.diff(axial) > 0)


def test_cylinder_rejects_bad_input():
    disc = SectionSpec.disc(1.0)
    with pytest.raises(MeshError):
        build_cylinder_mesh(disc, disc, 0.1, 0.0)
    with pytest.raises(MeshError):
        build_cylinder_mesh(disc, disc, 0.1, 0.5, axial_n=3)


def test_halfbox_sets():
    mesh = build_halfbox_mesh(SectionSpec.disc(1.0), 8.0, n_side=4)
    x = mesh.nodes
    patch = mesh.node_sets["patch"]
    assert np.all(x[patch, 0] == 0.0)
    assert np.all(np.hypot(x[patch, 1], x[patch, 2]) <= 1 + 1e-12)
    assert not set(patch) & set(mesh.node_sets["farfield"])
    far = x[mesh.node_sets["farfield"]]
    assert np.all(np.isclose(far[:, 0], 8.0) | np.isclose(np.abs(far[:, 1:]).max(axis=1), 8.0))
    assert np.isclose(mesh.volume, 8.0 * 16.0 * 16.0, rtol=1e-12)


def test_halfbox_node_growth_per_doubling():
    n = [len(build_halfbox_mesh(SectionSpec.disc(1.0), L, n_side=4).nodes) for L in (8.0, 16.0)]
    assert n[1] < 2 * n[0]


def test_halfbox_too_small():
    with pytest.raises(MeshError):
        build_halfbox_mesh(SectionSpec.disc(1.0), 7.9)


def _fwd(mesh, e, xi):
    return elements.forward_map(mesh.nodes[mesh.hexes[e]][None], np.asarray(xi)[None])[0]


def test_point_locate_centroid_and_node():
    mesh = box_mesh((2, 3, 2))
    X = mesh.nodes[mesh.hexes[5]]
    e, xi = point_locate(mesh, X.mean(axis=0))
    assert e == 5 and np.allclose(xi, 0.0, atol=1e-12)
    e, xi = point_locate(mesh, X[6])
    assert np.allclose(np.abs(xi), 1.0, atol=1e-10)
    assert np.allclose(_fwd(mesh, e, xi), X[6], atol=1e-12)


def test_point_locate_random_points(rng):
    mesh = build_halfbox_mesh(SectionSpec.disc(1.0), 8.0, n_side=4)
    p = rng.uniform([0, -8, -8], [8, 8, 8], size=(50, 3))
    for q in p:
        e, xi = point_locate(mesh, q)
        assert np.all(np.abs(xi) <= 1 + 1e-9)
        assert np.linalg.norm(_fwd(mesh, e, xi) - q) < 1e-10


def test_point_locate_outside():
    with pytest.raises(LocateError):
        point_locate(box_mesh(), (2.0, 0.5, 0.5))


def test_jacobians_positive_everywhere():
    for mesh in (build_halfbox_mesh(SectionSpec.rect(1.0, 2.0), 10.0, n_side=4),
                 build_cylinder_mesh(SectionSpec.rect(1, 1), SectionSpec.rect(1, 1), 0.2, 0.1, axial_n=8)):
        assert np.all(mesh.quadrature()[1] > 0)


def test_write_mesh(tmp_path):
    mesh = box_mesh((1, 1, 1))
    write_mesh(mesh, tmp_path / "m.txt")
    lines = (tmp_path / "m.txt").read_text().splitlines()
    assert lines[0].startswith("clampedbeam-mesh 1 dim=3 nodes=8 elements=1")
    assert len(lines) == 1 + 8 + 1
