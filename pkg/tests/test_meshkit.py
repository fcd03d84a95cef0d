import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from adjopt.meshkit import (MeshError, TriangleMesh, deform, quality_report, radius_ratios,
                            unit_disc_mesh, unit_square_mesh)


@pytest.mark.parametrize("n, nv, nc", [(1, 4, 2), (2, 9, 8), (64, 4225, 8192)])
def test_square_counts(n, nv, nc):
    mesh = unit_square_mesh(n)
    assert mesh.num_vertices == nv
    assert mesh.num_cells == nc


def test_square_n1_boundary():
    mesh = unit_square_mesh(1)
    assert len(mesh.facets) == 4
    assert mesh.markers() == {1}


def test_square_diagonal_lower_left_to_upper_right():
    mesh = unit_square_mesh(1)
    edges = {frozenset(e) for c in mesh.cells for e in ((c[0], c[1]), (c[1], c[2]), (c[2], c[0]))}
    ll = np.flatnonzero(np.all(mesh.vertices == [0, 0], axis=1))[0]
    ur = np.flatnonzero(np.all(mesh.vertices == [1, 1], axis=1))[0]
    assert frozenset((ll, ur)) in edges


@pytest.mark.parametrize("n", [1, 2, 4, 8, 128])
def test_square_area_is_one(n):
    assert abs(unit_square_mesh(n).signed_areas().sum() - 1.0) <= 1e-12


@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_generators_pass_validation(n):
    unit_square_mesh(n).validate()
    unit_disc_mesh(n).validate()


@pytest.mark.parametrize("factory", [unit_square_mesh, unit_disc_mesh])
def test_reject_zero(factory):
    with pytest.raises(ValueError):
        factory(0)


@pytest.mark.parametrize("n", [1, 2, 5, 16])
def test_disc_counts(n):
    mesh = unit_disc_mesh(n)
    assert mesh.num_vertices == 1 + 3 * n * (n + 1)
    assert mesh.num_cells == 6 * n * n
    assert len(mesh.facets) == 6 * n
    assert_allclose(np.hypot(*mesh.vertices[mesh.boundary_vertices()].T), 1.0, atol=1e-15)


def test_disc_area_is_inscribed_polygon():
    # the boundary is the regular 6n-gon inscribed in the unit circle
    for n in (1, 2, 3, 8, 64):
        k = 6 * n
        exact = 0.5 * k * np.sin(2 * np.pi / k)
        assert_allclose(unit_disc_mesh(n).signed_areas().sum(), exact, rtol=1e-13)
    assert abs(unit_disc_mesh(64).signed_areas().sum() - np.pi) / np.pi < 5e-4


@pytest.mark.xfail(strict=True, reason="an inscribed 12-gon has area 3, 4.5% below pi")
def test_disc_n2_area_within_two_percent():
    mesh = unit_disc_mesh(2)
    assert (mesh.num_vertices, mesh.num_cells) == (19, 24)
    assert abs(mesh.signed_areas().sum() - np.pi) / np.pi <= 0.02


def test_disc_area_monotone_and_bounded():
    areas = [unit_disc_mesh(n).signed_areas().sum() for n in range(1, 12)]
    assert np.all(np.diff(areas) > 0)
    assert max(areas) < np.pi


def test_disc_quality():
    for n in (4, 16, 32):
        q = quality_report(unit_disc_mesh(n))
        assert q.num_inverted == 0
        assert q.min_radius_ratio > 0.8


def test_radius_ratio_right_isosceles():
    q = quality_report(unit_square_mesh(1))
    assert_allclose(q.min_radius_ratio, 2 * (np.sqrt(2) - 1), rtol=1e-12)


def test_radius_ratio_equilateral_is_one():
    mesh = TriangleMesh(np.array([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]]), np.array([[0, 1, 2]]),
                        np.array([[0, 1], [1, 2], [2, 0]]), np.ones(3, dtype=int))
    assert_allclose(radius_ratios(mesh), 1.0, rtol=1e-14)


def test_reflected_vertex_is_inverted():
    mesh = unit_square_mesh(2)
    center = 4
    assert_array_equal(mesh.vertices[center], [0.5, 0.5])
    # reflect the centre vertex across the edge (1,0)-(1,1) of a neighbouring cell
    d = np.zeros_like(mesh.vertices)
    d[center] = [1.5 - 0.5, 0.0]
    q = quality_report(deform(mesh, d))
    assert q.num_inverted >= 1
    assert q.min_signed_area <= 0


def test_deform_zero_is_identity():
    mesh = unit_disc_mesh(3)
    out = deform(mesh, np.zeros_like(mesh.vertices), 2.0)
    assert_array_equal(out.vertices, mesh.vertices)
    assert_array_equal(out.cells, mesh.cells)
    assert_array_equal(out.facet_markers, mesh.facet_markers)


def test_translation_preserves_areas():
    mesh = unit_disc_mesh(4)
    out = deform(mesh, np.tile([0.3, -1.7], (mesh.num_vertices, 1)))
    assert_allclose(out.signed_areas(), mesh.signed_areas(), rtol=1e-12)


def test_radial_scaling_quadruples_area():
    mesh = unit_square_mesh(2)
    out = deform(mesh, mesh.vertices, 1.0)
    assert_allclose(out.signed_areas(), 4 * mesh.signed_areas(), rtol=1e-14)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s=st.floats(-3, 3))
def test_deform_roundtrip(seed, s):
    mesh = unit_disc_mesh(3)
    d = np.random.default_rng(seed).uniform(-1, 1, mesh.vertices.shape)
    back = deform(deform(mesh, d, s), d, -s)
    assert_allclose(back.vertices, mesh.vertices, atol=1e-14, rtol=0)


def test_mesh_is_read_only():
    mesh = unit_square_mesh(2)
    with pytest.raises(ValueError):
        mesh.vertices[0, 0] = 5.0


def test_validate_catches_bad_meshes():
    mesh = unit_square_mesh(1)
    with pytest.raises(MeshError):
        TriangleMesh(mesh.vertices, mesh.cells[:, ::-1], mesh.facets, mesh.facet_markers).validate()
    with pytest.raises(MeshError):
        TriangleMesh(mesh.vertices, mesh.cells + 10, mesh.facets, mesh.facet_markers).validate()
    with pytest.raises(MeshError):
        TriangleMesh(mesh.vertices, mesh.cells, mesh.facets[:3], mesh.facet_markers[:3]).validate()
    dup = np.vstack([mesh.vertices, mesh.vertices[:1] + 1e-14])
    with pytest.raises(MeshError):
        TriangleMesh(dup, mesh.cells, mesh.facets, mesh.facet_markers).validate()


def test_missing_marker_raises():
    with pytest.raises(MeshError):
        unit_square_mesh(2).boundary_vertices((7,))
