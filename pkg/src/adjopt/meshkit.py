"""Triangular meshes for the two benchmark geometries.

A mesh is a light immutable container of numpy arrays. Vertex motion
(:func:`deform`) returns a new mesh sharing connectivity with the old one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

DUPLICATE_TOL = 1e-12


class MeshError(ValueError):
    """Raised for malformed meshes or invalid generator arguments."""


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """2D simplicial mesh.

    Attributes
    ----------
    vertices : (N, 2) float array
    cells : (M, 3) int array, counter-clockwise vertex triples
    facets : (K, 2) int array of boundary edges
    facet_markers : (K,) int array
    """

    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    facet_markers: np.ndarray

    def __post_init__(self):
        for name in ("vertices", "cells", "facets", "facet_markers"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_cells(self) -> int:
        return self.cells.shape[0]

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.cells]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def markers(self) -> set[int]:
        return set(int(m) for m in np.unique(self.facet_markers))

    def boundary_vertices(self, markers=None) -> np.ndarray:
        """Sorted indices of vertices on facets carrying any of ``markers``.

        ``None`` selects every marked facet.
        """
        if markers is None:
            sel = np.ones(len(self.facet_markers), dtype=bool)
        else:
            markers = list(markers)
            missing = set(markers) - self.markers()
            if missing:
                raise MeshError(f"boundary marker(s) {sorted(missing)} not present in mesh")
            sel = np.isin(self.facet_markers, markers)
        return np.unique(self.facets[sel])

    def validate(self) -> None:
        """Check orientation, edge manifoldness, marker coverage and duplicates."""
        nv = self.num_vertices
        if self.cells.size and (self.cells.min() < 0 or self.cells.max() >= nv):
            raise MeshError("cell vertex index out of range")
        if self.facets.size and (self.facets.min() < 0 or self.facets.max() >= nv):
            raise MeshError("facet vertex index out of range")
        if np.any(self.signed_areas() <= 0):
            raise MeshError("mesh contains cells with non-positive signed area")

        edges = np.sort(self.cells[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two cells")
        boundary = {tuple(e) for e in uniq[counts == 1]}
        marked = [tuple(e) for e in np.sort(self.facets, axis=1)]
        if len(set(marked)) != len(marked):
            raise MeshError("duplicate boundary facet")
        if set(marked) != boundary:
            raise MeshError("boundary facets do not match edges of exactly one cell")

        pairs = cKDTree(self.vertices).query_pairs(DUPLICATE_TOL, p=np.inf)
        if pairs:
            raise MeshError(f"duplicate vertices: {sorted(pairs)[:3]}")


@dataclass(frozen=True)
class MeshQualityReport:
    min_signed_area: float
    min_radius_ratio: float
    num_inverted: int


def unit_square_mesh(n: int) -> TriangleMesh:
    """Uniform mesh of (0,1)^2 with n x n squares, each cut along the
    lower-left to upper-right diagonal. All boundary facets get marker 1."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise MeshError(f"n must be a positive integer, got {n!r}")
    t = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(t, t)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    cells[0::2] = np.column_stack([v00, v10, v11])
    cells[1::2] = np.column_stack([v00, v11, v01])

    k = np.arange(n)
    bottom = np.column_stack([k, k + 1])
    top = np.column_stack([n * (n + 1) + k + 1, n * (n + 1) + k])
    left = np.column_stack([(k + 1) * (n + 1), k * (n + 1)])
    right = np.column_stack([k * (n + 1) + n, (k + 1) * (n + 1) + n])
    facets = np.vstack([bottom, right, top, left]).astype(np.int64)
    return TriangleMesh(vertices, cells, facets, np.ones(len(facets), dtype=np.int64))


def _ring_offset(k: int) -> int:
    # index of the first vertex on ring k (ring 0 is the centre)
    return 0 if k == 0 else 1 + 3 * k * (k - 1)


def unit_disc_mesh(n: int) -> TriangleMesh:
    """Ring mesh of the unit disc.

    Ring ``k`` (k = 1..n) sits at radius k/n and carries 6k equally spaced
    vertices starting at angle 0. Neighbouring rings are zipped together by
    always closing the shorter candidate diagonal, giving 1 + 3n(n+1) vertices and 6n^2 cells.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise MeshError(f"n must be a positive integer, got {n!r}")
    coords = [np.zeros((1, 2))]
    for k in range(1, n + 1):
        theta = 2.0 * np.pi * np.arange(6 * k) / (6 * k)
        coords.append((k / n) * np.column_stack([np.cos(theta), np.sin(theta)]))
    vertices = np.vstack(coords)

    cells = []
    for j in range(6):
        cells.append((0, 1 + j, 1 + (j + 1) % 6))
    for k in range(2, n + 1):
        m, big = 6 * (k - 1), 6 * k
        inner0, outer0 = _ring_offset(k - 1), _ring_offset(k)
        i = j = 0
        while i < m or j < big:
            # advance along the shorter of the two candidate diagonals
            if i == m:
                take_outer = True
            elif j == big:
                take_outer = False
            else:
                d_outer = vertices[outer0 + (j + 1) % big] - vertices[inner0 + i % m]
                d_inner = vertices[inner0 + (i + 1) % m] - vertices[outer0 + j % big]
                take_outer = d_outer @ d_outer <= d_inner @ d_inner
            a = inner0 + i % m
            b = outer0 + j % big
            if take_outer:
                cells.append((a, b, outer0 + (j + 1) % big))
                j += 1
            else:
                cells.append((a, b, inner0 + (i + 1) % m))
                i += 1
    cells = np.array(cells, dtype=np.int64)

    # fix orientation to counter-clockwise
    p = vertices[cells]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    flip = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    cells[flip] = cells[flip][:, [0, 2, 1]]

    outer0 = _ring_offset(n)
    idx = np.arange(6 * n)
    facets = np.column_stack([outer0 + idx, outer0 + (idx + 1) % (6 * n)]).astype(np.int64)
    return TriangleMesh(vertices, cells, facets, np.ones(len(facets), dtype=np.int64))


def deform(mesh: TriangleMesh, displacement, scale: float = 1.0) -> TriangleMesh:
    """Move every vertex by ``scale * displacement`` (an (N, 2) array)."""
    d = np.asarray(displacement, dtype=float).reshape(-1, 2)
    if d.shape[0] != mesh.num_vertices:
        raise MeshError(
            f"displacement has {d.shape[0]} vertices, mesh has {mesh.num_vertices}"
        )
    return TriangleMesh(mesh.vertices + scale * d, mesh.cells, mesh.facets, mesh.facet_markers)


def radius_ratios(mesh: TriangleMesh) -> np.ndarray:
    """2 * inradius / circumradius per cell; 0 for degenerate or inverted cells."""
    p = mesh.vertices[mesh.cells]
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    area = mesh.signed_areas()
    denom = (a + b + c) * a * b * c
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denom > 0, 16.0 * area**2 / denom, 0.0)
    return np.where(area > 0, ratio, 0.0)


def quality_report(mesh: TriangleMesh) -> MeshQualityReport:
    area = mesh.signed_areas()
    return MeshQualityReport(
        min_signed_area=float(area.min()),
        min_radius_ratio=float(radius_ratios(mesh).min()),
        num_inverted=int(np.count_nonzero(area <= 0)),
    )
