"""P1 Lagrange assembly on triangle meshes.

Scalar fields are nodal arrays of shape (N,), vector fields are (N, 2)
arrays. Vector operators use the interleaved dof numbering ``2*v + c`` so
that ``field.ravel()`` lines up with matrix rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .meshkit import MeshError, TriangleMesh

_LOCAL_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


# 7-point rule on the reference triangle, exact for polynomials of degree 5
_QA = (6.0 - np.sqrt(15.0)) / 21.0
_QB = (6.0 + np.sqrt(15.0)) / 21.0
QUAD_POINTS = np.array([[1 / 3, 1 / 3], [_QA, _QA], [1 - 2 * _QA, _QA], [_QA, 1 - 2 * _QA],
                        [_QB, _QB], [1 - 2 * _QB, _QB], [_QB, 1 - 2 * _QB]])
QUAD_WEIGHTS = np.array([9 / 40] + [(155 - np.sqrt(15.0)) / 1200] * 3
                        + [(155 + np.sqrt(15.0)) / 1200] * 3)  # sum to 1, multiply by area


class AssemblyError(ValueError):
    pass


def _geometry(mesh: TriangleMesh):
    """Cell areas and barycentric gradients, shape (M,) and (M, 3, 2)."""
    p = mesh.vertices[mesh.cells]
    area = mesh.signed_areas()
    if np.any(area <= 0):
        raise AssemblyError(f"{np.count_nonzero(area <= 0)} inverted or degenerate cell(s)")
    grads = np.empty((mesh.num_cells, 3, 2))
    for k in range(3):
        a, b = p[:, (k + 1) % 3], p[:, (k + 2) % 3]
        grads[:, k, 0] = a[:, 1] - b[:, 1]
        grads[:, k, 1] = b[:, 0] - a[:, 0]
    grads /= (2.0 * area)[:, None, None]
    return area, grads


def _scatter(rows, cols, vals, size) -> sp.csr_matrix:
    A = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(size, size)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _scalar_pattern(mesh):
    c = mesh.cells
    rows = np.repeat(c, 3, axis=1)
    cols = np.tile(c, (1, 3))
    return rows, cols


def interpolate(mesh: TriangleMesh, func) -> np.ndarray:
    """Nodal interpolant of ``func(x1, x2)``; vector-valued funcs may return a tuple."""
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    val = func(x, y)
    if isinstance(val, tuple):
        return np.column_stack([np.broadcast_to(np.asarray(v, dtype=float), x.shape) for v in val])
    return np.broadcast_to(np.asarray(val, dtype=float), x.shape).copy()


def assemble_stiffness(mesh: TriangleMesh) -> sp.csr_matrix:
    area, grads = _geometry(mesh)
    local = area[:, None, None] * np.einsum("cid,cjd->cij", grads, grads)
    rows, cols = _scalar_pattern(mesh)
    return _scatter(rows, cols, local, mesh.num_vertices)


def assemble_mass(mesh: TriangleMesh) -> sp.csr_matrix:
    area, _ = _geometry(mesh)
    local = area[:, None, None] * _LOCAL_MASS
    rows, cols = _scalar_pattern(mesh)
    return _scatter(rows, cols, local, mesh.num_vertices)


def assemble_elasticity(mesh: TriangleMesh, mu: float = 1.0, lam: float = 0.0,
                        delta: float = 0.0) -> sp.csr_matrix:
    """Matrix of a(V, W) = int 2 mu eps(V):eps(W) + lam div V div W + delta V.W.

    Basis function (i, c) is lambda_i e_c; its Jacobian has row c equal to
    grad(lambda_i).
    """
    if mu <= 0:
        raise AssemblyError(f"mu must be positive, got {mu}")
    if lam < 0 or delta < 0:
        raise AssemblyError(f"lambda and delta must be non-negative, got {lam}, {delta}")
    area, B = _geometry(mesh)
    G = np.einsum("cid,cjd->cij", B, B)
    eye = np.eye(2)
    # local[c, i, a, j, b] for test (i, a), trial (j, b)
    local = mu * (
        np.einsum("cij,ab->ciajb", G, eye)
        + np.einsum("cib,cja->ciajb", B, B)
    )
    local += lam * np.einsum("cia,cjb->ciajb", B, B)
    local *= area[:, None, None, None, None]
    if delta:
        local += delta * np.einsum("c,ij,ab->ciajb", area, _LOCAL_MASS, eye)

    dofs = (2 * mesh.cells[:, :, None] + np.arange(2)).reshape(-1, 6)
    rows = np.repeat(dofs, 6, axis=1)
    cols = np.tile(dofs, (1, 6))
    return _scatter(rows, cols, local.reshape(-1, 36), 2 * mesh.num_vertices)


def vector_mass(mesh: TriangleMesh) -> sp.csr_matrix:
    """L2 Gram matrix on the interleaved vector P1 space."""
    return sp.kron(assemble_mass(mesh), sp.identity(2), format="csr")


def assemble_load(mesh: TriangleMesh, source, mass: sp.spmatrix | None = None) -> np.ndarray:
    """b_i = int source * phi_i for a nodal ``source``."""
    source = np.asarray(source, dtype=float)
    if source.shape != (mesh.num_vertices,):
        raise AssemblyError(
            f"source has shape {source.shape}, expected ({mesh.num_vertices},)"
        )
    if mass is None:
        mass = assemble_mass(mesh)
    return mass @ source


def quadrature_points(mesh: TriangleMesh):
    """Yield ``(points (M, 2), barycentric (3,), weight)`` for each rule point."""
    x = mesh.vertices[mesh.cells]
    for (s, t), w in zip(QUAD_POINTS, QUAD_WEIGHTS):
        yield x[:, 0] + s * (x[:, 1] - x[:, 0]) + t * (x[:, 2] - x[:, 0]), np.array([1 - s - t, s, t]), w


def assemble_load_function(mesh: TriangleMesh, func) -> np.ndarray:
    """b_i = int func * phi_i by the degree-5 rule (exact for quartic ``func``)."""
    area, _ = _geometry(mesh)
    b = np.zeros(mesh.num_vertices)
    for pts, lam, w in quadrature_points(mesh):
        vals = np.broadcast_to(np.asarray(func(pts[:, 0], pts[:, 1]), dtype=float), area.shape)
        np.add.at(b, mesh.cells, (w * area * vals)[:, None] * lam[None, :])
    return b


@dataclass(frozen=True)
class DirichletBC:
    markers: tuple[int, ...] = (1,)
    value: float = 0.0

    def dofs(self, mesh: TriangleMesh) -> np.ndarray:
        if not self.markers:
            raise MeshError("Dirichlet condition needs at least one boundary marker")
        return mesh.boundary_vertices(self.markers)


def apply_dirichlet(A: sp.spmatrix, b: np.ndarray, bc: DirichletBC, mesh: TriangleMesh,
                    block: int = 1):
    """Symmetric elimination of Dirichlet dofs.

    Constrained rows and columns are zeroed, the diagonal set to one and the
    right-hand side adjusted so that the solve returns ``bc.value`` on the
    boundary. ``block=2`` constrains both components of a vector field.
    """
    nodes = bc.dofs(mesh)
    dofs = (block * nodes[:, None] + np.arange(block)).ravel()
    return eliminate_dofs(A, b, dofs, bc.value)


def eliminate_dofs(A: sp.spmatrix, b: np.ndarray | None, dofs: np.ndarray, value: float = 0.0):
    n = A.shape[0]
    fixed = np.zeros(n, dtype=bool)
    fixed[dofs] = True
    keep = sp.diags((~fixed).astype(float))
    A_bc = (keep @ A @ keep + sp.diags(fixed.astype(float))).tocsr()
    A_bc.eliminate_zeros()
    A_bc.sort_indices()
    if b is None:
        return A_bc, None
    b = np.asarray(b, dtype=float)
    if value != 0.0:
        g = np.where(fixed, value, 0.0)
        b = b - A @ g
    b_bc = np.where(fixed, value, b)
    return A_bc, b_bc


# --- functionals -----------------------------------------------------------

@dataclass(frozen=True)
class Tracking:
    """0.5 * weight * int (y - y_d)^2"""
    y: np.ndarray
    y_d: np.ndarray
    weight: float = 1.0


@dataclass(frozen=True)
class Tikhonov:
    """0.5 * weight * int u^2"""
    u: np.ndarray
    weight: float


@dataclass(frozen=True)
class Linear:
    """weight * int y"""
    y: np.ndarray
    weight: float = 1.0


def integrate_functional(mesh: TriangleMesh, terms, mass: sp.spmatrix | None = None) -> float:
    """Exact value of a sum of P1 cost terms."""
    if mass is None:
        mass = assemble_mass(mesh)
    nv = mesh.num_vertices

    def check(*fields):
        for f in fields:
            if np.shape(f) != (nv,):
                raise AssemblyError(f"field of shape {np.shape(f)} does not live on a mesh with {nv} vertices")

    total = 0.0
    for term in terms:
        if isinstance(term, Tracking):
            check(term.y, term.y_d)
            r = term.y - term.y_d
            total += 0.5 * term.weight * (r @ (mass @ r))
        elif isinstance(term, Tikhonov):
            check(term.u)
            total += 0.5 * term.weight * (term.u @ (mass @ term.u))
        elif isinstance(term, Linear):
            check(term.y)
            total += term.weight * mass.sum(axis=0).A1 @ term.y
        else:
            raise AssemblyError(f"unknown functional term {term!r}")
    return float(total)
