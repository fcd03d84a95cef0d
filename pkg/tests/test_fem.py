import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from adjopt import fem
from adjopt.linsolve import cg_solve
from adjopt.meshkit import MeshError, TriangleMesh, deform, unit_disc_mesh, unit_square_mesh
from adjopt.shapeopt import source

REF = TriangleMesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]),
                   np.array([[0, 1], [1, 2], [2, 0]]), np.ones(3, dtype=int))


def loop_assembly(mesh):
    """Element-by-element reference assembly with explicit Jacobians."""
    n = mesh.num_vertices
    K = np.zeros((n, n))
    M = np.zeros((n, n))
    ref_grad = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    for cell in mesh.cells:
        x = mesh.vertices[cell]
        J = np.column_stack([x[1] - x[0], x[2] - x[0]])
        det = np.linalg.det(J)
        grads = ref_grad @ np.linalg.inv(J)
        ke = 0.5 * det * grads @ grads.T
        me = det / 24.0 * (np.ones((3, 3)) + np.eye(3))
        K[np.ix_(cell, cell)] += ke
        M[np.ix_(cell, cell)] += me
    return K, M


def probe_symmetry(A, rng, count=200):
    A = A.tocsr()
    i = rng.integers(0, A.shape[0], count)
    j = rng.integers(0, A.shape[0], count)
    amax = abs(A).max()
    return np.max(np.abs(A[i, j].A1 - A[j, i].A1)) / amax


RADON_A = (6 - np.sqrt(15)) / 21
RADON_B = (6 + np.sqrt(15)) / 21
RADON_POINTS = np.array([[1 / 3, 1 / 3],
                         [RADON_A, RADON_A], [1 - 2 * RADON_A, RADON_A], [RADON_A, 1 - 2 * RADON_A],
                         [RADON_B, RADON_B], [1 - 2 * RADON_B, RADON_B], [RADON_B, 1 - 2 * RADON_B]])
RADON_WEIGHTS = np.array([9 / 40] + [(155 - np.sqrt(15)) / 1200] * 3
                         + [(155 + np.sqrt(15)) / 1200] * 3)


def quad_integral(mesh, func):
    """Degree-5 exact quadrature over the mesh cells."""
    x = mesh.vertices[mesh.cells]
    area = mesh.signed_areas()
    total = 0.0
    for (s, t), w in zip(RADON_POINTS, RADON_WEIGHTS):
        p = x[:, 0] + s * (x[:, 1] - x[:, 0]) + t * (x[:, 2] - x[:, 0])
        total += w * np.sum(area * func(p[:, 0], p[:, 1]))
    return total


def test_reference_stiffness():
    K = fem.assemble_stiffness(REF).toarray()
    assert_allclose(K, 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]), atol=1e-15)


def test_reference_mass():
    M = fem.assemble_mass(REF).toarray()
    assert_allclose(M, np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24, atol=1e-16)


@pytest.mark.parametrize("mesh", [unit_square_mesh(4), unit_disc_mesh(3)], ids=["square", "disc"])
def test_matches_loop_assembly(mesh):
    K_ref, M_ref = loop_assembly(mesh)
    assert_allclose(fem.assemble_stiffness(mesh).toarray(), K_ref, atol=1e-13)
    assert_allclose(fem.assemble_mass(mesh).toarray(), M_ref, atol=1e-15)


def test_csr_sorted_and_duplicate_free():
    A = fem.assemble_elasticity(unit_disc_mesh(3), 1.0, 0.5, 0.1)
    assert A.has_canonical_format
    assert sp.isspmatrix_csr(A)


def test_stiffness_rows_sum_to_zero():
    for mesh in (unit_square_mesh(8), unit_disc_mesh(6)):
        K = fem.assemble_stiffness(mesh)
        assert np.max(np.abs(K @ np.ones(mesh.num_vertices))) <= 1e-12


def test_stiffness_interior_diagonal():
    K = fem.assemble_stiffness(unit_square_mesh(2))
    assert_allclose(K[4, 4], 4.0, rtol=1e-14)


@pytest.mark.parametrize("n", [1, 4, 16])
def test_mass_total_is_area(n):
    assert abs(fem.assemble_mass(unit_square_mesh(n)).sum() - 1.0) <= 1e-12


def test_mass_second_moment():
    mesh = unit_square_mesh(64)
    x1 = mesh.vertices[:, 0]
    assert abs(x1 @ (fem.assemble_mass(mesh) @ x1) - 1 / 3) <= 1e-3


def test_all_matrices_symmetric():
    rng = np.random.default_rng(0)
    mesh = deform(unit_disc_mesh(5), np.random.default_rng(1).uniform(-0.01, 0.01, (91, 2)))
    for A in (fem.assemble_stiffness(mesh), fem.assemble_mass(mesh),
              fem.assemble_elasticity(mesh, 1.3, 0.7, 0.2), fem.vector_mass(mesh)):
        assert probe_symmetry(A, rng) <= 1e-13


def test_inverted_cell_is_rejected():
    bad = TriangleMesh(REF.vertices, REF.cells[:, ::-1], REF.facets, REF.facet_markers)
    for assemble in (fem.assemble_stiffness, fem.assemble_mass, fem.assemble_elasticity):
        with pytest.raises(fem.AssemblyError):
            assemble(bad)


def test_elasticity_rejects_bad_parameters():
    with pytest.raises(fem.AssemblyError):
        fem.assemble_elasticity(REF, mu=0.0)
    with pytest.raises(fem.AssemblyError):
        fem.assemble_elasticity(REF, lam=-1.0)


def test_elasticity_translations_in_kernel():
    A = fem.assemble_elasticity(unit_disc_mesh(6))
    n = A.shape[0] // 2
    for c in range(2):
        v = np.zeros((n, 2))
        v[:, c] = 1.0
        assert np.max(np.abs(A @ v.ravel())) <= 1e-12 * abs(A).max()


def test_elasticity_rotation_in_kernel():
    mesh = unit_square_mesh(4)
    x1, x2 = mesh.vertices.T
    v = np.column_stack([-x2, x1]).ravel()
    assert abs(v @ (fem.assemble_elasticity(mesh) @ v)) <= 1e-10


def test_elasticity_kernel_rayleigh_quotients():
    mesh = unit_disc_mesh(8)
    A = fem.assemble_elasticity(mesh, 1.0, 0.5)
    x1, x2 = mesh.vertices.T
    modes = [np.column_stack([np.ones_like(x1), 0 * x1]), np.column_stack([0 * x1, np.ones_like(x1)]),
             np.column_stack([-x2, x1])]
    dmax = A.diagonal().max()
    for m in modes:
        v = m.ravel()
        assert (v @ (A @ v)) / (v @ v) <= 1e-10 * dmax


def test_elasticity_quadratic_form_with_damping():
    mesh = unit_square_mesh(32)
    v = np.column_stack([mesh.vertices[:, 0], np.zeros(mesh.num_vertices)]).ravel()
    q = v @ (fem.assemble_elasticity(mesh, 1.0, 0.0, 1.0) @ v)
    assert abs(q - (2 + 1 / 3)) <= 1e-3


def test_elasticity_lambda_term_is_divergence():
    mesh = unit_square_mesh(3)
    v = mesh.vertices.ravel()  # div = 2, eps = I
    A0 = fem.assemble_elasticity(mesh, 1.0, 0.0)
    A1 = fem.assemble_elasticity(mesh, 1.0, 1.0)
    assert_allclose(v @ (A0 @ v), 2 * 2.0, rtol=1e-13)
    assert_allclose(v @ ((A1 - A0) @ v), 4.0, rtol=1e-13)


def test_vector_mass_interleaving():
    mesh = unit_square_mesh(2)
    VM = fem.vector_mass(mesh)
    v = np.column_stack([np.ones(9), np.zeros(9)]).ravel()
    assert_allclose(v @ (VM @ v), 1.0, rtol=1e-14)


def test_load_examples():
    mesh = unit_square_mesh(8)
    assert np.all(fem.assemble_load(mesh, np.zeros(81)) == 0)
    assert abs(fem.assemble_load(mesh, np.ones(81)).sum() - 1.0) <= 1e-12
    with pytest.raises(fem.AssemblyError):
        fem.assemble_load(mesh, np.ones(80))


def test_load_equals_mass_times_source():
    mesh = unit_disc_mesh(6)
    s = np.random.default_rng(3).normal(size=mesh.num_vertices)
    assert_allclose(fem.assemble_load(mesh, s), fem.assemble_mass(mesh) @ s, atol=1e-14, rtol=0)


def test_load_of_benchmark_source_matches_quadrature():
    mesh = unit_disc_mesh(64)
    b = fem.assemble_load(mesh, fem.interpolate(mesh, source))
    exact = quad_integral(mesh, source)
    assert abs(b.sum() - exact) <= 1e-3 * abs(exact)


def test_quadrature_oracle_is_exact_for_quartics():
    # sanity check of the oracle itself on the unit square
    mesh = unit_square_mesh(2)
    assert_allclose(quad_integral(mesh, lambda x, y: x**4 * y), 1 / 10, rtol=1e-13)


def test_dirichlet_elimination():
    mesh = unit_square_mesh(4)
    K = fem.assemble_stiffness(mesh)
    b = fem.assemble_mass(mesh) @ np.ones(mesh.num_vertices)
    bc = fem.DirichletBC((1,), 0.0)
    A, rhs = fem.apply_dirichlet(K, b, bc, mesh)
    bnd = bc.dofs(mesh)
    assert probe_symmetry(A, np.random.default_rng(0)) <= 1e-13
    y = cg_solve(A, rhs)
    assert np.all(y[bnd] == 0.0)
    np.linalg.cholesky(A.toarray())  # SPD after elimination


def test_dirichlet_nonzero_value():
    mesh = unit_square_mesh(4)
    K = fem.assemble_stiffness(mesh)
    A, rhs = fem.apply_dirichlet(K, np.zeros(25), fem.DirichletBC((1,), 2.5), mesh)
    assert_allclose(cg_solve(A, rhs), 2.5, rtol=1e-10)


def test_dirichlet_all_boundary_mesh():
    mesh = unit_square_mesh(1)
    K = fem.assemble_stiffness(mesh)
    A, rhs = fem.apply_dirichlet(K, np.ones(4), fem.DirichletBC((1,), 0.75), mesh)
    assert_allclose(A.toarray(), np.eye(4))
    assert_allclose(cg_solve(A, rhs), 0.75)


def test_dirichlet_missing_marker():
    mesh = unit_square_mesh(2)
    with pytest.raises(MeshError):
        fem.apply_dirichlet(fem.assemble_stiffness(mesh), np.zeros(9), fem.DirichletBC((3,)), mesh)
    with pytest.raises(MeshError):
        fem.DirichletBC(()).dofs(mesh)


def poisson_l2_error(n):
    mesh = unit_square_mesh(n)
    u = fem.interpolate(mesh, lambda x, y: 2 * np.pi**2 * np.sin(np.pi * x) * np.sin(np.pi * y))
    A, b = fem.apply_dirichlet(fem.assemble_stiffness(mesh), fem.assemble_mass(mesh) @ u,
                               fem.DirichletBC(), mesh)
    y = cg_solve(A, b)
    exact = lambda x1, x2: np.sin(np.pi * x1) * np.sin(np.pi * x2)  # noqa: E731
    # L2 error with degree-5 quadrature of (y_h - y)^2 per cell
    x = mesh.vertices[mesh.cells]
    area = mesh.signed_areas()
    err = 0.0
    for (s, t), w in zip(RADON_POINTS, RADON_WEIGHTS):
        yh = (1 - s - t) * y[mesh.cells[:, 0]] + s * y[mesh.cells[:, 1]] + t * y[mesh.cells[:, 2]]
        p = x[:, 0] + s * (x[:, 1] - x[:, 0]) + t * (x[:, 2] - x[:, 0])
        err += w * np.sum(area * (yh - exact(p[:, 0], p[:, 1])) ** 2)
    return np.sqrt(err)


def test_manufactured_convergence_rate():
    e = [poisson_l2_error(n) for n in (16, 32, 64)]
    ratios = np.array(e[:-1]) / np.array(e[1:])
    assert np.all(np.abs(ratios - 4.0) <= 0.4), ratios


def test_functional_terms():
    mesh = unit_square_mesh(8)
    nv = mesh.num_vertices
    y = np.random.default_rng(0).normal(size=nv)
    assert fem.integrate_functional(mesh, [fem.Tracking(y, y, 1.0)]) == 0.0
    assert abs(fem.integrate_functional(mesh, [fem.Tikhonov(np.ones(nv), 1e-4)]) - 5e-5) <= 1e-16
    x1 = mesh.vertices[:, 0]
    assert abs(fem.integrate_functional(mesh, [fem.Linear(x1)]) - 0.5) <= 1e-12
    with pytest.raises(fem.AssemblyError):
        fem.integrate_functional(mesh, ["bogus"])
    with pytest.raises(fem.AssemblyError):
        fem.integrate_functional(mesh, [fem.Linear(np.ones(3))])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_tracking_matches_mass_quadratic_form(seed):
    mesh = unit_disc_mesh(3)
    rng = np.random.default_rng(seed)
    y, yd = rng.normal(size=(2, mesh.num_vertices))
    M = fem.assemble_mass(mesh)
    val = fem.integrate_functional(mesh, [fem.Tracking(y, yd, 3.0)])
    assert_allclose(val, 1.5 * (y - yd) @ (M @ (y - yd)), rtol=1e-13)


def test_interpolate_vector_field():
    mesh = unit_square_mesh(2)
    v = fem.interpolate(mesh, lambda x, y: (x, 2.0))
    assert v.shape == (9, 2)
    assert np.all(v[:, 1] == 2.0)
