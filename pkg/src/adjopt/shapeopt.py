"""Shape optimization of  min int_Omega y  s.t.  -lap y = f, y = 0 on the boundary.

The shape derivative is assembled in volume form, turned into a deformation
by the linear-elasticity Riesz map and applied by moving mesh vertices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem
from .linsolve import DEFAULT_SETTINGS, SolverSettings, cg_solve, project_out_kernel
from .meshkit import TriangleMesh, deform, quality_report, unit_disc_mesh
from .optim import OptimizerConfig, descent_loop


def source(x1, x2):
    return 2.5 * (x1 + 0.4 - x2**2) ** 2 + x1**2 + x2**2 - 1


def source_gradient(x1, x2):
    s = x1 + 0.4 - x2**2
    return 5.0 * s + 2.0 * x1, -10.0 * x2 * s + 2.0 * x2


def rigid_modes(mesh: TriangleMesh) -> list[np.ndarray]:
    """Two translations and the linearized rotation, as interleaved vectors."""
    x1, x2 = mesh.vertices[:, 0], mesh.vertices[:, 1]
    one, zero = np.ones_like(x1), np.zeros_like(x1)
    return [np.column_stack([one, zero]).ravel(),
            np.column_stack([zero, one]).ravel(),
            np.column_stack([-x2, x1]).ravel()]


@dataclass
class ShapeProblem:
    initial_mesh: TriangleMesh
    f: callable = source
    grad_f: callable = source_gradient
    mu: float = 1.0
    lam: float = 0.0
    delta: float = 0.0
    bdry_def: tuple[int, ...] = (1,)
    bdry_fix: tuple[int, ...] = ()
    bc: fem.DirichletBC = field(default_factory=lambda: fem.DirichletBC((1,), 0.0))
    solver: SolverSettings = DEFAULT_SETTINGS
    quality_factor: float = 0.1
    source_mode: str = "quadrature"

    def __post_init__(self):
        if self.source_mode not in ("quadrature", "interpolate"):
            raise ValueError(f"source_mode must be 'quadrature' or 'interpolate', "
                             f"got {self.source_mode!r}")
        self.bdry_def = tuple(self.bdry_def)
        self.bdry_fix = tuple(self.bdry_fix)
        overlap = set(self.bdry_def) & set(self.bdry_fix)
        if overlap:
            raise ValueError(f"markers {sorted(overlap)} are both deformable and fixed")
        uncovered = self.initial_mesh.markers() - set(self.bdry_def) - set(self.bdry_fix)
        if uncovered:
            raise ValueError(f"boundary markers {sorted(uncovered)} are neither in "
                             "shape_bdry_def nor in shape_bdry_fix")
        if self.mu <= 0 or self.lam < 0 or self.delta < 0:
            raise ValueError("elasticity parameters need mu > 0, lambda >= 0, delta >= 0")

    # --- state / adjoint -------------------------------------------------
    def _poisson(self, mesh, load):
        K = fem.assemble_stiffness(mesh)
        A, b = fem.apply_dirichlet(K, load, self.bc, mesh)
        return cg_solve(A, b, self.solver)

    def load(self, mesh: TriangleMesh) -> np.ndarray:
        """Right-hand side int f phi_i, with f exact or nodally interpolated."""
        if self.source_mode == "quadrature":
            return fem.assemble_load_function(mesh, self.f)
        return fem.assemble_mass(mesh) @ fem.interpolate(mesh, self.f)

    def solve_state(self, mesh: TriangleMesh):
        return self._poisson(mesh, self.load(mesh))

    def solve_adjoint(self, mesh: TriangleMesh, y=None):
        """Adjoint for the cost int y; independent of the state."""
        M = fem.assemble_mass(mesh)
        return self._poisson(mesh, -(M @ np.ones(mesh.num_vertices)))

    def cost(self, mesh: TriangleMesh, y) -> float:
        return fem.integrate_functional(mesh, [fem.Linear(y, 1.0)])

    # --- derivative and gradient ------------------------------------------
    def assemble_shape_derivative(self, mesh: TriangleMesh, y, p) -> np.ndarray:
        """dJ[phi] for every vector P1 basis deformation, as an (N, 2) array.

        dJ[W] = int (y + grad y.grad p - f p) div W - (DW + DW^T) grad y . grad p
                - (grad f . W) p
        The f terms are integrated the same way as the load (quadrature or
        nodal interpolation), which makes this the exact derivative of the
        discrete cost under vertex motion.
        """
        area, B = fem._geometry(mesh)
        yc, pc = y[mesh.cells], p[mesh.cells]
        gy = np.einsum("ci,cid->cd", yc, B)
        gp = np.einsum("ci,cid->cd", pc, B)
        out = np.zeros((mesh.num_vertices, 2))
        if self.source_mode == "quadrature":
            fp = np.zeros(mesh.num_cells)
            for pts, lam, w in fem.quadrature_points(mesh):
                wp = w * area * (pc @ lam)
                fp += wp * self.f(pts[:, 0], pts[:, 1])
                gf = np.column_stack(self.grad_f(pts[:, 0], pts[:, 1]))
                np.add.at(out, mesh.cells, -(wp[:, None, None] * lam[None, :, None] * gf[:, None, :]))
        else:
            fc = fem.interpolate(mesh, self.f)[mesh.cells]
            fp = area * np.einsum("ci,ij,cj->c", fc, fem._LOCAL_MASS, pc)
            Mp = fem.assemble_mass(mesh) @ p
            out -= Mp[:, None] * fem.interpolate(mesh, self.grad_f)
        div_coef = area * yc.mean(axis=1) + area * np.einsum("cd,cd->c", gy, gp) - fp
        local = div_coef[:, None, None] * B
        local -= area[:, None, None] * (
            np.einsum("cid,cd->ci", B, gy)[:, :, None] * gp[:, None, :]
            + np.einsum("cid,cd->ci", B, gp)[:, :, None] * gy[:, None, :]
        )
        np.add.at(out, mesh.cells, local)
        return out

    def elasticity(self, mesh: TriangleMesh):
        return fem.assemble_elasticity(mesh, self.mu, self.lam, self.delta)

    def compute_shape_gradient(self, mesh: TriangleMesh, derivative, x0=None, matrix=None):
        """Deformation G with a(G, W) = dJ[W] for all admissible W, as (N, 2).

        Fixed boundaries get zero displacement. Without fixed boundaries and
        with delta = 0 the rigid modes are removed from the derivative and G
        is taken L2-orthogonal to them.
        """
        A = self.elasticity(mesh) if matrix is None else matrix
        b = np.asarray(derivative, dtype=float).ravel()
        x0 = None if x0 is None else np.asarray(x0, dtype=float).ravel()
        if self.bdry_fix:
            bc = fem.DirichletBC(self.bdry_fix, 0.0)
            A_bc, b_bc = fem.apply_dirichlet(A, b, bc, mesh, block=2)
            G = cg_solve(A_bc, b_bc, self.solver, x0=x0)
        elif self.delta == 0:
            VM = fem.vector_mass(mesh)
            modes = rigid_modes(mesh)
            b = project_out_kernel(b, modes, VM, dual=True)
            G = cg_solve(A, b, self.solver, x0=x0, kernel=modes, metric=VM)
        else:
            G = cg_solve(A, b, self.solver, x0=x0)
        return G.reshape(-1, 2)

    def admissible(self, mesh: TriangleMesh, reference_ratio: float) -> bool:
        q = quality_report(mesh)
        return q.num_inverted == 0 and q.min_radius_ratio >= self.quality_factor * reference_ratio


def benchmark_problem(n: int, **kwargs) -> ShapeProblem:
    return ShapeProblem(unit_disc_mesh(n), **kwargs)


@dataclass
class ShapeIterate:
    mesh: TriangleMesh
    y: np.ndarray
    cost: float
    p: np.ndarray | None = None
    derivative: np.ndarray | None = None
    G: np.ndarray | None = None
    matrix: object = None


class _Adapter:
    # t G with t > 1 moves vertices further than the gradient itself
    unit_step_cap = True

    def __init__(self, problem: ShapeProblem, reference_ratio: float):
        self.problem = problem
        self.reference_ratio = reference_ratio

    def evaluate(self, mesh):
        y = self.problem.solve_state(mesh)
        return ShapeIterate(mesh, y, self.problem.cost(mesh, y))

    def complete(self, it: ShapeIterate):
        pr = self.problem
        it.p = pr.solve_adjoint(it.mesh, it.y)
        it.derivative = pr.assemble_shape_derivative(it.mesh, it.y, it.p)
        it.matrix = pr.elasticity(it.mesh)
        # it.G holds the previous gradient after a trial step: use it as warm start
        it.G = pr.compute_shape_gradient(it.mesh, it.derivative, x0=it.G, matrix=it.matrix)
        return it

    def inner(self, state, a, b):
        return float(a.ravel() @ (state.matrix @ b.ravel()))

    def gradient(self, state):
        return state.G

    def stationarity(self, state):
        return np.sqrt(max(self.inner(state, state.G, state.G), 0.0))

    def slope(self, state, d):
        return float(np.sum(state.derivative * d))

    def trial(self, state, d, t):
        mesh = deform(state.mesh, d, t)
        if not self.problem.admissible(mesh, self.reference_ratio):
            return None
        new = self.evaluate(mesh)
        new.G = state.G
        return new.cost, t * self.slope(state, d), new

    def step(self, old, new, d, t):
        return t * d

    def quality(self, state):
        q = quality_report(state.mesh)
        return q.min_radius_ratio, q.num_inverted


def optimize_shape(problem: ShapeProblem, config: OptimizerConfig):
    """Returns ``(mesh, y, history)`` for algorithm gd, ncg or lbfgs."""
    if config.algorithm not in ("gd", "ncg", "lbfgs"):
        raise ValueError(f"shape optimization supports gd, ncg and lbfgs, not {config.algorithm!r}")
    mesh0 = problem.initial_mesh
    adapter = _Adapter(problem, quality_report(mesh0).min_radius_ratio)
    state = adapter.complete(adapter.evaluate(mesh0))
    state, history = descent_loop(adapter, config, state)
    return state.mesh, state.y, history
