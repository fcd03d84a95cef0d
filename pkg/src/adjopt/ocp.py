"""Poisson-constrained optimal control with tracking cost and Tikhonov term.

    min  1/2 ||y - y_d||^2 + alpha/2 ||u||^2   s.t.  -lap y = u,  y = 0 on the boundary,
         u_a <= u <= u_b (optional)

Sign convention: the Lagrangian is J + <e(y, u), p> with
e(y, u)[phi] = int grad y . grad phi - u phi, so the adjoint has load
-(y - y_d) and the L2 gradient is alpha u - p.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from . import fem
from .linsolve import DEFAULT_SETTINGS, SolverError, SolverSettings, cg_solve, operator_cg
from .meshkit import TriangleMesh, unit_square_mesh
from .optim import (CONVERGED, MAX_ITERATIONS, OptimizationHistory, OptimizerConfig, armijo,
                    descent_loop)

DEFAULT_ALPHA = 1e-4


def desired_state(x1, x2):
    return x1**2 * (1 - x1) * x2**2 * (1 - x2)


class RieszMap:
    """Maps derivative (load) vectors to gradients for a symmetric metric."""

    def __init__(self, metric, settings: SolverSettings = DEFAULT_SETTINGS):
        self.metric = metric
        self.settings = settings

    def solve(self, derivative, x0=None):
        return cg_solve(self.metric, derivative, self.settings, x0=x0)

    def inner(self, a, b) -> float:
        return float(a @ (self.metric @ b))

    def norm(self, g) -> float:
        return riesz_norm(g, self.metric)


def riesz_norm(g, metric) -> float:
    q = float(g @ (metric @ g))
    if q < 0:
        raise ValueError(f"metric is not positive definite (g^T M g = {q:.3e})")
    return float(np.sqrt(q))


def project_box(u, u_a, u_b):
    return np.maximum(u_a, np.minimum(u, u_b))


@dataclass
class ControlIterate:
    u: np.ndarray
    y: np.ndarray
    cost: float
    p: np.ndarray | None = None
    g: np.ndarray | None = None


class ControlProblem:
    """Discrete benchmark instance on a fixed mesh.

    Parameters
    ----------
    mesh : TriangleMesh
    alpha : float
        Tikhonov weight, must be positive.
    y_d : array or callable, optional
        Desired state (nodal values or ``f(x1, x2)``); defaults to
        x1^2 (1 - x1) x2^2 (1 - x2).
    bounds : (u_a, u_b), optional
        Scalars or nodal arrays.
    """

    def __init__(self, mesh: TriangleMesh, alpha=DEFAULT_ALPHA, y_d=None, bounds=None,
                 bc: fem.DirichletBC = fem.DirichletBC((1,), 0.0),
                 solver: SolverSettings = DEFAULT_SETTINGS):
        if not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        self.mesh = mesh
        self.alpha = float(alpha)
        if y_d is None:
            y_d = desired_state
        self.y_d = fem.interpolate(mesh, y_d) if callable(y_d) else np.asarray(y_d, dtype=float)
        if self.y_d.shape != (mesh.num_vertices,):
            raise ValueError("y_d does not match the mesh")
        if bounds is not None:
            u_a, u_b = (np.broadcast_to(np.asarray(b, dtype=float), (mesh.num_vertices,))
                        for b in bounds)
            if np.any(u_a > u_b):
                raise ValueError("lower bound exceeds upper bound")
            bounds = (u_a, u_b)
        self.bounds = bounds
        self.bc = bc
        self.solver = solver

        self.mass = fem.assemble_mass(mesh)
        self.stiffness = fem.assemble_stiffness(mesh)
        self.boundary = bc.dofs(mesh)
        self.stiffness_bc, _ = fem.eliminate_dofs(self.stiffness, None, self.boundary)
        self.riesz = RieszMap(self.mass, solver)

    def with_bounds(self, bounds) -> "ControlProblem":
        return ControlProblem(self.mesh, self.alpha, self.y_d, bounds, self.bc, self.solver)

    # --- PDE solves ----------------------------------------------------
    def _poisson(self, load, value=0.0):
        rhs = load.copy()
        rhs[self.boundary] = value
        return cg_solve(self.stiffness_bc, rhs, self.solver)

    def solve_state(self, u):
        u = self._check(u)
        return self._poisson(self.mass @ u, self.bc.value)

    def solve_adjoint(self, y):
        y = self._check(y)
        return self._poisson(-(self.mass @ (y - self.y_d)))

    def compute_gradient(self, u, y, p):
        return self.riesz.solve(self.mass @ (self.alpha * u - p))

    def cost(self, u, y) -> float:
        return fem.integrate_functional(self.mesh, [fem.Tracking(y, self.y_d, 1.0),
                                                    fem.Tikhonov(u, self.alpha)], self.mass)

    def reduced_cost(self, u) -> float:
        return self.cost(u, self.solve_state(u))

    def reduced_gradient(self, u):
        y = self.solve_state(u)
        return self.compute_gradient(u, y, self.solve_adjoint(y))

    def hessian_action(self, v):
        """L2 representative of the reduced Hessian applied to ``v``."""
        v = self._check(v)
        dy = self._poisson(self.mass @ v)
        dp = self._poisson(-(self.mass @ dy))
        return self.alpha * v - dp

    def inner(self, a, b) -> float:
        return self.riesz.inner(a, b)

    def evaluate(self, u) -> ControlIterate:
        y = self.solve_state(u)
        return ControlIterate(u, y, self.cost(u, y))

    def complete(self, it: ControlIterate) -> ControlIterate:
        it.p = self.solve_adjoint(it.y)
        it.g = self.compute_gradient(it.u, it.y, it.p)
        return it

    def stationarity(self, it: ControlIterate) -> float:
        """L2 norm of the gradient, or of u - P(u - g) under box constraints."""
        if self.bounds is None:
            return self.riesz.norm(it.g)
        return self.riesz.norm(it.u - project_box(it.u - it.g, *self.bounds))

    def _check(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.mesh.num_vertices,):
            raise ValueError(f"field of shape {v.shape} does not live on this mesh")
        return v


def benchmark_problem(n: int, bounds=None, solver: SolverSettings = DEFAULT_SETTINGS):
    return ControlProblem(unit_square_mesh(n), DEFAULT_ALPHA, bounds=bounds, solver=solver)


def armijo_line_search(problem: ControlProblem, it: ControlIterate, d, t_init,
                       epsilon=1e-4, max_halvings=30):
    """Backtracking on the reduced cost along ``d`` (projected under bounds).

    Returns ``(t, new_iterate)``; the new iterate carries state and cost but
    not yet adjoint or gradient.
    """
    if _slope(problem, it, d) >= 0:
        raise ValueError("direction is not a descent direction")
    return armijo(lambda t: _trial(problem, it, d, t), it.cost, t_init, epsilon, max_halvings)


def _slope(problem, it, d):
    return problem.inner(it.g, d)


def _trial(problem, it, d, t):
    u_t = it.u + t * d
    if problem.bounds is not None:
        u_t = project_box(u_t, *problem.bounds)
    new = problem.evaluate(u_t)
    return new.cost, problem.inner(it.g, u_t - it.u), new


class _Adapter:
    """Glue between ControlProblem and the generic descent loop."""

    def __init__(self, problem: ControlProblem, config: OptimizerConfig):
        self.problem = problem
        self.config = config
        self.inner_iterations = []

    def inner(self, state, a, b):
        return self.problem.inner(a, b)

    def gradient(self, state):
        return state.g

    def stationarity(self, state):
        return self.problem.stationarity(state)

    def slope(self, state, d):
        return _slope(self.problem, state, d)

    def trial(self, state, d, t):
        return _trial(self.problem, state, d, t)

    def complete(self, state):
        return self.problem.complete(state)

    def step(self, old, new, d, t):
        return new.u - old.u

    def newton_direction(self, state):
        d, its = operator_cg(self.problem.hessian_action, -state.g, self.problem.inner,
                             rtol=self.config.newton_rtol,
                             max_iterations=self.config.newton_max_iterations)
        self.inner_iterations.append(its)
        return d


def optimize(problem: ControlProblem, config: OptimizerConfig, u0=None):
    """Solve the control problem. Returns ``(u, y, history)``."""
    u0 = np.zeros(problem.mesh.num_vertices) if u0 is None else np.array(u0, dtype=float)
    if problem.bounds is not None:
        u0 = project_box(u0, *problem.bounds)
    if config.algorithm == "pdas":
        return _pdas(problem, config, u0)
    state = problem.complete(problem.evaluate(u0))
    adapter = _Adapter(problem, config)
    state, history = descent_loop(adapter, config, state)
    history.inner_iterations = adapter.inner_iterations
    return state.u, state.y, history


def _pdas(problem: ControlProblem, config: OptimizerConfig, u0):
    """Primal-dual active set iteration on the nodal optimality system.

    With multiplier mu = -(alpha u - p) the active sets are
    {mu + c (u - u_b) > 0} and {mu + c (u - u_a) < 0}. On the inactive set
    the affine equation (alpha u - p)_I = 0 is solved with u fixed on the
    active sets; the iteration stops when the active sets repeat.
    """
    nv = problem.mesh.num_vertices
    if problem.bounds is None:
        u_a = np.full(nv, -np.inf)
        u_b = np.full(nv, np.inf)
    else:
        u_a, u_b = problem.bounds
    c = config.pdas_c

    state = problem.complete(problem.evaluate(u0))
    history = OptimizationHistory(initial_cost=state.cost,
                                  initial_grad_norm=problem.stationarity(state))
    tol = config.atol + config.rtol * history.initial_grad_norm
    mu = -state.g
    upper = mu + c * (state.u - u_b) > 0
    lower = mu + c * (state.u - u_a) < 0
    if history.initial_grad_norm <= tol and problem.bounds is None:
        history.termination = CONVERGED
        return state.u, state.y, history

    while True:
        if history.iterations >= config.maximum_iterations:
            history.termination = MAX_ITERATIONS
            break
        inactive = ~(upper | lower)
        u = state.u.copy()
        u[upper] = u_b[upper]
        u[lower] = u_a[lower]
        base = problem.complete(problem.evaluate(u))
        idx = np.flatnonzero(inactive)
        if idx.size:
            u = u.copy()
            u[idx] += _solve_inactive(problem, base.g, idx)
        state = problem.complete(problem.evaluate(u))
        mu = -state.g
        mu[idx] = 0.0
        new_upper = mu + c * (state.u - u_b) > 0
        new_lower = mu + c * (state.u - u_a) < 0
        history.append(state.cost, problem.stationarity(state), 1.0)
        if np.array_equal(new_upper, upper) and np.array_equal(new_lower, lower):
            history.termination = CONVERGED
            break
        upper, lower = new_upper, new_lower
    return state.u, state.y, history


def _solve_inactive(problem, g_base, idx):
    """Solve (H E v)_I = -g_I for the inactive components v."""
    nv = problem.mesh.num_vertices

    def matvec(v):
        full = np.zeros(nv)
        full[idx] = np.ravel(v)
        return problem.hessian_action(full)[idx]

    op = spla.LinearOperator((idx.size, idx.size), matvec=matvec, dtype=float)
    rhs = -g_base[idx]
    # the restricted operator is not self-adjoint under the consistent mass matrix
    v, info = spla.gmres(op, rhs, rtol=1e-12, atol=0.0, restart=200, maxiter=20)
    if info != 0:
        raise SolverError(f"inactive-set solve did not converge (info={info})")
    return v
