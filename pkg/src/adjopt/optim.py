"""Gradient-based descent machinery shared by control and shape problems.

Every inner product is supplied by the problem (L2 for controls, the
elasticity form for shapes), so the same formulas for nonlinear CG and
L-BFGS serve both.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

ALGORITHMS = ("gd", "ncg", "lbfgs", "newton", "pdas")
NCG_VARIANTS = ("FR", "PR", "HS", "DY", "HZ")

CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
LINE_SEARCH_FAILURE = "line_search_failure"


class LineSearchFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    algorithm: str = "gd"
    ncg_variant: str = "DY"
    rtol: float = 1e-3
    atol: float = 0.0
    maximum_iterations: int = 50
    lbfgs_memory: int = 5
    armijo_epsilon: float = 1e-4
    armijo_beta: float = 2.0
    pdas_c: float = 1.0
    initial_stepsize: float = 1.0
    max_halvings: int = 30
    newton_rtol: float = 1e-10
    newton_max_iterations: int = 200

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.ncg_variant not in NCG_VARIANTS:
            raise ValueError(f"ncg_variant must be one of {NCG_VARIANTS}, got {self.ncg_variant!r}")
        if not self.rtol > 0:
            raise ValueError(f"rtol must be positive, got {self.rtol}")
        if self.atol < 0:
            raise ValueError(f"atol must be non-negative, got {self.atol}")
        if self.maximum_iterations < 1:
            raise ValueError("maximum_iterations must be at least 1")
        if self.lbfgs_memory < 1:
            raise ValueError("lbfgs_memory must be at least 1")
        if not 0 < self.armijo_epsilon < 1:
            raise ValueError("armijo_epsilon must lie in (0, 1)")
        if self.armijo_beta < 1:
            raise ValueError("armijo_beta must be at least 1")
        if self.pdas_c <= 0:
            raise ValueError("pdas_c must be positive")


@dataclass
class HistoryRecord:
    iteration: int
    cost: float
    grad_norm: float
    step_size: float
    min_radius_ratio: float | None = None  # shape problems only
    num_inverted: int | None = None


@dataclass
class OptimizationHistory:
    """Per-iteration log. ``records`` holds one entry per completed iteration;
    the starting point is kept in ``initial_cost``/``initial_grad_norm``."""

    initial_cost: float = np.nan
    initial_grad_norm: float = np.nan
    records: list[HistoryRecord] = field(default_factory=list)
    termination: str | None = None
    inner_iterations: list[int] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def costs(self) -> np.ndarray:
        return np.array([self.initial_cost] + [r.cost for r in self.records])

    @property
    def grad_norms(self) -> np.ndarray:
        return np.array([self.initial_grad_norm] + [r.grad_norm for r in self.records])

    def append(self, cost, grad_norm, step_size, quality=None):
        ratio, inverted = quality if quality is not None else (None, None)
        self.records.append(HistoryRecord(len(self.records) + 1, float(cost), float(grad_norm),
                                          float(step_size), ratio, inverted))


def ncg_beta(variant, g_new, g_old, d_old, inner) -> float:
    """Nonlinear CG update parameter with respect to ``inner``."""
    y = g_new - g_old
    if variant == "FR":
        return inner(g_new, g_new) / inner(g_old, g_old)
    if variant == "PR":
        return max(inner(g_new, y) / inner(g_old, g_old), 0.0)
    dy = inner(d_old, y)
    if dy == 0:
        return 0.0
    if variant == "HS":
        return inner(g_new, y) / dy
    if variant == "DY":
        return inner(g_new, g_new) / dy
    if variant == "HZ":
        return inner(y - 2.0 * d_old * inner(y, y) / dy, g_new) / dy
    raise ValueError(f"unknown NCG variant {variant!r}")


class LBFGSMemory:
    """Limited-memory inverse BFGS operator in a problem-supplied inner product."""

    def __init__(self, size: int, curvature_tol: float = 1e-14):
        self.pairs = deque(maxlen=size)
        self.curvature_tol = curvature_tol

    def update(self, s, y, inner) -> bool:
        if inner(s, y) <= self.curvature_tol:
            return False
        self.pairs.append((s, y))
        return True

    def clear(self):
        self.pairs.clear()

    def apply(self, g, inner):
        """Two-loop recursion; returns H g (the direction is its negative)."""
        if not self.pairs:
            return g.copy()
        q = g.copy()
        rhos, alphas = [], []
        for s, y in reversed(self.pairs):
            rho = 1.0 / inner(s, y)
            a = rho * inner(s, q)
            q = q - a * y
            rhos.append(rho)
            alphas.append(a)
        s, y = self.pairs[-1]
        r = (inner(s, y) / inner(y, y)) * q
        for (s, y), rho, a in zip(self.pairs, reversed(rhos), reversed(alphas)):
            b = rho * inner(y, r)
            r = r + (a - b) * s
        return r


def armijo(trial, cost, t_init, epsilon, max_halvings=30):
    """Backtracking by halving from ``t_init``.

    ``trial(t)`` returns ``(cost_t, decrease, payload)`` where ``decrease`` is
    the predicted first-order change (negative for descent), or ``None`` if the
    trial point is inadmissible. Accepts the first ``t`` with
    ``cost_t <= cost + epsilon * decrease``.
    """
    t = t_init
    for _ in range(max_halvings + 1):
        out = trial(t)
        if out is not None:
            cost_t, decrease, payload = out
            if cost_t <= cost + epsilon * decrease:
                return t, payload
        t *= 0.5
    raise LineSearchFailure(f"Armijo line search failed after {max_halvings} halvings")


def descent_loop(problem, config: OptimizerConfig, state):
    """First-order / Newton descent shared by control and shape problems.

    ``problem`` provides ``inner(state, a, b)``, ``gradient(state)``,
    ``stationarity(state)``, ``slope(state, d)`` (first-order change along
    ``d``), ``trial(state, d, t)`` returning
    ``(cost, decrease, new_state)`` or ``None``, ``complete(state)`` (adjoint
    and gradient for an accepted point) and ``step(old, new, d, t)`` (the
    displacement stored by L-BFGS). Newton additionally needs
    ``newton_direction(state)``. An optional ``quality(state)`` returning
    ``(min_radius_ratio, num_inverted)`` is logged per iteration. A problem with ``unit_step_cap = True`` never
    starts a line search beyond t = 1.
    """
    history = OptimizationHistory(initial_cost=state.cost)
    norm0 = problem.stationarity(state)
    history.initial_grad_norm = norm0
    tol = config.atol + config.rtol * norm0
    memory = LBFGSMemory(config.lbfgs_memory)
    d_prev = g_prev = None
    t_init = config.initial_stepsize

    norm = norm0
    while True:
        if norm <= tol:
            history.termination = CONVERGED
            break
        if history.iterations >= config.maximum_iterations:
            history.termination = MAX_ITERATIONS
            break

        g = problem.gradient(state)
        inner = lambda a, b: problem.inner(state, a, b)  # noqa: E731
        if config.algorithm == "gd":
            d = -g
        elif config.algorithm == "ncg":
            if d_prev is None:
                d = -g
            else:
                d = -g + ncg_beta(config.ncg_variant, g, g_prev, d_prev, inner) * d_prev
        elif config.algorithm == "lbfgs":
            d = -memory.apply(g, inner)
        elif config.algorithm == "newton":
            d = problem.newton_direction(state)
        else:
            raise ValueError(f"descent_loop does not handle algorithm {config.algorithm!r}")

        if problem.slope(state, d) >= 0:
            log.debug("restarting with steepest descent at iteration %d", history.iterations)
            d = -g
            memory.clear()

        try:
            t, new_state = armijo(lambda t: problem.trial(state, d, t), state.cost, t_init,
                                  config.armijo_epsilon, config.max_halvings)
        except LineSearchFailure:
            history.termination = LINE_SEARCH_FAILURE
            break
        t_init = config.armijo_beta * t
        if config.algorithm in ("lbfgs", "newton") or getattr(problem, "unit_step_cap", False):
            # the direction already carries its own scale; never start beyond the unit step
            t_init = min(t_init, 1.0)
        new_state = problem.complete(new_state)
        g_new = problem.gradient(new_state)

        if config.algorithm == "lbfgs":
            memory.update(problem.step(state, new_state, d, t), g_new - g,
                          lambda a, b: problem.inner(new_state, a, b))
        d_prev, g_prev = d, g
        state = new_state
        norm = problem.stationarity(state)
        quality = problem.quality(state) if hasattr(problem, "quality") else None
        history.append(state.cost, norm, t, quality)
        log.info("iter %3d  cost %.10e  grad %.3e  step %.3e", history.iterations, state.cost,
                 norm, t)
    return state, history
