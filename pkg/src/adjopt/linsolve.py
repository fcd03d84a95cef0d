"""Symmetric sparse linear solvers used by every state, adjoint and Riesz solve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    """Linear solve did not converge; ``residual`` holds the last residual norm."""

    def __init__(self, message, residual=np.nan, iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class IndefiniteMatrixError(SolverError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    """Settings for :func:`cg_solve`.

    ``max_iterations=None`` means 10 times the system dimension.
    ``method="direct"`` swaps CG for a sparse LU factorization (useful when
    an effectively exact solve is wanted, e.g. finite-difference checks).
    """

    rtol: float = 1e-12
    atol: float = 1e-30
    max_iterations: int | None = None
    preconditioner: str = "jacobi"
    method: str = "cg"

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("solver tolerances must be positive")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.preconditioner not in ("none", "jacobi"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.method not in ("cg", "direct"):
            raise ValueError(f"unknown solver method {self.method!r}")


DEFAULT_SETTINGS = SolverSettings()


def cg_solve(A, b, settings: SolverSettings = DEFAULT_SETTINGS, x0=None, callback=None,
             kernel=None, metric=None):
    """Solve ``A x = b`` for symmetric positive (semi)definite ``A``.

    Stops once ``||A x - b||_2 <= max(rtol ||b||_2, atol)``, or once the true
    residual has reached the rounding floor ``64 eps (||A||_inf ||x||_2 +
    ||b||_2)`` below which no double-precision iterate can go.
    ``callback(x)`` is called after every iteration.

    For singular ``A`` pass the kernel basis (and the metric used to
    orthonormalize it, identity if omitted). The right-hand side must then
    annihilate the kernel; residuals are cleaned of the kernel component that
    rounding reintroduces, and the returned solution is metric-orthogonal to
    the kernel.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"matrix shape {A.shape} does not match rhs length {n}")
    if n == 0:
        return np.zeros(0)
    if kernel is not None:
        metric = sp.identity(n, format="csr") if metric is None else metric
        Q = orthonormalize(kernel, metric)
        MQ = np.array([metric @ q for q in Q])
        clean = lambda v: v - MQ.T @ (Q @ v)  # noqa: E731
        finish = lambda v: v - Q.T @ (MQ @ v)  # noqa: E731
        if np.linalg.norm(Q @ b) > 1e-10 * max(np.linalg.norm(b), 1e-300) * np.sqrt(n):
            raise ValueError("right-hand side is not orthogonal to the supplied kernel")
        b = clean(b)
    else:
        clean = finish = None
    if settings.method == "direct":
        if kernel is not None:
            return finish(_pinned_solve(A, b, Q))
        return _direct_solve(A, b)

    tol = max(settings.rtol * np.linalg.norm(b), settings.atol)
    maxiter = settings.max_iterations or 10 * n

    a_norm = abs(A).sum(axis=1).max()
    eps = np.finfo(float).eps

    if settings.preconditioner == "jacobi":
        diag = A.diagonal()
        if np.any(diag <= 0):
            raise IndefiniteMatrixError("non-positive diagonal entry, matrix is not SPD")
        inv_diag = 1.0 / diag
    else:
        inv_diag = None

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x if x0 is not None else b.copy()
    if clean is not None:
        r = clean(r)
    rnorm = np.linalg.norm(r)
    if rnorm <= tol:
        return x if finish is None else finish(x)
    z = r * inv_diag if inv_diag is not None else r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise IndefiniteMatrixError(
                f"p^T A p = {pAp:.3e} <= 0 at iteration {it}", residual=rnorm, iterations=it
            )
        step = rz / pAp
        x += step * p
        r -= step * Ap
        if clean is not None:
            r = clean(r)
        if callback is not None:
            callback(x)
        rnorm = np.linalg.norm(r)
        if rnorm <= tol:
            # guard against drift of the recursive residual
            true_r = b - A @ x
            if clean is not None:
                true_r = clean(true_r)
            rnorm = np.linalg.norm(true_r)
            floor = 64 * eps * (a_norm * np.linalg.norm(x) + np.linalg.norm(b))
            if rnorm <= max(tol, floor):
                return x if finish is None else finish(x)
            r = true_r
        z = r * inv_diag if inv_diag is not None else r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"CG did not converge in {maxiter} iterations (residual {rnorm:.3e}, target {tol:.3e})",
        residual=rnorm, iterations=maxiter,
    )


def _direct_solve(A, b):
    lu = spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A")
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SolverError("direct solve produced non-finite values (singular matrix?)")
    return x


def _pinned_solve(A, b, Q):
    # fixing dofs on which the kernel restricts to a nonsingular block removes the
    # kernel; for consistent b the reactions at the pinned dofs vanish
    _, _, piv = scipy.linalg.qr(Q, pivoting=True, mode="economic")
    keep = np.setdiff1d(np.arange(A.shape[0]), piv[: Q.shape[0]])
    A = sp.csr_matrix(A)
    x = np.zeros(A.shape[0])
    x[keep] = _direct_solve(A[keep][:, keep], b[keep])
    return x


def orthonormalize(basis, metric) -> np.ndarray:
    """Metric-orthonormal copy of ``basis`` (rows), by modified Gram-Schmidt."""
    out = []
    for v in basis:
        v = np.array(v, dtype=float).ravel()
        for q in out:
            v = v - (q @ (metric @ v)) * q
        nrm2 = v @ (metric @ v)
        if not nrm2 > 0:
            raise ValueError("kernel basis vector has zero metric norm (or is linearly dependent)")
        out.append(v / np.sqrt(nrm2))
    return np.array(out)


def project_out_kernel(b, kernel_basis, metric, dual: bool = False) -> np.ndarray:
    """Remove the kernel component from ``b``.

    For a primal vector the result is metric-orthogonal to every kernel vector.
    With ``dual=True`` ``b`` is treated as a functional (load vector) and the
    result annihilates every kernel vector in the plain Euclidean pairing,
    which is the compatibility condition for a singular symmetric solve.
    """
    b = np.asarray(b, dtype=float)
    Q = orthonormalize(kernel_basis, metric)
    MQ = np.array([metric @ q for q in Q])
    if dual:
        return b - MQ.T @ (Q @ b)
    return b - Q.T @ (MQ @ b)


def operator_cg(apply, b, inner, rtol=1e-10, atol=0.0, max_iterations=200, x0=None):
    """Matrix-free CG for an operator self-adjoint in the inner product ``inner``.

    Returns ``(x, iterations)``. Stops when ``||r|| <= atol + rtol ||b||`` in the
    norm induced by ``inner``.
    """
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply(x) if x0 is not None else b.copy()
    bnorm = np.sqrt(inner(b, b))
    tol = atol + rtol * bnorm
    rr = inner(r, r)
    if np.sqrt(rr) <= tol:
        return x, 0
    p = r.copy()
    for it in range(1, max_iterations + 1):
        Ap = apply(p)
        pAp = inner(p, Ap)
        if pAp <= 0:
            raise IndefiniteMatrixError(f"operator not positive definite (p^T A p = {pAp:.3e})",
                                        residual=np.sqrt(rr), iterations=it)
        step = rr / pAp
        x = x + step * p
        r = r - step * Ap
        rr_new = inner(r, r)
        if np.sqrt(rr_new) <= tol:
            return x, it
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise SolverError(f"operator CG did not converge in {max_iterations} iterations",
                      residual=np.sqrt(rr), iterations=max_iterations)
