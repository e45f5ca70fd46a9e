"""Small shared numerical routines: FD Jacobians, damped Newton, CG."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np


class NewtonError(RuntimeError):
    """Damped Newton failed; final sup-norm residual in ``.residual`` and the
    best iterate reached in ``.best``."""

    def __init__(self, message: str, residual: float, best=None):
        super().__init__(message)
        self.residual = residual
        self.best = best


class CGError(RuntimeError):
    """Conjugate gradients exceeded its iteration budget."""


def fd_jacobian(f: Callable, x: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian with per-coordinate step rel_step*(1+|x_i|)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    f0 = np.asarray(f(x), dtype=float)
    jac = np.empty((f0.size, n))
    for i in range(n):
        step = rel_step * (1.0 + abs(x[i]))
        e = np.zeros(n)
        e[i] = step
        jac[:, i] = (np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2.0 * step)
    return jac


def damped_newton(
    f: Callable,
    x0: np.ndarray,
    tol: float = 1e-10,
    max_iters: int = 100,
    rel_step: float = 1e-6,
    jacobian: Optional[Callable] = None,
) -> tuple[np.ndarray, int]:
    """Solve f(x) = 0 by Newton with backtracking on the sup-norm residual.

    Returns (solution, iterations); raises NewtonError when the budget runs
    out or no damping factor yields decrease.
    """
    x = np.array(x0, dtype=float)
    r = np.asarray(f(x), dtype=float)
    best = float(np.max(np.abs(r)))
    for it in range(max_iters):
        if best <= tol:
            return x, it
        jac = jacobian(x) if jacobian is not None else fd_jacobian(f, x, rel_step)
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            raise NewtonError("singular Jacobian in damped Newton", best, x) from None
        t = 1.0
        while t >= 2.0**-30:
            x_new = x + t * step
            r_new = np.asarray(f(x_new), dtype=float)
            nrm = float(np.max(np.abs(r_new)))
            if nrm < best * (1.0 - 1e-4 * t) or nrm <= tol:
                x, r, best = x_new, r_new, nrm
                break
            t *= 0.5
        else:
            raise NewtonError(
                "no damping factor gave decrease in damped Newton", best, x
            )
    if best <= tol:
        return x, max_iters
    raise NewtonError(
        f"damped Newton did not reach tol={tol:g} in {max_iters} iterations", best, x
    )


def cg_solve(
    matvec: Callable,
    rhs: np.ndarray,
    tol: float = 1e-12,
    max_iters: Optional[int] = None,
) -> np.ndarray:
    """Conjugate gradients for SPD operators; relative-residual stopping."""
    b = np.asarray(rhs, dtype=float)
    n = b.size
    if max_iters is None:
        max_iters = 10 * n
    x = np.zeros(n)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return x
    for _ in range(max_iters):
        if np.sqrt(rs) <= tol * bnorm:
            return x
        ap = matvec(p)
        alpha = rs / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
    if np.sqrt(rs) <= tol * bnorm:
        return x
    raise CGError(f"CG did not converge within {max_iters} iterations")
