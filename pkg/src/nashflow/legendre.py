"""Dual gradients of strongly monotone coupling systems.

Given a stacked gradient oracle z -> (d F_1(z)/d z_1, ..., d F_N(z)/d z_N)
whose pairing is theta-coercive, the map is invertible; its inverse is the
stacked gradient of the dual functions G_j with G_j(y) = z_j y_j - F_j(z) at
z = inverse(y).  This module computes that inverse pointwise (damped Newton
with a guaranteed strongly monotone fixed-point fallback) and spot-verifies
the dual properties: entrywise Hessian bound 1/theta, monotone dual pairing
and quadratic growth.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._numerics import NewtonError, damped_newton, fd_jacobian
from .core import GameProblem, WholeSpace, estimate_lipschitz

__all__ = [
    "DualSystem",
    "LegendreError",
    "dual_gradient",
    "dual_value",
    "verify_dual_properties",
    "DualReport",
]

PAIRING_SLACK = 1e-9
HESSIAN_SLACK = 1e-4


class LegendreError(RuntimeError):
    """Dual-gradient solve exhausted its budget; last residual in .residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class DualSystem:
    """A theta-coercive stacked gradient field with optional values.

    f_grad maps R^n to R^n; f_values, when present, maps R^n to the n
    per-player values F_j(z).  Construction samples random pairs and requires
    the pairing ratio to stay above theta.
    """

    n: int
    f_grad: Callable[[np.ndarray], np.ndarray]
    theta: float
    f_values: Optional[Callable[[np.ndarray], np.ndarray]] = None
    growth_c: Optional[float] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        rng = np.random.default_rng(20240 + self.n)
        for _ in range(32):
            z = rng.standard_normal(self.n) * 2.0
            w = rng.standard_normal(self.n) * 2.0
            d = z - w
            nd2 = float(d @ d)
            if nd2 < 1e-16:
                continue
            ratio = float((self._eval(z) - self._eval(w)) @ d) / nd2
            if ratio < self.theta - PAIRING_SLACK:
                raise ValueError(
                    f"sampled coercivity ratio {ratio:.6g} fell below "
                    f"theta={self.theta:g}"
                )

    def _eval(self, z: np.ndarray) -> np.ndarray:
        out = np.asarray(self.f_grad(z), dtype=float)
        if out.shape != (self.n,):
            raise ValueError(f"f_grad returned shape {out.shape}, expected ({self.n},)")
        return out


def _wrap_problem(sys: DualSystem) -> GameProblem:
    return GameProblem(
        layout=(1,) * sys.n,
        sets=tuple(WholeSpace(1) for _ in range(sys.n)),
        grad=lambda j, z: np.array([sys._eval(z)[j]]),
        stacked_grad=sys._eval,
        name="dual_system",
    )


def _local_lipschitz(sys: DualSystem, center: np.ndarray, radius: float) -> float:
    rng = np.random.default_rng(7)

    def pairs():
        while True:
            u = rng.standard_normal(sys.n)
            v = rng.standard_normal(sys.n)
            nu, nv = np.linalg.norm(u), np.linalg.norm(v)
            if nu < 1e-12 or nv < 1e-12:
                continue
            ru = radius * rng.random() ** (1.0 / sys.n)
            rv = radius * rng.random() ** (1.0 / sys.n)
            yield center + ru * u / nu, center + rv * v / nv

    est = estimate_lipschitz(_wrap_problem(sys), sampler=pairs(), n=16)
    return max(est, sys.theta)


def dual_gradient(
    sys: DualSystem, y, tol: float = 1e-10, max_iters: int = 1000
) -> np.ndarray:
    """Solve f_grad(z) = y; the result is the stacked dual gradient at y.

    Damped Newton (finite-difference Jacobian) runs first; if it stalls, the
    fixed-point iteration z <- z - (theta/L^2)(f_grad(z) - y) takes over with
    a locally sampled L, which coercivity makes a contraction.  The residual
    is measured in the sup norm.
    """
    yv = np.asarray(y, dtype=float).reshape(-1)
    if yv.shape != (sys.n,):
        raise ValueError(f"y has shape {yv.shape}, expected ({sys.n},)")
    if not np.all(np.isfinite(yv)):
        raise ValueError("y must be finite")

    def resid(z):
        return sys._eval(z) - yv

    z = np.zeros(sys.n)
    r = resid(z)
    if np.max(np.abs(r)) <= tol:
        return z

    newton_budget = min(100, max_iters)
    try:
        z_new, _ = damped_newton(resid, z, tol=tol, max_iters=newton_budget)
        if np.max(np.abs(resid(z_new))) <= tol:
            return z_new
        z = z_new
    except NewtonError as exc:
        if exc.best is not None and exc.residual <= np.max(np.abs(r)):
            z = exc.best

    radius = 1.0 + float(np.linalg.norm(yv)) / sys.theta
    lips = _local_lipschitz(sys, z, radius)
    tau = sys.theta / lips**2
    r = resid(z)
    for _ in range(max_iters):
        rn = float(np.max(np.abs(r)))
        if rn <= tol:
            return z
        z = z - tau * r
        r = resid(z)
    rn = float(np.max(np.abs(r)))
    if rn <= tol:
        return z
    raise LegendreError(
        f"dual gradient solve exhausted {max_iters} iterations; "
        f"residual {rn:.3e} above tol {tol:g}",
        rn,
    )


def dual_value(sys: DualSystem, y, tol: float = 1e-10) -> np.ndarray:
    """Per-player dual values G_j(y) = z_j y_j - F_j(z) at z = dual_gradient(y)."""
    if sys.f_values is None:
        raise ValueError("dual_value requires f_values oracles on the system")
    yv = np.asarray(y, dtype=float).reshape(-1)
    z = dual_gradient(sys, yv, tol=tol)
    fv = np.asarray(sys.f_values(z), dtype=float)
    if fv.shape != (sys.n,):
        raise ValueError(f"f_values returned shape {fv.shape}, expected ({sys.n},)")
    return z * yv - fv


@dataclass(frozen=True)
class DualReport:
    """Sampled verification of the dual properties."""

    n_samples: int
    hessian_bound: float  # 1/theta
    max_hessian_entry: float
    min_pairing: float
    max_inverse_residual: float
    growth_gradient: float  # max |z_j| / (1 + |y|)
    growth_value: Optional[float]  # max |G_j(y)| / (1 + |y|^2)

    @property
    def passed(self) -> bool:
        return (
            self.max_hessian_entry <= self.hessian_bound + HESSIAN_SLACK
            and self.min_pairing >= -PAIRING_SLACK
            and np.isfinite(self.growth_gradient)
        )


def verify_dual_properties(
    sys: DualSystem, sampler=None, n: int = 32, seed: int = 0
) -> DualReport:
    """Sample y points and check the dual map's stated properties.

    Reports the largest finite-difference Hessian entry of the dual values
    (bounded by 1/theta), the smallest dual monotonicity pairing over
    consecutive sample pairs, the worst inverse residual |f_grad(B(y)) - y|,
    and empirical growth constants.
    """
    if sampler is None:
        rng = np.random.default_rng(seed)

        def gen():
            while True:
                yield rng.standard_normal(sys.n) * (1.0 + 2.0 * rng.random())

        sampler = gen()
    points = []
    for y in sampler:
        points.append(np.asarray(y, dtype=float).reshape(-1))
        if len(points) >= n:
            break
    if len(points) < 2:
        raise ValueError("verify_dual_properties needs at least 2 sample points")

    tight = 1e-12
    max_hess = 0.0
    min_pairing = np.inf
    max_inv = 0.0
    grad_c = 0.0
    val_c = 0.0 if sys.f_values is not None else None
    duals = []
    for y in points:
        z = dual_gradient(sys, y, tol=tight)
        duals.append(z)
        max_inv = max(max_inv, float(np.max(np.abs(sys._eval(z) - y))))
        grad_c = max(grad_c, float(np.max(np.abs(z))) / (1.0 + np.linalg.norm(y)))
        if val_c is not None:
            g = dual_value(sys, y, tol=tight)
            val_c = max(
                val_c, float(np.max(np.abs(g))) / (1.0 + np.linalg.norm(y) ** 2)
            )
        jac = fd_jacobian(
            lambda yy: dual_gradient(sys, yy, tol=tight), y, rel_step=1e-5
        )
        max_hess = max(max_hess, float(np.max(np.abs(jac))))
    for (y1, z1), (y2, z2) in zip(zip(points, duals), zip(points[1:], duals[1:])):
        min_pairing = min(min_pairing, float((z1 - z2) @ (y1 - y2)))

    return DualReport(
        n_samples=len(points),
        hessian_bound=1.0 / sys.theta,
        max_hessian_entry=max_hess,
        min_pairing=float(min_pairing),
        max_inverse_residual=max_inv,
        growth_gradient=grad_c,
        growth_value=val_c,
    )
