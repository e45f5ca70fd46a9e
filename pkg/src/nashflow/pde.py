"""Uniform-grid discretizations of player-coupled parabolic gradient flows.

The domain is the unit interval/square with zero Dirichlet data; grid
functions live on the n (or n x n) interior points, flattened player by
player.  Forward differences on the zero-padded lattice give a discrete
gradient D whose adjoint D* satisfies summation by parts exactly, so D*D is
the standard 3/5-point Laplacian stencil and every discretized energy is
differentiated exactly by its assembled field.

Four families are provided: kernel-plus-coupling games measured in L2,
gradient-coupled Lagrangian games, and the H^-1 / H^1_0 constructions whose
equilibria come from the dual gradients of the coupling system.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solveh_banded

from ._numerics import cg_solve, damped_newton
from .core import GamePoint, GameProblem, WholeSpace
from .legendre import DualSystem, dual_gradient

__all__ = [
    "Grid",
    "GradientKernel",
    "quadratic_kernel",
    "quartic_kernel",
    "PointwiseCoupling",
    "linear_coupling",
    "saturating_coupling",
    "zero_coupling",
    "GradientLagrangian",
    "decoupled_lagrangian",
    "ring_lagrangian",
    "anisotropic_lagrangian",
    "CouplingSpec",
    "discretize_l2_game",
    "discretize_gradient_coupled_game",
    "discretize_hminus_game",
    "discretize_h1_game",
    "grad_discrete",
    "div_adjoint",
    "neg_laplacian",
    "inv_neg_laplacian",
    "l2_norm",
    "h1_seminorm",
    "hminus_inner",
    "hminus_norm",
    "coupling_dual_system",
    "hminus_equilibrium",
    "h1_equilibrium",
    "discrete_nash_oracle",
    "fit_decay_rate",
    "RateFitError",
    "write_snapshot_csv",
]


class RateFitError(RuntimeError):
    """Too few usable samples to fit a decay rate."""


@dataclass(frozen=True)
class Grid:
    """Interior points of a uniform Dirichlet grid on the unit interval/square."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.n < 2:
            raise ValueError("need at least 2 interior points per axis")

    @property
    def h_x(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def npts(self) -> int:
        return self.n**self.dim

    @property
    def n_corners(self) -> int:
        return (self.n + 1) ** self.dim

    @property
    def lambda1_axis(self) -> float:
        return (4.0 / self.h_x**2) * np.sin(np.pi * self.h_x / 2.0) ** 2

    @property
    def lambda1(self) -> float:
        return self.dim * self.lambda1_axis

    def points(self) -> tuple[np.ndarray, ...]:
        x = np.arange(1, self.n + 1) * self.h_x
        if self.dim == 1:
            return (x,)
        xx, yy = np.meshgrid(x, x, indexing="ij")
        return (xx.ravel(), yy.ravel())

    def phi1(self) -> np.ndarray:
        """First Dirichlet eigenfunction of the discrete Laplacian."""
        x = np.arange(1, self.n + 1) * self.h_x
        s = np.sin(np.pi * x)
        if self.dim == 1:
            return s.copy()
        return np.outer(s, s).ravel()


# ---------------------------------------------------------------------------
# discrete differential operators


def grad_discrete(grid: Grid, v: np.ndarray) -> np.ndarray:
    """Forward differences of the zero-padded grid function, shape (dim, corners).

    Both components are anchored at the same corner lattice, so nonseparable
    kernels H(p) can be evaluated pointwise on the result.
    """
    h = grid.h_x
    n = grid.n
    if grid.dim == 1:
        vp = np.zeros(n + 2)
        vp[1:-1] = v
        return ((vp[1:] - vp[:-1]) / h)[None, :]
    vp = np.zeros((n + 2, n + 2))
    vp[1:-1, 1:-1] = v.reshape(n, n)
    gx = (vp[1:, :-1] - vp[:-1, :-1]) / h
    gy = (vp[:-1, 1:] - vp[:-1, :-1]) / h
    return np.stack([gx.ravel(), gy.ravel()])


def div_adjoint(grid: Grid, q: np.ndarray) -> np.ndarray:
    """Adjoint D* of grad_discrete: <D v, q> = <v, D* q> exactly."""
    h = grid.h_x
    n = grid.n
    if grid.dim == 1:
        qv = q.reshape(n + 1)
        return (qv[:-1] - qv[1:]) / h
    qx = q[0].reshape(n + 1, n + 1)
    qy = q[1].reshape(n + 1, n + 1)
    out = (qx[:-1, 1:] - qx[1:, 1:] + qy[1:, :-1] - qy[1:, 1:]) / h
    return out.ravel()


def neg_laplacian(grid: Grid, v: np.ndarray) -> np.ndarray:
    """The positive-definite 3/5-point operator -Lap_h (equals D*D)."""
    h2 = grid.h_x**2
    n = grid.n
    if grid.dim == 1:
        out = 2.0 * v.copy()
        out[1:] -= v[:-1]
        out[:-1] -= v[1:]
        return out / h2
    vm = v.reshape(n, n)
    vp = np.zeros((n + 2, n + 2))
    vp[1:-1, 1:-1] = vm
    out = 4.0 * vm - vp[:-2, 1:-1] - vp[2:, 1:-1] - vp[1:-1, :-2] - vp[1:-1, 2:]
    return out.ravel() / h2


def inv_neg_laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Solve -Lap_h u = f: banded Cholesky in 1D, conjugate gradients in 2D."""
    if grid.dim == 1:
        ab = np.zeros((2, grid.n))
        ab[0, 1:] = -1.0
        ab[1, :] = 2.0
        return solveh_banded(ab / grid.h_x**2, f)
    return cg_solve(
        lambda u: neg_laplacian(grid, u), f, tol=1e-12, max_iters=10 * grid.npts
    )


# ---------------------------------------------------------------------------
# measurement norms (these carry the volume weight h_x^dim)


def l2_norm(grid: Grid, u: np.ndarray) -> float:
    return float(np.sqrt(grid.h_x**grid.dim * np.sum(u * u)))


def h1_seminorm(grid: Grid, u: np.ndarray) -> float:
    g = grad_discrete(grid, u)
    return float(np.sqrt(grid.h_x**grid.dim * np.sum(g * g)))


def hminus_inner(grid: Grid, f: np.ndarray, g: np.ndarray) -> float:
    return float(grid.h_x**grid.dim * (f @ inv_neg_laplacian(grid, g)))


def hminus_norm(grid: Grid, f: np.ndarray) -> float:
    return float(np.sqrt(max(hminus_inner(grid, f, f), 0.0)))


# ---------------------------------------------------------------------------
# kernels, couplings, Lagrangians


@dataclass(frozen=True)
class GradientKernel:
    """Convex kernel H(p) acting pointwise on gradient vectors.

    ``grad`` and ``value`` are vectorized over sites: arrays of shape (d, m)
    map to (d, m) and (m,).  theta bounds the monotonicity ratio of grad into
    [theta, 1/theta] on the audited sample range.
    """

    name: str
    theta: float
    grad: Callable[[np.ndarray], np.ndarray]
    value: Optional[Callable[[np.ndarray], np.ndarray]] = None
    linear: bool = False

    def __post_init__(self):
        if not 0 < self.theta <= 1:
            raise ValueError("kernel theta must lie in (0, 1]")


def quadratic_kernel() -> GradientKernel:
    return GradientKernel(
        name="quadratic",
        theta=1.0,
        grad=lambda p: p,
        value=lambda p: 0.5 * np.sum(p * p, axis=0),
        linear=True,
    )


def quartic_kernel(delta: float, radius: float = 2.0) -> GradientKernel:
    """H(p) = |p|^2/2 + delta |p|^4/4; monotonicity ratio in [1, 1+3 delta R^2]
    on the ball of the given radius, hence theta = 1/(1 + 3 delta R^2)."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")

    def grad(p):
        return p * (1.0 + delta * np.sum(p * p, axis=0))

    def value(p):
        s = np.sum(p * p, axis=0)
        return 0.5 * s + 0.25 * delta * s * s

    return GradientKernel(
        name="quartic",
        theta=1.0 / (1.0 + 3.0 * delta * radius**2),
        grad=grad,
        value=value,
    )


@dataclass(frozen=True)
class PointwiseCoupling:
    """Coupling F acting pointwise on the player values at each grid point.

    ``dz`` maps stacked values Z of shape (N, m) to the per-player partials
    (d F_j / d z_j)(Z) of the same shape; ``values`` gives F_j(Z) per player.
    """

    name: str
    n_players: int
    theta: float
    lip: float
    dz: Callable[[np.ndarray], np.ndarray]
    values: Optional[Callable[[np.ndarray], np.ndarray]] = None
    linear: bool = False
    matrix: Optional[np.ndarray] = None


def linear_coupling(matrix) -> PointwiseCoupling:
    """dF_j/dz_j = (M z)_j; monotone iff sym(M) is positive semidefinite."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("coupling matrix must be square")
    eigs = np.linalg.eigvalsh(0.5 * (m + m.T))
    if eigs[0] < -1e-10:
        raise ValueError(
            f"coupling matrix is not monotone: smallest symmetric-part "
            f"eigenvalue {eigs[0]:g}"
        )
    diag = np.diag(m)

    def dz(z):
        return m @ z

    def values(z):
        mz = m @ z
        return z * mz - 0.5 * diag[:, None] * z * z

    return PointwiseCoupling(
        name="linear",
        n_players=m.shape[0],
        theta=float(max(eigs[0], 0.0)),
        lip=float(np.linalg.norm(m, 2)),
        dz=dz,
        values=values,
        linear=True,
        matrix=m,
    )


def saturating_coupling(matrix, beta: float) -> PointwiseCoupling:
    """Linear coupling plus a saturating own-value term beta*tanh(z_j)."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    base = linear_coupling(matrix)
    m = base.matrix
    diag = np.diag(m)

    def dz(z):
        return m @ z + beta * np.tanh(z)

    def values(z):
        mz = m @ z
        logcosh = np.logaddexp(z, -z) - np.log(2.0)
        return z * mz - 0.5 * diag[:, None] * z * z + beta * logcosh

    return PointwiseCoupling(
        name="saturating",
        n_players=base.n_players,
        theta=base.theta,
        lip=base.lip + beta,
        dz=dz,
        values=values,
    )


def zero_coupling(n_players: int) -> PointwiseCoupling:
    return PointwiseCoupling(
        name="zero",
        n_players=n_players,
        theta=0.0,
        lip=0.0,
        dz=lambda z: np.zeros_like(z),
        values=lambda z: np.zeros_like(z),
        linear=True,
        matrix=np.zeros((n_players, n_players)),
    )


@dataclass(frozen=True)
class GradientLagrangian:
    """Lagrangian L_j coupling all players through their gradients.

    ``dp`` maps the stacked gradients P of shape (N, d, m) to the per-player
    partials (d L_j / d p_j)(P) of the same shape; ``values`` gives L_j(P) of
    shape (N, m).  theta is the joint coercivity of the stacked dp map and
    lip its slope bound.
    """

    name: str
    n_players: int
    theta: float
    lip: float
    dp: Callable[[np.ndarray], np.ndarray]
    values: Optional[Callable[[np.ndarray], np.ndarray]] = None
    linear: bool = False


def decoupled_lagrangian(n_players: int) -> GradientLagrangian:
    return GradientLagrangian(
        name="decoupled",
        n_players=n_players,
        theta=1.0,
        lip=1.0,
        dp=lambda p: p,
        values=lambda p: 0.5 * np.sum(p * p, axis=1),
        linear=True,
    )


def ring_lagrangian(n_players: int, eps: float) -> GradientLagrangian:
    """L_j = |p_j|^2/2 + eps p_j . p_{j+1 mod N}; jointly (1-|eps|)-coercive."""
    if abs(eps) >= 1.0:
        raise ValueError("|eps| must be < 1 for coercivity")

    def dp(p):
        return p + eps * np.roll(p, -1, axis=0)

    def values(p):
        return 0.5 * np.sum(p * p, axis=1) + eps * np.sum(
            p * np.roll(p, -1, axis=0), axis=1
        )

    return GradientLagrangian(
        name="ring",
        n_players=n_players,
        theta=1.0 - abs(eps),
        lip=1.0 + abs(eps),
        dp=dp,
        values=values,
        linear=True,
    )


def anisotropic_lagrangian(mats) -> GradientLagrangian:
    """Decoupled L_j = p_j . A_j p_j / 2 with symmetric positive definite A_j."""
    a = np.asarray(mats, dtype=float)
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ValueError("mats must have shape (N, d, d)")
    lows, highs = [], []
    for j, mat in enumerate(a):
        if np.max(np.abs(mat - mat.T)) > 1e-12:
            raise ValueError(f"A_{j} is not symmetric")
        e = np.linalg.eigvalsh(mat)
        if e[0] <= 0:
            raise ValueError(f"A_{j} is not positive definite (eigenvalue {e[0]:g})")
        lows.append(e[0])
        highs.append(e[-1])

    def dp(p):
        return np.einsum("jab,jbm->jam", a, p)

    def values(p):
        return 0.5 * np.sum(p * np.einsum("jab,jbm->jam", a, p), axis=1)

    return GradientLagrangian(
        name="anisotropic",
        n_players=a.shape[0],
        theta=float(min(lows)),
        lip=float(max(highs)),
        dp=dp,
        values=values,
        linear=True,
    )


# ---------------------------------------------------------------------------
# construction-time audits


def _audit_kernel(kernel: GradientKernel, dim: int, radius: float = 2.0) -> None:
    rng = np.random.default_rng(97)
    for _ in range(32):
        p = rng.standard_normal((dim, 1))
        q = rng.standard_normal((dim, 1))
        for v in (p, q):
            nv = np.linalg.norm(v)
            if nv > radius:
                v *= radius / nv
        d = p - q
        nd2 = float(np.sum(d * d))
        if nd2 < 1e-16:
            continue
        ratio = float(np.sum((kernel.grad(p) - kernel.grad(q)) * d)) / nd2
        if not (kernel.theta - 1e-9 <= ratio <= 1.0 / kernel.theta + 1e-9):
            raise ValueError(
                f"kernel {kernel.name!r}: monotonicity ratio {ratio:.6g} outside "
                f"[{kernel.theta:g}, {1.0 / kernel.theta:g}]"
            )


def _audit_coupling(coupling: PointwiseCoupling) -> None:
    rng = np.random.default_rng(131)
    for _ in range(32):
        z = rng.standard_normal((coupling.n_players, 1))
        w = rng.standard_normal((coupling.n_players, 1))
        d = z - w
        pairing = float(np.sum((coupling.dz(z) - coupling.dz(w)) * d))
        if pairing < -1e-12:
            raise ValueError(
                f"coupling {coupling.name!r}: monotonicity pairing {pairing:.6g} < 0"
            )


def _audit_lagrangian(lag: GradientLagrangian, dim: int) -> None:
    rng = np.random.default_rng(163)
    for _ in range(32):
        p = rng.standard_normal((lag.n_players, dim, 1))
        q = rng.standard_normal((lag.n_players, dim, 1))
        d = p - q
        nd2 = float(np.sum(d * d))
        if nd2 < 1e-16:
            continue
        ratio = float(np.sum((lag.dp(p) - lag.dp(q)) * d)) / nd2
        if ratio < lag.theta - 1e-9:
            raise ValueError(
                f"lagrangian {lag.name!r}: joint coercivity ratio {ratio:.6g} "
                f"below theta={lag.theta:g}"
            )


def _as_sources(grid: Grid, sources, n_players: int) -> np.ndarray:
    src = np.asarray(sources, dtype=float)
    if src.shape != (n_players, grid.npts):
        raise ValueError(
            f"sources must have shape ({n_players}, {grid.npts}), got {src.shape}"
        )
    if not np.all(np.isfinite(src)):
        raise ValueError("sources must be finite")
    return src


def _assemble_affine(field, dim: int) -> tuple[np.ndarray, np.ndarray]:
    b = field(np.zeros(dim))
    jmat = np.empty((dim, dim))
    e = np.zeros(dim)
    for i in range(dim):
        e[i] = 1.0
        jmat[:, i] = field(e) - b
        e[i] = 0.0
    return jmat, b


def _pde_problem(grid, n_players, field, value, theta, lip, h_cfl, name, linear):
    npts = grid.npts
    offsets = np.arange(n_players + 1) * npts

    def grad(j, x):
        return field(x)[offsets[j] : offsets[j + 1]]

    affine = _assemble_affine(field, n_players * npts) if linear else None
    return GameProblem(
        layout=(npts,) * n_players,
        sets=tuple(WholeSpace(npts) for _ in range(n_players)),
        grad=grad,
        value=value,
        stacked_grad=field,
        affine=affine,
        lipschitz=lip,
        theta=theta,
        suggested_h=h_cfl,
        name=name,
    )


@dataclass(frozen=True)
class CouplingSpec:
    """Per-player kernels, a pointwise coupling and grid sources."""

    kernels: tuple[GradientKernel, ...]
    coupling: PointwiseCoupling
    sources: np.ndarray

    def __post_init__(self):
        if len(self.kernels) != self.coupling.n_players:
            raise ValueError("one kernel per player required")


# ---------------------------------------------------------------------------
# the four game families


def discretize_l2_game(grid: Grid, spec: CouplingSpec) -> GameProblem:
    """Field G_j(v) = D*(grad H_j(D v_j)) + (dF_j/dz_j)(v) - h_j.

    The exact gradient of the discrete energy sum_corners H_j(D v_j)
    + sum_points F_j(v) - h_j . v_j; measured in the (weighted) L2 norm.
    """
    n_players = spec.coupling.n_players
    src = _as_sources(grid, spec.sources, n_players)
    for k in spec.kernels:
        _audit_kernel(k, grid.dim)
    _audit_coupling(spec.coupling)
    npts = grid.npts
    kernels = spec.kernels
    coupling = spec.coupling

    def field(x):
        v = x.reshape(n_players, npts)
        dz = coupling.dz(v)
        out = np.empty_like(v)
        for j in range(n_players):
            g = grad_discrete(grid, v[j])
            out[j] = div_adjoint(grid, kernels[j].grad(g)) + dz[j] - src[j]
        return out.ravel()

    value = None
    if coupling.values is not None and all(k.value is not None for k in kernels):

        def value(j, x):
            v = x.reshape(n_players, npts)
            g = grad_discrete(grid, v[j])
            total = float(np.sum(kernels[j].value(g)))
            total += float(np.sum(coupling.values(v)[j]))
            return total - float(src[j] @ v[j])

    theta_k = min(k.theta for k in kernels)
    theta = theta_k * grid.lambda1 + coupling.theta
    lip = (1.0 / theta_k) * 4.0 * grid.dim / grid.h_x**2 + coupling.lip
    h_cfl = 0.4 * grid.h_x**2 / (2.0 * grid.dim * (1.0 / theta_k))
    linear = coupling.linear and all(k.linear for k in kernels)
    return _pde_problem(
        grid, n_players, field, value, theta, lip, h_cfl, "pde_l2", linear
    )


def discretize_gradient_coupled_game(
    grid: Grid, lagrangian: GradientLagrangian, sources
) -> GameProblem:
    """Field G_j(v) = D*((dL_j/dp_j)(D v_1, ..., D v_N)) - h_j."""
    n_players = lagrangian.n_players
    src = _as_sources(grid, sources, n_players)
    _audit_lagrangian(lagrangian, grid.dim)
    npts = grid.npts

    def field(x):
        v = x.reshape(n_players, npts)
        p = np.stack([grad_discrete(grid, v[j]) for j in range(n_players)])
        dp = lagrangian.dp(p)
        out = np.empty_like(v)
        for j in range(n_players):
            out[j] = div_adjoint(grid, dp[j]) - src[j]
        return out.ravel()

    value = None
    if lagrangian.values is not None:

        def value(j, x):
            v = x.reshape(n_players, npts)
            p = np.stack([grad_discrete(grid, v[k]) for k in range(n_players)])
            return float(np.sum(lagrangian.values(p)[j])) - float(src[j] @ v[j])

    theta = lagrangian.theta * grid.lambda1
    lip = lagrangian.lip * 4.0 * grid.dim / grid.h_x**2
    h_cfl = 0.4 * grid.h_x**2 / (2.0 * grid.dim * lagrangian.lip)
    return _pde_problem(
        grid, n_players, field, value, theta, lip, h_cfl,
        "pde_grad_coupled", lagrangian.linear,
    )


def _require_linear(coupling: PointwiseCoupling, family: str) -> None:
    if not coupling.linear:
        raise ValueError(
            f"{family} requires a linear coupling: for nonlinear couplings the "
            "field is monotone in the metric inner product but not in the flat "
            "one the integrator uses"
        )


def discretize_hminus_game(
    grid: Grid, coupling: PointwiseCoupling, sources
) -> GameProblem:
    """Field G_j(u) = (-Lap_h)((dF_j/dz_j)(u)) - h_j, measured in H^-1.

    At an equilibrium, -Lap_h of the coupling partials matches the sources,
    which the dual construction solves via w_j = (-Lap_h)^{-1} h_j.
    """
    n_players = coupling.n_players
    src = _as_sources(grid, sources, n_players)
    _audit_coupling(coupling)
    _require_linear(coupling, "discretize_hminus_game")
    npts = grid.npts

    def field(x):
        v = x.reshape(n_players, npts)
        dz = coupling.dz(v)
        out = np.empty_like(v)
        for j in range(n_players):
            out[j] = neg_laplacian(grid, dz[j]) - src[j]
        return out.ravel()

    theta = coupling.theta * grid.lambda1
    lip = max(coupling.lip, 1e-16) * 4.0 * grid.dim / grid.h_x**2
    h_cfl = 0.4 * grid.h_x**2 / (2.0 * grid.dim * max(coupling.lip, 1e-16))
    return _pde_problem(
        grid, n_players, field, None, theta, lip, h_cfl, "pde_hminus", True
    )


def discretize_h1_game(
    grid: Grid, coupling: PointwiseCoupling, sources
) -> GameProblem:
    """Field G_j(u) = -(dF_j/dz_j)(Lap_h u) - h_j, measured in the H^1 seminorm.

    At an equilibrium the coupling partials evaluated at Lap_h v equal -h_j;
    the dual construction solves -Lap_h v_j = -(dG_j/dy_j)(-h).
    """
    n_players = coupling.n_players
    src = _as_sources(grid, sources, n_players)
    _audit_coupling(coupling)
    _require_linear(coupling, "discretize_h1_game")
    npts = grid.npts

    def field(x):
        v = x.reshape(n_players, npts)
        lap = np.stack([-neg_laplacian(grid, v[j]) for j in range(n_players)])
        dz = coupling.dz(lap)
        return (-dz - src).ravel()

    theta = coupling.theta * grid.lambda1
    lip = max(coupling.lip, 1e-16) * 4.0 * grid.dim / grid.h_x**2
    h_cfl = 0.4 * grid.h_x**2 / (2.0 * grid.dim * max(coupling.lip, 1e-16))
    return _pde_problem(
        grid, n_players, field, None, theta, lip, h_cfl, "pde_h1", True
    )


# ---------------------------------------------------------------------------
# equilibrium constructions and oracles


def coupling_dual_system(coupling: PointwiseCoupling) -> DualSystem:
    """Wrap a coercive pointwise coupling as a dual system on R^N."""
    if coupling.theta <= 0:
        raise ValueError("the dual construction needs a coercive coupling")
    f_values = None
    if coupling.values is not None:
        f_values = lambda z: coupling.values(z[:, None])[:, 0]
    return DualSystem(
        n=coupling.n_players,
        f_grad=lambda z: coupling.dz(z[:, None])[:, 0],
        theta=coupling.theta,
        f_values=f_values,
    )


def hminus_equilibrium(grid: Grid, coupling: PointwiseCoupling, sources) -> np.ndarray:
    """Equilibrium of the H^-1 family: v(x) = dual_gradient(w(x)) pointwise,
    where w_j = (-Lap_h)^{-1} h_j."""
    src = _as_sources(grid, sources, coupling.n_players)
    sys = coupling_dual_system(coupling)
    w = np.stack([inv_neg_laplacian(grid, s) for s in src])
    v = np.empty_like(w)
    for m in range(grid.npts):
        v[:, m] = dual_gradient(sys, w[:, m], tol=1e-12)
    return v.ravel()


def h1_equilibrium(grid: Grid, coupling: PointwiseCoupling, sources) -> np.ndarray:
    """Equilibrium of the H^1_0 family: solve -Lap_h v_j = -z_j with
    z(x) = dual_gradient(-h(x)) pointwise."""
    src = _as_sources(grid, sources, coupling.n_players)
    sys = coupling_dual_system(coupling)
    z = np.empty_like(src)
    for m in range(grid.npts):
        z[:, m] = dual_gradient(sys, -src[:, m], tol=1e-12)
    v = np.stack([inv_neg_laplacian(grid, -zj) for zj in z])
    return v.ravel()


def discrete_nash_oracle(
    p: GameProblem, x0=None, tol: float = 1e-10, max_iters: int = 100
) -> GamePoint:
    """Damped Newton on the stacked stationarity system G(x) = 0.

    Independent of the flow integrator; the finite-difference Jacobian keeps
    it oracle-grade for tests.  Residual measured in the sup norm.
    """
    start = np.zeros(p.dim) if x0 is None else np.asarray(x0, dtype=float).ravel()
    x, _ = damped_newton(p.field, start, tol=tol, max_iters=max_iters)
    return p.point(x)


def _norm_fn(grid: Grid, norm: str):
    key = norm.lower()
    if key == "l2":
        return lambda u: l2_norm(grid, u)
    if key in ("h1semi", "h1"):
        return lambda u: h1_seminorm(grid, u)
    if key in ("hminus1", "hminus"):
        return lambda u: hminus_norm(grid, u)
    raise ValueError(f"unknown norm {norm!r}; expected l2, h1semi or hminus1")


def fit_decay_rate(traj, target, grid: Grid, norm: str = "l2") -> float:
    """Least-squares exponential rate of ||u(t) - target|| over the final
    half of the trajectory.

    Distances below 100x machine epsilon are excluded; fewer than 4 usable
    samples raise RateFitError.  Returns the positive decay rate lambda with
    distance ~ e^{-lambda t}.
    """
    nf = _norm_fn(grid, norm)
    tv = np.asarray(target.data if isinstance(target, GamePoint) else target,
                    dtype=float).ravel()
    layout = traj.layout
    offsets = np.concatenate([[0], np.cumsum(layout)])
    dists = np.empty(len(traj))
    for i in range(len(traj)):
        err = traj.states[i] - tv
        acc = 0.0
        for j in range(len(layout)):
            acc += nf(err[offsets[j] : offsets[j + 1]]) ** 2
        dists[i] = np.sqrt(acc)
    times = traj.times
    floor = 100.0 * np.finfo(float).eps
    keep = (times >= 0.5 * times[-1]) & (dists > floor)
    if np.count_nonzero(keep) < 4:
        raise RateFitError(
            f"only {np.count_nonzero(keep)} usable samples in the final half"
        )
    slope = np.polyfit(times[keep], np.log(dists[keep]), 1)[0]
    return float(-slope)


def write_snapshot_csv(grid: Grid, path, fields: dict) -> None:
    """One row per grid point: coordinates then the named grid functions."""
    coords = grid.points()
    names = list(fields)
    header = (["x"] if grid.dim == 1 else ["x", "y"]) + names
    cols = [np.asarray(fields[k], dtype=float).ravel() for k in names]
    for k, c in zip(names, cols):
        if c.size != grid.npts:
            raise ValueError(f"field {k!r} has {c.size} values, expected {grid.npts}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(grid.npts):
            vals = [repr(float(c[i])) for c in coords]
            vals += [repr(float(c[i])) for c in cols]
            fh.write(",".join(vals) + "\n")
