"""Built-in game constructors and the named-problem registry.

Closed-form reference data (equilibria, explicit trajectories) is attached to
the constructors where available so integrators can be validated against it.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass

import numpy as np

from .core import Box, GameProblem, Simplex, WholeSpace

__all__ = [
    "rotation_game",
    "quadratic_two_player",
    "NLinearGame",
    "n_linear_game",
    "nlinear_monotonicity_gap",
    "bilinear_zero_sum",
    "QuadraticMatrixGame",
    "quadratic_matrix_game",
    "random_monotone_quadratic_game",
    "get_problem",
    "X0_PRESETS",
    "REGISTRY_BUILTINS",
]


# ---------------------------------------------------------------------------
# two fixed two-player games with closed-form trajectories


def rotation_game() -> GameProblem:
    """Two players on [-1,1] with payoffs x1*x2 and -x1*x2.

    The gradient field (x2, -x1) is skew, so interior trajectories rotate at
    unit angular speed and the unique equilibrium is the origin; the time
    average, not the trajectory, converges.  The suggested explicit step keeps
    the Euler radius drift small over averaging horizons of a few hundred.
    """

    def grad(j, x):
        return np.array([x[1]]) if j == 0 else np.array([-x[0]])

    def value(j, x):
        return float(x[0] * x[1]) if j == 0 else float(-x[0] * x[1])

    def closed_form(t, x0):
        c, s = np.cos(t), np.sin(t)
        return np.array([x0[0] * c - x0[1] * s, x0[1] * c + x0[0] * s])

    jmat = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return GameProblem(
        layout=(1, 1),
        sets=(Box([-1.0], [1.0]), Box([-1.0], [1.0])),
        grad=grad,
        value=value,
        affine=(jmat, np.zeros(2)),
        lipschitz=1.0,
        theta=0.0,
        known_equilibrium=np.zeros(2),
        closed_form=closed_form,
        suggested_h=5e-4,
        name="rotation",
    )


def quadratic_two_player() -> GameProblem:
    """Unconstrained quadratic game with unique equilibrium (3/2, 1/2).

    Payoffs x1^2/2 - x1*x2 - x1 and x2^2/2 + x1*x2 - 2*x2; the gradient field
    is affine with identity symmetric part, so the flow spirals into the
    equilibrium at rate e^{-t}.
    """

    def grad(j, x):
        if j == 0:
            return np.array([x[0] - x[1] - 1.0])
        return np.array([x[1] + x[0] - 2.0])

    def value(j, x):
        if j == 0:
            return float(0.5 * x[0] ** 2 - x[0] * x[1] - x[0])
        return float(0.5 * x[1] ** 2 + x[0] * x[1] - 2.0 * x[1])

    eq = np.array([1.5, 0.5])

    def closed_form(t, x0):
        c, s = np.cos(t), np.sin(t)
        d1, d2 = x0[0] - eq[0], x0[1] - eq[1]
        decay = np.exp(-t)
        return np.array(
            [eq[0] + decay * (d1 * c + d2 * s), eq[1] + decay * (d2 * c - d1 * s)]
        )

    jmat = np.array([[1.0, -1.0], [1.0, 1.0]])
    bvec = np.array([-1.0, -2.0])
    return GameProblem(
        layout=(1, 1),
        sets=(WholeSpace(1), WholeSpace(1)),
        grad=grad,
        value=value,
        affine=(jmat, bvec),
        lipschitz=float(np.sqrt(2.0)),
        theta=1.0,
        known_equilibrium=eq,
        closed_form=closed_form,
        name="quadratic2",
    )


# ---------------------------------------------------------------------------
# multilinear games


@dataclass(frozen=True)
class NLinearGame:
    """A game whose payoffs are multilinear in the player blocks."""

    tensors: tuple[np.ndarray, ...]
    problem: GameProblem


def _contract(tensor: np.ndarray, blocks: list[np.ndarray], skip: int | None = None):
    letters = string.ascii_lowercase[: tensor.ndim]
    operands = [tensor]
    subs = [letters]
    out = ""
    for ax, blk in enumerate(blocks):
        if ax == skip:
            out = letters[ax]
            continue
        operands.append(blk)
        subs.append(letters[ax])
    return np.einsum(",".join(subs) + "->" + out, *operands)


def n_linear_game(tensors, sets=None) -> NLinearGame:
    """Game with payoffs f_j(x) = <T_j, x_1 (x) ... (x) x_N>.

    Defaults to probability-simplex strategy sets.  The per-player gradient is
    the tensor contracted over all other blocks, so y_j . grad_j f_j(x) equals
    f_j evaluated at (y_j, x_{-j}).
    """
    tensors = tuple(np.asarray(t, dtype=float) for t in tensors)
    n = len(tensors)
    if n < 2:
        raise ValueError("an n-linear game needs at least two players")
    dims = tensors[0].shape
    if len(dims) != n:
        raise ValueError("each tensor needs one axis per player")
    for j, t in enumerate(tensors):
        if t.shape != dims:
            raise ValueError(f"tensor {j} has shape {t.shape}, expected {dims}")
        if not np.all(np.isfinite(t)):
            raise ValueError(f"tensor {j} has non-finite entries")
    if sets is None:
        sets = tuple(Simplex(d) for d in dims)
    layout = tuple(dims)
    offsets = np.concatenate([[0], np.cumsum(layout)])

    def blocks_of(x):
        return [x[offsets[j] : offsets[j + 1]] for j in range(n)]

    def grad(j, x):
        return _contract(tensors[j], blocks_of(x), skip=j)

    def value(j, x):
        return float(_contract(tensors[j], blocks_of(x)))

    problem = GameProblem(layout=layout, sets=sets, grad=grad, value=value,
                          name="n_linear")
    return NLinearGame(tensors=tensors, problem=problem)


def nlinear_monotonicity_gap(game: NLinearGame, x, y) -> float:
    """lhs - rhs of the multilinear monotonicity test between two profiles.

    Nonnegative for every feasible pair iff the gradient field is monotone:
    sum_j [f_j(x) + f_j(y)] >= sum_j [f_j(y_j, x_{-j}) + f_j(x_j, y_{-j})].
    """
    p = game.problem
    xv = np.asarray(x, dtype=float)
    yv = np.asarray(y, dtype=float)
    lhs = 0.0
    rhs = 0.0
    for j in range(p.n_players):
        lhs += p.value(j, xv) + p.value(j, yv)
        x_swap = xv.copy()
        x_swap[p.offsets[j] : p.offsets[j + 1]] = p.block_of(yv, j)
        y_swap = yv.copy()
        y_swap[p.offsets[j] : p.offsets[j + 1]] = p.block_of(xv, j)
        rhs += p.value(j, x_swap) + p.value(j, y_swap)
    return lhs - rhs


def bilinear_zero_sum(matrix) -> NLinearGame:
    """Zero-sum game x1 . M x2 on probability simplices.

    Player 1 minimises x1 . M x2, player 2 minimises the negative.  The
    gradient field is affine and skew, hence monotone; the constructor spot
    checks that the multilinear monotonicity gap vanishes on sampled pairs.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2:
        raise ValueError("payoff matrix must be 2-d")
    if not np.all(np.isfinite(m)):
        raise ValueError("payoff matrix must be finite")
    game = n_linear_game((m, -m))
    rows, cols = m.shape
    jmat = np.zeros((rows + cols, rows + cols))
    jmat[:rows, rows:] = m
    jmat[rows:, :rows] = -m.T
    p = game.problem
    p.affine = (jmat, np.zeros(rows + cols))
    p.lipschitz = float(np.linalg.svd(m, compute_uv=False)[0]) if m.size else 0.0
    p.theta = 0.0
    p.name = "bilinear_zero_sum"

    rng = np.random.default_rng(1234)
    for _ in range(8):
        x = np.concatenate([rng.dirichlet(np.ones(rows)), rng.dirichlet(np.ones(cols))])
        y = np.concatenate([rng.dirichlet(np.ones(rows)), rng.dirichlet(np.ones(cols))])
        gap = nlinear_monotonicity_gap(game, x, y)
        if abs(gap) > 1e-10:
            raise ValueError(
                f"zero-sum construction violated the monotonicity identity: gap={gap:g}"
            )
    return game


# ---------------------------------------------------------------------------
# quadratic matrix games


@dataclass(frozen=True)
class QuadraticMatrixGame:
    """Game with payoffs f_j(x) = 1/2 sum_{k,l} x_k . A^j_{k,l} x_l."""

    n_players: int
    d: int
    blocks: np.ndarray  # shape (N, N, N, d, d); blocks[j, k, l] = A^j_{k,l}
    problem: GameProblem


def quadratic_matrix_game(blocks) -> QuadraticMatrixGame:
    """Build a quadratic matrix game, verifying symmetry and monotonicity.

    Requires each A^j_{k,l} symmetric with A^j_{k,l} = A^j_{l,k}, and the
    stacked field matrix T (T[j,k] = A^j_{j,k}) to have positive-semidefinite
    symmetric part; the smallest eigenvalue is attached as theta.
    """
    a = np.asarray(blocks, dtype=float)
    if a.ndim != 5 or a.shape[0] != a.shape[1] or a.shape[1] != a.shape[2] \
            or a.shape[3] != a.shape[4]:
        raise ValueError(f"blocks must have shape (N, N, N, d, d), got {a.shape}")
    n, d = a.shape[0], a.shape[3]
    if not np.all(np.isfinite(a)):
        raise ValueError("blocks must be finite")
    scale = max(1.0, float(np.max(np.abs(a))))
    for j in range(n):
        for k in range(n):
            for l in range(n):
                if np.max(np.abs(a[j, k, l] - a[j, k, l].T)) > 1e-12 * scale:
                    raise ValueError(f"A^{j}_{{{k},{l}}} is not symmetric")
                if np.max(np.abs(a[j, k, l] - a[j, l, k])) > 1e-12 * scale:
                    raise ValueError(f"A^{j}_{{{k},{l}}} != A^{j}_{{{l},{k}}}")
    tmat = np.zeros((n * d, n * d))
    for j in range(n):
        for k in range(n):
            tmat[j * d : (j + 1) * d, k * d : (k + 1) * d] = a[j, j, k]
    eigs = np.linalg.eigvalsh(0.5 * (tmat + tmat.T))
    if eigs[0] < -1e-10:
        raise ValueError(
            f"field matrix is not monotone: smallest eigenvalue {eigs[0]:g}"
        )
    theta = float(max(eigs[0], 0.0))

    def grad(j, x):
        xr = x.reshape(n, d)
        return np.einsum("kab,kb->a", a[j, j], xr)

    def value(j, x):
        xr = x.reshape(n, d)
        return float(0.5 * np.einsum("klab,ka,lb->", a[j], xr, xr))

    problem = GameProblem(
        layout=(d,) * n,
        sets=tuple(WholeSpace(d) for _ in range(n)),
        grad=grad,
        value=value,
        affine=(tmat, np.zeros(n * d)),
        lipschitz=float(np.linalg.norm(tmat, 2)),
        theta=theta,
        known_equilibrium=np.zeros(n * d),
        name="quadratic_matrix",
    )
    return QuadraticMatrixGame(n_players=n, d=d, blocks=a, problem=problem)


def random_monotone_quadratic_game(
    rng: np.random.Generator, n_players: int, d: int, theta: float = 0.0
) -> QuadraticMatrixGame:
    """Random monotone instance with exactly-known coercivity modulus theta.

    Draws symmetric coupling blocks, then shifts the diagonal blocks so the
    smallest eigenvalue of the symmetrised field matrix equals theta.
    """
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    n = n_players
    b = np.empty((n, n, d, d))
    for j in range(n):
        for k in range(n):
            r = rng.standard_normal((d, d))
            b[j, k] = 0.5 * (r + r.T)
    tmat = np.zeros((n * d, n * d))
    for j in range(n):
        for k in range(n):
            tmat[j * d : (j + 1) * d, k * d : (k + 1) * d] = b[j, k]
    lam_min = float(np.linalg.eigvalsh(0.5 * (tmat + tmat.T))[0])
    for j in range(n):
        b[j, j] += (theta - lam_min) * np.eye(d)
    blocks = np.zeros((n, n, n, d, d))
    for j in range(n):
        for k in range(n):
            blocks[j, j, k] = b[j, k]
            blocks[j, k, j] = b[j, k]
    return quadratic_matrix_game(blocks)


# ---------------------------------------------------------------------------
# registry

X0_PRESETS = {
    "fig1": np.array([0.8, -0.9]),
}

REGISTRY_BUILTINS = ("rotation", "quadratic2")


def _load_zero_sum(path: str) -> GameProblem:
    with open(path, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    try:
        rows, cols = int(spec["rows"]), int(spec["cols"])
        matrix = np.asarray(spec["matrix"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: zero-sum spec needs rows, cols, matrix") from exc
    if matrix.shape != (rows, cols):
        raise ValueError(
            f"{path}: matrix shape {matrix.shape} does not match ({rows}, {cols})"
        )
    return bilinear_zero_sum(matrix).problem


def _load_quadmatrix(path: str) -> GameProblem:
    with open(path, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    try:
        n, d = int(spec["players"]), int(spec["d"])
        blocks = np.asarray(spec["blocks"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: quadmatrix spec needs players, d, blocks") from exc
    if blocks.shape != (n, n, n, d, d):
        raise ValueError(
            f"{path}: blocks shape {blocks.shape} does not match "
            f"({n}, {n}, {n}, {d}, {d})"
        )
    return quadratic_matrix_game(blocks).problem


def get_problem(name: str) -> GameProblem:
    """Resolve a problem name: rotation, quadratic2, zerosum:<json>,
    quadmatrix:<json>."""
    if name == "rotation":
        return rotation_game()
    if name == "quadratic2":
        return quadratic_two_player()
    if name.startswith("zerosum:"):
        return _load_zero_sum(name.split(":", 1)[1])
    if name.startswith("quadmatrix:"):
        return _load_quadmatrix(name.split(":", 1)[1])
    raise ValueError(
        f"unknown problem {name!r}; expected rotation, quadratic2, "
        "zerosum:<file> or quadmatrix:<file>"
    )
