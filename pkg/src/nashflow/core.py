"""Core types for N-player games on products of convex sets.

A game is described by per-player gradient oracles of the individual payoffs
together with the feasible set of each player.  Joint states are stored as a
single flat vector partitioned by a block layout.  The central diagnostic is
the natural residual ``|x - P_X(x - gamma*G(x))|`` of the associated
variational inequality, which vanishes exactly at equilibria.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

__all__ = [
    "GamePoint",
    "ConvexSet",
    "WholeSpace",
    "Box",
    "Ball",
    "Simplex",
    "HalfspaceIntersection",
    "GameProblem",
    "MonotonicityReport",
    "MONOTONE_ON_SAMPLES",
    "VIOLATED",
    "project",
    "nash_residual",
    "check_monotonicity",
    "estimate_lipschitz",
    "sample_profile",
    "default_pair_sampler",
    "max_gradient_error",
    "DimensionMismatch",
    "ProjectionError",
    "GradientError",
    "SamplerExhausted",
    "FeasibilityWarning",
    "StepSizeWarning",
]

FEASIBILITY_TOL = 1e-10


class DimensionMismatch(ValueError):
    """Vector length does not match the expected dimension."""


class ProjectionError(RuntimeError):
    """A projection routine failed to converge; carries the set description."""


class GradientError(RuntimeError):
    """A gradient oracle returned a non-finite value.

    The offending player index is stored in ``.player``.
    """

    def __init__(self, player: int, message: str):
        super().__init__(message)
        self.player = player


class SamplerExhausted(RuntimeError):
    """A finite sampler ran out of pairs before the requested count."""


class FeasibilityWarning(UserWarning):
    """An infeasible input was projected onto the feasible set."""


class StepSizeWarning(UserWarning):
    """The explicit step exceeds the stability guideline 1/L."""


def _as_vector(z, dim: Optional[int] = None) -> np.ndarray:
    v = np.asarray(z, dtype=float)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d vector, got shape {v.shape}")
    if dim is not None and v.size != dim:
        raise DimensionMismatch(f"expected length {dim}, got {v.size}")
    return v


# ---------------------------------------------------------------------------
# joint states


@dataclass(frozen=True)
class GamePoint:
    """Joint state of all players: flat data plus a block layout."""

    data: np.ndarray
    layout: tuple[int, ...]

    def __post_init__(self):
        d = np.array(self.data, dtype=float, copy=True)
        if d.ndim != 1:
            raise DimensionMismatch(f"state must be 1-d, got shape {d.shape}")
        layout = tuple(int(s) for s in self.layout)
        if any(s <= 0 for s in layout):
            raise ValueError(f"block sizes must be positive, got {layout}")
        if sum(layout) != d.size:
            raise DimensionMismatch(
                f"layout {layout} sums to {sum(layout)} but data has {d.size} entries"
            )
        if not np.all(np.isfinite(d)):
            raise ValueError("state entries must be finite")
        d.flags.writeable = False
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "layout", layout)

    @property
    def n_players(self) -> int:
        return len(self.layout)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.layout)])

    def block(self, j: int) -> np.ndarray:
        o = self.offsets
        return self.data[o[j] : o[j + 1]]

    def blocks(self) -> list[np.ndarray]:
        return [self.block(j) for j in range(self.n_players)]

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def with_data(self, data) -> "GamePoint":
        return GamePoint(np.asarray(data, dtype=float), self.layout)


# ---------------------------------------------------------------------------
# convex sets


class ConvexSet:
    """A closed convex set with an exact Euclidean projection."""

    dim: int

    def project(self, z) -> np.ndarray:
        raise NotImplementedError

    def contains(self, z, tol: float = FEASIBILITY_TOL) -> bool:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Draw a feasible point (used by the default samplers)."""
        raise NotImplementedError


class WholeSpace(ConvexSet):
    def __init__(self, dim: int):
        self.dim = int(dim)

    def project(self, z) -> np.ndarray:
        return _as_vector(z, self.dim).copy()

    def contains(self, z, tol: float = FEASIBILITY_TOL) -> bool:
        _as_vector(z, self.dim)
        return True

    def sample(self, rng) -> np.ndarray:
        return rng.standard_normal(self.dim)

    def __repr__(self):
        return f"WholeSpace({self.dim})"


class Box(ConvexSet):
    def __init__(self, lower, upper):
        self.lower = _as_vector(lower)
        self.upper = _as_vector(upper, self.lower.size)
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("box bounds must be finite")
        if np.any(self.lower > self.upper):
            raise ValueError("box requires lower <= upper componentwise")
        self.dim = self.lower.size

    def project(self, z) -> np.ndarray:
        return np.clip(_as_vector(z, self.dim), self.lower, self.upper)

    def contains(self, z, tol: float = FEASIBILITY_TOL) -> bool:
        v = _as_vector(z, self.dim)
        return bool(np.all(v >= self.lower - tol) and np.all(v <= self.upper + tol))

    def sample(self, rng) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)

    def __repr__(self):
        return f"Box({self.lower.tolist()}, {self.upper.tolist()})"


class Ball(ConvexSet):
    def __init__(self, center, radius: float):
        self.center = _as_vector(center)
        self.radius = float(radius)
        if not np.all(np.isfinite(self.center)) or not np.isfinite(self.radius):
            raise ValueError("ball parameters must be finite")
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")
        self.dim = self.center.size

    def project(self, z) -> np.ndarray:
        v = _as_vector(z, self.dim)
        d = v - self.center
        r = np.linalg.norm(d)
        if r <= self.radius:
            return v.copy()
        return self.center + d * (self.radius / r)

    def contains(self, z, tol: float = FEASIBILITY_TOL) -> bool:
        v = _as_vector(z, self.dim)
        return bool(np.linalg.norm(v - self.center) <= self.radius + tol)

    def sample(self, rng) -> np.ndarray:
        u = rng.standard_normal(self.dim)
        n = np.linalg.norm(u)
        if n == 0.0:
            return self.center.copy()
        r = self.radius * rng.uniform() ** (1.0 / self.dim)
        return self.center + u * (r / n)

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"


class Simplex(ConvexSet):
    """The scaled probability simplex {z >= 0, sum z = scale}."""

    def __init__(self, dim: int, scale: float = 1.0):
        self.dim = int(dim)
        self.scale = float(scale)
        if self.dim < 1:
            raise ValueError("simplex dimension must be >= 1")
        if self.scale <= 0:
            raise ValueError("simplex scale must be positive")

    def project(self, z) -> np.ndarray:
        v = _as_vector(z, self.dim)
        # sort-based threshold: find the largest k keeping v_(k) above the shift
        u = np.sort(v)[::-1]
        css = np.cumsum(u) - self.scale
        ks = np.arange(1, self.dim + 1)
        k = np.nonzero(u - css / ks > 0)[0][-1]
        tau = css[k] / (k + 1.0)
        return np.maximum(v - tau, 0.0)

    def contains(self, z, tol: float = FEASIBILITY_TOL) -> bool:
        v = _as_vector(z, self.dim)
        return bool(np.all(v >= -tol) and abs(v.sum() - self.scale) <= tol)

    def sample(self, rng) -> np.ndarray:
        return self.scale * rng.dirichlet(np.ones(self.dim))

    def __repr__(self):
        return f"Simplex(dim={self.dim}, scale={self.scale})"


class HalfspaceIntersection(ConvexSet):
    """Intersection of halfspaces {a_i . z <= b_i}, projected with Dykstra sweeps."""

    MAX_SWEEPS = 10_000
    MOVE_TOL = 1e-12

    def __init__(self, normals, offsets):
        a = np.asarray(normals, dtype=float)
        b = np.asarray(offsets, dtype=float)
        if a.ndim != 2:
            raise DimensionMismatch("normals must be a 2-d array (one row per halfspace)")
        if b.ndim != 1 or b.size != a.shape[0]:
            raise DimensionMismatch("offsets must have one entry per halfspace")
        norms = np.linalg.norm(a, axis=1)
        if np.any(norms == 0.0) or not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)):
            raise ValueError("halfspace normals must be finite and nonzero")
        self.normals = a / norms[:, None]
        self.offsets = b / norms
        self.dim = a.shape[1]

    def project(self, z) -> np.ndarray:
        x = _as_vector(z, self.dim).copy()
        m = self.normals.shape[0]
        corr = np.zeros((m, self.dim))
        for _ in range(self.MAX_SWEEPS):
            x_prev = x.copy()
            for i in range(m):
                y = x - corr[i]
                viol = self.normals[i] @ y - self.offsets[i]
                x = y - self.normals[i] * max(viol, 0.0)
                corr[i] = x - y
            if np.max(np.abs(x - x_prev)) < self.MOVE_TOL:
                if not self.contains(x, tol=1e-9):
                    break
                return x
        raise ProjectionError(
            f"Dykstra projection failed to converge for {self!r}; "
            "the intersection may be empty"
        )

    def contains(self, z, tol: float = FEASIBILITY_TOL) -> bool:
        v = _as_vector(z, self.dim)
        return bool(np.all(self.normals @ v <= self.offsets + tol))

    def sample(self, rng) -> np.ndarray:
        return self.project(rng.standard_normal(self.dim))

    def __repr__(self):
        return f"HalfspaceIntersection({self.normals.shape[0]} halfspaces, dim={self.dim})"


def project(set_: ConvexSet, z) -> np.ndarray:
    """Euclidean projection of z onto the set."""
    return set_.project(z)


# ---------------------------------------------------------------------------
# game problems


@dataclass
class GameProblem:
    """An N-player game given by gradient oracles over a product of convex sets.

    ``grad(j, x)`` maps the player index and the flat joint state to the block
    gradient of player j's payoff with respect to its own variables.  Optional
    ``value(j, x)`` oracles enable finite-difference consistency checks.
    ``stacked_grad`` may supply all blocks at once (used by the integrators);
    when absent, per-player calls are concatenated.
    """

    layout: tuple[int, ...]
    sets: tuple[ConvexSet, ...]
    grad: Callable[[int, np.ndarray], np.ndarray]
    value: Optional[Callable[[int, np.ndarray], float]] = None
    stacked_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lipschitz: Optional[float] = None
    theta: Optional[float] = None
    affine: Optional[tuple[np.ndarray, np.ndarray]] = None
    known_equilibrium: Optional[np.ndarray] = None
    closed_form: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    suggested_h: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        self.layout = tuple(int(s) for s in self.layout)
        self.sets = tuple(self.sets)
        if len(self.sets) != len(self.layout):
            raise DimensionMismatch("one set per player is required")
        for j, (s, size) in enumerate(zip(self.sets, self.layout)):
            if s.dim != size:
                raise DimensionMismatch(
                    f"set for player {j} has dim {s.dim}, layout says {size}"
                )
        if self.affine is not None:
            jmat = np.asarray(self.affine[0], dtype=float)
            bvec = np.asarray(self.affine[1], dtype=float)
            if jmat.shape != (self.dim, self.dim) or bvec.shape != (self.dim,):
                raise DimensionMismatch("affine data must be (dim x dim, dim)")
            self.affine = (jmat, bvec)
        if self.known_equilibrium is not None:
            self.known_equilibrium = _as_vector(self.known_equilibrium, self.dim)

    @property
    def n_players(self) -> int:
        return len(self.layout)

    @property
    def dim(self) -> int:
        return sum(self.layout)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.layout)])

    def point(self, data) -> GamePoint:
        return GamePoint(data, self.layout)

    def block_of(self, x: np.ndarray, j: int) -> np.ndarray:
        o = self.offsets
        return x[o[j] : o[j + 1]]

    def field(self, x: np.ndarray) -> np.ndarray:
        """Stacked gradient (G(x))_j = grad_j f_j(x), with finiteness checks."""
        if self.stacked_grad is not None:
            g = np.asarray(self.stacked_grad(x), dtype=float)
            if g.shape != (self.dim,):
                raise DimensionMismatch(
                    f"stacked gradient has shape {g.shape}, expected ({self.dim},)"
                )
        else:
            parts = []
            for j in range(self.n_players):
                gj = np.asarray(self.grad(j, x), dtype=float)
                if gj.shape != (self.layout[j],):
                    raise DimensionMismatch(
                        f"gradient of player {j} has shape {gj.shape}, "
                        f"expected ({self.layout[j]},)"
                    )
                parts.append(gj)
            g = np.concatenate(parts)
        if not np.all(np.isfinite(g)):
            o = self.offsets
            for j in range(self.n_players):
                if not np.all(np.isfinite(g[o[j] : o[j + 1]])):
                    raise GradientError(j, f"non-finite gradient for player {j}")
        return g


def as_state(p: GameProblem, x) -> np.ndarray:
    """Coerce a GamePoint or array-like into a flat state for problem p."""
    if isinstance(x, GamePoint):
        if x.layout != p.layout:
            raise DimensionMismatch(f"layout {x.layout} does not match {p.layout}")
        return np.array(x.data, dtype=float)
    v = _as_vector(x, p.dim).copy()
    if not np.all(np.isfinite(v)):
        raise ValueError("state entries must be finite")
    return v


def project_profile(p: GameProblem, x: np.ndarray) -> np.ndarray:
    """Blockwise projection onto the product of the players' sets."""
    return np.concatenate(
        [p.sets[j].project(p.block_of(x, j)) for j in range(p.n_players)]
    )


def feasible_profile(p: GameProblem, x: np.ndarray, tol: float = FEASIBILITY_TOL) -> bool:
    return all(p.sets[j].contains(p.block_of(x, j), tol) for j in range(p.n_players))


def _residual_at(p: GameProblem, x: np.ndarray, gamma: float) -> float:
    g = p.field(x)
    y = project_profile(p, x - gamma * g)
    return float(np.linalg.norm(x - y))


def nash_residual(p: GameProblem, x, gamma: float = 1.0) -> float:
    """Natural residual |x - P_X(x - gamma*G(x))| of the equilibrium VI.

    Zero exactly at equilibria.  Infeasible inputs are projected first and a
    FeasibilityWarning is emitted.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    xv = as_state(p, x)
    if not feasible_profile(p, xv):
        warnings.warn(
            "nash_residual called at an infeasible point; projecting first",
            FeasibilityWarning,
            stacklevel=2,
        )
        xv = project_profile(p, xv)
    return _residual_at(p, xv, gamma)


# ---------------------------------------------------------------------------
# sampling and audits


def sample_profile(p: GameProblem, rng: np.random.Generator) -> np.ndarray:
    return np.concatenate([s.sample(rng) for s in p.sets])


def default_pair_sampler(
    p: GameProblem, rng: Optional[np.random.Generator] = None
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Endless stream of feasible state pairs (uniform-in-set per block)."""
    if rng is None:
        rng = np.random.default_rng(0)
    while True:
        x = sample_profile(p, rng)
        y = sample_profile(p, rng)
        if np.linalg.norm(x - y) > 1e-12:
            yield x, y


MONOTONE_ON_SAMPLES = "monotone_on_samples"
VIOLATED = "violated"


@dataclass(frozen=True)
class MonotonicityReport:
    samples: int
    min_pairing: float
    min_ratio: float
    verdict: str
    witness: Optional[tuple[np.ndarray, np.ndarray]] = None

    @property
    def is_monotone(self) -> bool:
        return self.verdict == MONOTONE_ON_SAMPLES


def check_monotonicity(
    p: GameProblem,
    sampler: Optional[Iterable[tuple[np.ndarray, np.ndarray]]] = None,
    n: int = 64,
    tol: float = 1e-12,
    seed: int = 0,
) -> MonotonicityReport:
    """Sample the pairing sum_j (G_j(x)-G_j(y)).(x_j-y_j) over state pairs.

    The verdict is "violated" iff the minimum pairing drops below -tol; the
    witness pair is attached in that case.  min_ratio (pairing normalised by
    |x-y|^2) is a sampled lower estimate of the coercivity modulus.
    """
    if sampler is None:
        sampler = default_pair_sampler(p, np.random.default_rng(seed))
    it = iter(sampler)
    min_pairing = np.inf
    min_ratio = np.inf
    witness = None
    for i in range(n):
        try:
            x, y = next(it)
        except StopIteration:
            raise SamplerExhausted(f"pair sampler exhausted after {i} of {n} pairs") from None
        x = _as_vector(x, p.dim)
        y = _as_vector(y, p.dim)
        gap = p.field(x) - p.field(y)
        diff = x - y
        pairing = float(gap @ diff)
        ratio = pairing / float(diff @ diff)
        if pairing < min_pairing:
            min_pairing = pairing
            witness = (x.copy(), y.copy())
        min_ratio = min(min_ratio, ratio)
    verdict = VIOLATED if min_pairing < -tol else MONOTONE_ON_SAMPLES
    return MonotonicityReport(
        samples=n,
        min_pairing=min_pairing,
        min_ratio=min_ratio,
        verdict=verdict,
        witness=witness if verdict == VIOLATED else None,
    )


def estimate_lipschitz(
    p: GameProblem,
    sampler: Optional[Iterable[tuple[np.ndarray, np.ndarray]]] = None,
    n: int = 64,
    seed: int = 0,
) -> float:
    """Sampled lower estimate of the Lipschitz constant of the gradient field."""
    if sampler is None:
        sampler = default_pair_sampler(p, np.random.default_rng(seed))
    it = iter(sampler)
    best = 0.0
    for i in range(n):
        try:
            x, y = next(it)
        except StopIteration:
            raise SamplerExhausted(f"pair sampler exhausted after {i} of {n} pairs") from None
        x = _as_vector(x, p.dim)
        y = _as_vector(y, p.dim)
        num = float(np.linalg.norm(p.field(x) - p.field(y)))
        den = float(np.linalg.norm(x - y))
        if den > 0:
            best = max(best, num / den)
    return best


def max_gradient_error(
    p: GameProblem, points: Sequence, step: float = 1e-6
) -> float:
    """Worst relative gap between grad oracles and central differences of value.

    Relative to max(1, |grad block|).  Requires value oracles.
    """
    if p.value is None:
        raise ValueError("problem has no value oracles to difference")
    worst = 0.0
    o = p.offsets
    for x in points:
        xv = as_state(p, x)
        for j in range(p.n_players):
            g = np.asarray(p.grad(j, xv), dtype=float)
            fd = np.empty_like(g)
            for i in range(p.layout[j]):
                e = np.zeros(p.dim)
                e[o[j] + i] = step
                fd[i] = (p.value(j, xv + e) - p.value(j, xv - e)) / (2 * step)
            err = np.linalg.norm(fd - g) / max(1.0, np.linalg.norm(g))
            worst = max(worst, err)
    return worst
