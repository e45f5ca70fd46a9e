"""Flow integration for monotone games.

Integrates the system u' = -G(u) constrained to the feasible product set,
either by projected explicit Euler steps or by implicit proximal (resolvent)
steps, while maintaining a trapezoid-weighted running time average.  The
integrator certifies candidate equilibria through the natural residual of the
underlying variational inequality; when the trajectory itself circulates, the
time average is certified instead.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from ._numerics import NewtonError, damped_newton
from .core import (
    Ball,
    Box,
    FeasibilityWarning,
    GamePoint,
    GameProblem,
    Simplex,
    StepSizeWarning,
    WholeSpace,
    _residual_at,
    as_state,
    estimate_lipschitz,
    feasible_profile,
    project_profile,
)

__all__ = [
    "InnerSolveConfig",
    "FlowConfig",
    "FlowTrajectory",
    "SolveResult",
    "SolveError",
    "InnerSolveError",
    "TrajectoryFile",
    "step_explicit",
    "step_proximal",
    "integrate",
    "cesaro_mean",
    "solve",
    "contraction_audit",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "TMAX_REACHED",
    "RESIDUAL_CONVERGED",
    "TRAJECTORY_LIMIT",
    "CESARO_MEAN",
]

TMAX_REACHED = "t_max_reached"
RESIDUAL_CONVERGED = "residual_converged"
TRAJECTORY_LIMIT = "trajectory_limit"
CESARO_MEAN = "cesaro_mean"

EXTRAGRADIENT_STEP_FLOOR = 1e-8


class InnerSolveError(RuntimeError):
    """The proximal inner solver stalled; final residual in ``.residual``."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class SolveError(RuntimeError):
    """Neither the trajectory nor its mean certified within t_max.

    Carries the best point found (``.point``, a GamePoint), its residual
    (``.residual``), which candidate it was (``.mode``) and the trajectory.
    """

    def __init__(self, message, point, residual, mode, trajectory):
        super().__init__(message)
        self.point = point
        self.residual = residual
        self.mode = mode
        self.trajectory = trajectory


@dataclass
class InnerSolveConfig:
    max_iters: int = 500
    tol: float = 1e-10
    method: str = "auto"  # auto | newton | extragradient

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.method not in ("auto", "newton", "extragradient"):
            raise ValueError(f"unknown inner method {self.method!r}")


@dataclass
class FlowConfig:
    t_max: float = 10.0
    h: Optional[float] = None
    scheme: str = "euler"  # euler | proximal
    residual_tol: float = 1e-8
    residual_gamma: float = 1.0
    record_every: Optional[int] = None
    inner: InnerSolveConfig = field(default_factory=InnerSolveConfig)

    def __post_init__(self):
        if self.t_max < 0:
            raise ValueError("t_max must be nonnegative")
        if self.h is not None and self.h <= 0:
            raise ValueError("step h must be positive")
        if self.scheme not in ("euler", "proximal"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.residual_tol < 0:
            raise ValueError("residual_tol must be nonnegative")
        if self.residual_gamma <= 0:
            raise ValueError("residual_gamma must be positive")
        if self.record_every is not None and self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass
class FlowTrajectory:
    """Recorded flow states plus the full-rate running time average.

    ``cesaro`` accumulates the trapezoid rule over every executed step; it
    coincides with the trapezoid recomputation from ``states``/``times``
    exactly when every step was recorded (record_every=1).
    """

    layout: tuple[int, ...]
    times: np.ndarray
    steps: np.ndarray
    states: np.ndarray
    residuals: np.ndarray
    cesaro: GamePoint
    reason: str
    h: float
    scheme: str
    contraction_log: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.times.size

    @property
    def final(self) -> GamePoint:
        return GamePoint(self.states[-1], self.layout)

    def state(self, i: int) -> GamePoint:
        return GamePoint(self.states[i], self.layout)


# ---------------------------------------------------------------------------
# single steps


def _coerce_feasible(p: GameProblem, x, what: str) -> np.ndarray:
    xv = as_state(p, x)
    if not feasible_profile(p, xv):
        warnings.warn(
            f"{what} is infeasible; projecting onto the feasible set",
            FeasibilityWarning,
            stacklevel=3,
        )
        xv = project_profile(p, xv)
    return xv


def _step_explicit_arr(p: GameProblem, x: np.ndarray, h: float) -> np.ndarray:
    return project_profile(p, x - h * p.field(x))


def step_explicit(p: GameProblem, x, h: float) -> GamePoint:
    """One projected explicit Euler step: blockwise P_j(x_j - h*grad_j)."""
    if h < 0:
        raise ValueError("step h must be nonnegative")
    xv = _coerce_feasible(p, x, "step_explicit input")
    return p.point(_step_explicit_arr(p, xv, h))


def _proximal_arr(
    p: GameProblem,
    x: np.ndarray,
    h: float,
    inner: InnerSolveConfig,
    lipschitz_hint: Optional[float] = None,
) -> np.ndarray:
    def shifted(z):
        return z - x + h * p.field(z)

    method = inner.method
    if method == "auto":
        smooth_unconstrained = all(isinstance(s, WholeSpace) for s in p.sets)
        method = "newton" if smooth_unconstrained else "extragradient"

    if method == "newton":
        if p.affine is not None:
            jmat, bvec = p.affine
            z = np.linalg.solve(np.eye(p.dim) + h * jmat, x - h * bvec)
        else:
            try:
                z, _ = damped_newton(
                    shifted, x.copy(), tol=0.5 * inner.tol / math.sqrt(p.dim),
                    max_iters=inner.max_iters,
                )
            except NewtonError as exc:
                raise InnerSolveError(
                    f"proximal Newton solve failed: {exc}", exc.residual
                ) from exc
        res = float(np.linalg.norm(shifted(z)))
        if res > inner.tol:
            raise InnerSolveError(
                f"proximal Newton residual {res:.3e} above tol {inner.tol:g}", res
            )
        return z

    # extragradient on the shifted strongly monotone field
    lips = lipschitz_hint
    if lips is None:
        lips = p.lipschitz if p.lipschitz is not None else estimate_lipschitz(p)
    gamma = 1.0 / (1.0 + h * lips)

    def residual(z):
        return float(np.linalg.norm(z - project_profile(p, z - shifted(z))))

    z = project_profile(p, x)
    r = residual(z)
    for _ in range(inner.max_iters):
        if r <= inner.tol:
            return z
        z_half = project_profile(p, z - gamma * shifted(z))
        z_next = project_profile(p, z - gamma * shifted(z_half))
        r_next = residual(z_next)
        if r_next > r and gamma > EXTRAGRADIENT_STEP_FLOOR:
            gamma = max(0.5 * gamma, EXTRAGRADIENT_STEP_FLOOR)
            continue
        z, r = z_next, r_next
    if r <= inner.tol:
        return z
    raise InnerSolveError(
        f"proximal extragradient residual {r:.3e} above tol {inner.tol:g} "
        f"after {inner.max_iters} iterations",
        r,
    )


def step_proximal(
    p: GameProblem, x, h: float, inner: Optional[InnerSolveConfig] = None
) -> GamePoint:
    """One implicit (resolvent) step: the unique z with z + h*G(z) ~ x on X.

    Solved as the equilibrium of the shifted strongly monotone game; Newton
    when smooth and unconstrained (exact linear solve for affine fields),
    extragradient otherwise.
    """
    if h < 0:
        raise ValueError("step h must be nonnegative")
    if inner is None:
        inner = InnerSolveConfig()
    xv = _coerce_feasible(p, x, "step_proximal input")
    return p.point(_proximal_arr(p, xv, h, inner))


# ---------------------------------------------------------------------------
# integration


def _resolve_h(p: GameProblem, cfg: FlowConfig) -> float:
    if cfg.h is not None:
        return cfg.h
    if p.suggested_h is not None:
        return p.suggested_h
    lips = p.lipschitz if p.lipschitz is not None else estimate_lipschitz(p)
    if lips <= 0:
        return 1e-2
    return min(1e-2, 0.5 / lips)


def _split_steps(t_max: float, h: float) -> tuple[int, float, float]:
    """Split [0, t_max] into n_full steps of h plus one final partial step."""
    if t_max == 0.0:
        return 0, 0.0, 0.0
    q = t_max / h
    n_full = int(math.floor(q))
    if q - n_full > 1.0 - 1e-9:
        n_full += 1
        return n_full, 0.0, n_full * h
    rem = t_max - n_full * h
    if rem > 1e-12 * max(1.0, t_max):
        return n_full, rem, t_max
    return n_full, 0.0, n_full * h


def _kernel_descriptors(p: GameProblem):
    kinds = np.zeros(p.n_players, dtype=np.int32)
    box_lo = np.zeros(p.dim)
    box_hi = np.zeros(p.dim)
    ball_c = np.zeros(p.dim)
    ball_r = np.zeros(p.n_players)
    scales = np.zeros(p.n_players)
    o = p.offsets
    for j, s in enumerate(p.sets):
        if isinstance(s, WholeSpace):
            kinds[j] = _kernels.KIND_WHOLE
        elif isinstance(s, Box):
            kinds[j] = _kernels.KIND_BOX
            box_lo[o[j] : o[j + 1]] = s.lower
            box_hi[o[j] : o[j + 1]] = s.upper
        elif isinstance(s, Ball):
            kinds[j] = _kernels.KIND_BALL
            ball_c[o[j] : o[j + 1]] = s.center
            ball_r[j] = s.radius
        elif isinstance(s, Simplex):
            kinds[j] = _kernels.KIND_SIMPLEX
            scales[j] = s.scale
        else:
            return None
    offsets = np.asarray(o, dtype=np.int32)
    return kinds, offsets, box_lo, box_hi, ball_c, ball_r, scales


def integrate(p: GameProblem, x0, cfg: Optional[FlowConfig] = None) -> FlowTrajectory:
    """Integrate the constrained flow from x0 until t_max or residual_tol.

    Records every step by default (``record_every`` subsamples), always
    including the initial and final states; the natural residual is evaluated
    at each record and triggers early termination.
    """
    if cfg is None:
        cfg = FlowConfig()
    xv = _coerce_feasible(p, x0, "integrate start")
    h = _resolve_h(p, cfg)
    if (
        cfg.scheme == "euler"
        and p.lipschitz is not None
        and p.lipschitz > 0
        and h > 1.0 / p.lipschitz
    ):
        warnings.warn(
            f"explicit step h={h:g} exceeds 1/L={1.0 / p.lipschitz:g}",
            StepSizeWarning,
            stacklevel=2,
        )
    n_full, h_last, t_end = _split_steps(cfg.t_max, h)
    stride = cfg.record_every or 1

    use_kernel = cfg.scheme == "euler" and p.affine is not None
    desc = _kernel_descriptors(p) if use_kernel else None
    if desc is not None:
        jmat = np.ascontiguousarray(p.affine[0])
        bvec = np.ascontiguousarray(p.affine[1])
        out = _kernels.run_affine_euler(
            jmat, bvec, xv, h, n_full, h_last, t_end, *desc,
            stride, cfg.residual_gamma, cfg.residual_tol,
        )
        times, steps, states, residuals, cesaro, code, _ = out
    else:
        times, steps, states, residuals, cesaro, code = _generic_loop(
            p, xv, h, n_full, h_last, t_end, stride, cfg
        )
    reason = RESIDUAL_CONVERGED if code == _kernels.REASON_CONVERGED else TMAX_REACHED
    return FlowTrajectory(
        layout=p.layout,
        times=times,
        steps=steps,
        states=states,
        residuals=residuals,
        cesaro=GamePoint(cesaro, p.layout),
        reason=reason,
        h=h,
        scheme=cfg.scheme,
    )


def _generic_loop(p, xv, h, n_full, h_last, t_end, stride, cfg):
    n_total = n_full + (1 if h_last > 0 else 0)
    max_rec = n_total // stride + 3
    dim = xv.size
    times = np.zeros(max_rec)
    steps = np.zeros(max_rec, dtype=np.int64)
    states = np.zeros((max_rec, dim))
    residuals = np.zeros(max_rec)
    gamma = cfg.residual_gamma
    lips_hint = None
    if cfg.scheme == "proximal":
        lips_hint = p.lipschitz if p.lipschitz is not None else estimate_lipschitz(p)

    x = xv.copy()
    cesaro_sum = np.zeros(dim)
    m = 0

    def record(k, t):
        nonlocal m
        times[m] = t
        steps[m] = k
        states[m] = x
        residuals[m] = _residual_at(p, x, gamma)
        m += 1
        return residuals[m - 1] <= cfg.residual_tol

    if record(0, 0.0):
        return (times[:1].copy(), steps[:1].copy(), states[:1].copy(),
                residuals[:1].copy(), x.copy(), _kernels.REASON_CONVERGED)

    code = _kernels.REASON_TMAX
    t_elapsed = 0.0
    for k in range(1, n_total + 1):
        hk = h if k <= n_full else h_last
        if cfg.scheme == "euler":
            x_new = _step_explicit_arr(p, x, hk)
        else:
            x_new = _proximal_arr(p, x, hk, cfg.inner, lips_hint)
        cesaro_sum += (0.5 * hk) * (x + x_new)
        x = x_new
        t_elapsed = k * h if k <= n_full else t_end
        if k % stride == 0 or k == n_total:
            if record(k, t_elapsed):
                code = _kernels.REASON_CONVERGED
                break

    cesaro = cesaro_sum / t_elapsed if t_elapsed > 0 else xv.copy()
    return (times[:m].copy(), steps[:m].copy(), states[:m].copy(),
            residuals[:m].copy(), cesaro, code)


def cesaro_mean(traj: FlowTrajectory) -> GamePoint:
    """Trapezoid-rule time average of the recorded states over [0, t_last]."""
    if len(traj) < 2:
        raise ValueError("cesaro_mean needs at least two recorded states")
    trapezoid = getattr(np, "trapezoid", np.trapz)
    integral = trapezoid(traj.states, traj.times, axis=0)
    return GamePoint(integral / (traj.times[-1] - traj.times[0]), traj.layout)


# ---------------------------------------------------------------------------
# certified solves


@dataclass(frozen=True)
class SolveResult:
    equilibrium: GamePoint
    certificate: float
    mode: str  # trajectory_limit | cesaro_mean
    trajectory: FlowTrajectory


def solve(p: GameProblem, x0, cfg: Optional[FlowConfig] = None) -> SolveResult:
    """Integrate and certify: the trajectory limit if its residual converged,
    otherwise the feasibility-projected time average.

    Raises SolveError (carrying the best candidate) when neither point meets
    residual_tol within t_max.
    """
    if cfg is None:
        cfg = FlowConfig()
    traj = integrate(p, x0, cfg)
    final = traj.states[-1]
    cert_final = _residual_at(p, final, cfg.residual_gamma)
    if traj.reason == RESIDUAL_CONVERGED:
        return SolveResult(p.point(final), cert_final, TRAJECTORY_LIMIT, traj)
    mean = project_profile(p, traj.cesaro.data)
    cert_mean = _residual_at(p, mean, cfg.residual_gamma)
    if cert_mean <= cfg.residual_tol:
        return SolveResult(p.point(mean), cert_mean, CESARO_MEAN, traj)
    if cert_mean <= cert_final:
        best, best_cert, best_mode = mean, cert_mean, CESARO_MEAN
    else:
        best, best_cert, best_mode = final, cert_final, TRAJECTORY_LIMIT
    raise SolveError(
        f"no point reached residual_tol={cfg.residual_tol:g} by t_max={cfg.t_max:g}; "
        f"best candidate ({best_mode}) has residual {best_cert:.3e}",
        p.point(best),
        best_cert,
        best_mode,
        traj,
    )


def contraction_audit(
    p: GameProblem, x0, y0, cfg: Optional[FlowConfig] = None
) -> np.ndarray:
    """Integrate two starts in lockstep and return their distance per step.

    Defaults to proximal stepping, for which monotonicity makes the sequence
    nonincreasing (up to the inner tolerance).
    """
    if cfg is None:
        cfg = FlowConfig(scheme="proximal")
    xv = _coerce_feasible(p, x0, "contraction_audit first start")
    yv = _coerce_feasible(p, y0, "contraction_audit second start")
    h = _resolve_h(p, cfg)
    n_full, h_last, _ = _split_steps(cfg.t_max, h)
    steps = [h] * n_full + ([h_last] if h_last > 0 else [])
    lips_hint = None
    if cfg.scheme == "proximal":
        lips_hint = p.lipschitz if p.lipschitz is not None else estimate_lipschitz(p)
    distances = np.zeros(len(steps) + 1)
    distances[0] = np.linalg.norm(xv - yv)
    for k, hk in enumerate(steps, start=1):
        if cfg.scheme == "euler":
            xv = _step_explicit_arr(p, xv, hk)
            yv = _step_explicit_arr(p, yv, hk)
        else:
            xv = _proximal_arr(p, xv, hk, cfg.inner, lips_hint)
            yv = _proximal_arr(p, yv, hk, cfg.inner, lips_hint)
        distances[k] = np.linalg.norm(xv - yv)
    return distances


# ---------------------------------------------------------------------------
# trajectory files


@dataclass(frozen=True)
class TrajectoryFile:
    times: np.ndarray
    states: np.ndarray
    residuals: np.ndarray
    layout: tuple[int, ...]


def write_trajectory_csv(traj: FlowTrajectory, path) -> None:
    """Write t, per-block coordinates and residual per record.

    Floats are written with shortest round-trip formatting, so reading the
    file back reproduces every value bit-exactly.
    """
    cols = ["t"]
    for j, size in enumerate(traj.layout):
        cols += [f"b{j}.{i}" for i in range(size)]
    cols.append("residual")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(cols) + "\n")
        for t, row, r in zip(traj.times, traj.states, traj.residuals):
            vals = [repr(float(t))]
            vals += [repr(float(v)) for v in row]
            vals.append(repr(float(r)))
            fh.write(",".join(vals) + "\n")


def read_trajectory_csv(path) -> TrajectoryFile:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "t" or header[-1] != "residual":
            raise ValueError(f"{path}: not a trajectory file")
        sizes: dict[int, int] = {}
        for tok in header[1:-1]:
            blk, _, coord = tok.partition(".")
            if not blk.startswith("b"):
                raise ValueError(f"{path}: unexpected column {tok!r}")
            j = int(blk[1:])
            sizes[j] = max(sizes.get(j, 0), int(coord) + 1)
        layout = tuple(sizes[j] for j in sorted(sizes))
        rows = [
            [float(v) for v in line.strip().split(",")]
            for line in fh
            if line.strip()
        ]
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: malformed trajectory rows")
    return TrajectoryFile(
        times=data[:, 0].copy(),
        states=data[:, 1:-1].copy(),
        residuals=data[:, -1].copy(),
        layout=layout,
    )
