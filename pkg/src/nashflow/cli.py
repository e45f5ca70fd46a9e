"""Command-line front end: run problems, verify audits, drive grid flows.

Exit codes for ``run``: 0 when a certified point was returned, 2 when t_max
was reached and only a best-effort point is available, 1 on errors.  All
``random:<seed>`` starting points and sources use xorshift64* (shifts
12/25/27, multiplier 2685821657736338717, high 53 bits to [0,1)) so runs
reproduce across platforms.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import pde as pdemod
from .core import feasible_profile, nash_residual, project_profile, sample_profile
from .core import check_monotonicity, max_gradient_error
from .flow import FlowConfig, SolveError, integrate, solve, write_trajectory_csv
from .problems import REGISTRY_BUILTINS, X0_PRESETS, get_problem

__all__ = ["main", "xorshift64star_doubles"]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MULT = 2685821657736338717


def xorshift64star_doubles(seed: int, count: int) -> np.ndarray:
    """Deterministic doubles in [0,1) from the stated xorshift64* generator."""
    x = seed & _MASK64
    if x == 0:
        x = _GOLDEN
    out = np.empty(count)
    for i in range(count):
        x ^= x >> 12
        x = (x ^ (x << 25)) & _MASK64
        x ^= x >> 27
        out[i] = ((x * _MULT) & _MASK64) >> 11
    return out / float(1 << 53)


def _parse_x0(p, spec: str) -> np.ndarray:
    if spec in X0_PRESETS:
        raw = np.asarray(X0_PRESETS[spec], dtype=float)
    elif spec.startswith("random:"):
        seed = int(spec.split(":", 1)[1])
        raw = 2.0 * xorshift64star_doubles(seed, p.dim) - 1.0
    else:
        try:
            raw = np.array([float(v) for v in spec.split(",")], dtype=float)
        except ValueError as exc:
            raise ValueError(
                f"cannot parse x0 {spec!r}: expected comma-separated floats, "
                f"a preset ({', '.join(sorted(X0_PRESETS))}) or random:<seed>"
            ) from exc
    if raw.size != p.dim:
        raise ValueError(f"x0 has {raw.size} coordinates, problem needs {p.dim}")
    x0 = project_profile(p, raw)
    if not feasible_profile(p, x0):
        raise ValueError("x0 remained infeasible after projection")
    return x0


def _euclidean_rate(traj, target):
    t = traj.times
    if t.size < 2 or t[-1] <= 0:
        return None
    d = np.linalg.norm(traj.states - np.asarray(target, dtype=float), axis=1)
    keep = (t >= 0.5 * t[-1]) & (d > 100 * np.finfo(float).eps)
    if np.count_nonzero(keep) < 4:
        return None
    return float(-np.polyfit(t[keep], np.log(d[keep]), 1)[0])


def _format_point(x: np.ndarray) -> str:
    if x.size <= 8:
        return "[" + ", ".join(f"{v:.6g}" for v in x) + "]"
    return f"|x|={np.linalg.norm(x):.6g} (dim {x.size})"


def cmd_run(args) -> int:
    p = get_problem(args.problem)
    x0 = _parse_x0(p, args.x0)
    cfg = FlowConfig(
        t_max=args.t_max,
        h=args.h,
        scheme=args.scheme,
        residual_tol=args.residual_tol,
        residual_gamma=args.residual_gamma,
        record_every=args.record_every,
    )
    t0 = time.perf_counter()
    try:
        res = solve(p, x0, cfg)
        point, cert, mode, traj = res.equilibrium.data, res.certificate, res.mode, res.trajectory
        status = 0
    except SolveError as exc:
        point, cert, mode, traj = exc.point.data, exc.residual, exc.mode, exc.trajectory
        status = 2
    wall_ms = (time.perf_counter() - t0) * 1000.0

    rate = None
    if p.known_equilibrium is not None:
        rate = _euclidean_rate(traj, p.known_equilibrium)
    if args.trajectory:
        write_trajectory_csv(traj, args.trajectory)
    summary = {
        "equilibrium": [float(v) for v in point],
        "certificate": float(cert),
        "mode": mode,
        "steps": int(traj.steps[-1]),
        "wall_time_ms": wall_ms,
        "fitted_rate": rate,
    }
    if args.summary:
        with open(args.summary, "w", encoding="ascii") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    print(
        f"problem={p.name} mode={mode} certificate={cert:.6e} "
        f"steps={summary['steps']} reason={traj.reason} "
        f"equilibrium={_format_point(point)}"
    )
    return status


def cmd_verify(args) -> int:
    names = list(REGISTRY_BUILTINS) if args.target == "all" else [args.target]
    rows = []
    all_pass = True
    for name in names:
        p = get_problem(name)
        rep = check_monotonicity(p, n=128, seed=0)
        rng = np.random.default_rng(0)
        pts = [sample_profile(p, rng) for _ in range(8)]
        gradcheck = max_gradient_error(p, pts) if p.value is not None else None
        cert = (
            nash_residual(p, p.known_equilibrium)
            if p.known_equilibrium is not None
            else None
        )
        ok = rep.is_monotone
        if gradcheck is not None:
            ok = ok and gradcheck <= 1e-5
        if cert is not None:
            ok = ok and cert <= 1e-8
        all_pass = all_pass and ok
        rows.append(
            (
                name,
                rep.verdict,
                f"{max(rep.min_ratio, 0.0):.4g}",
                "-" if gradcheck is None else f"{gradcheck:.3e}",
                "-" if cert is None else f"{cert:.3e}",
                "PASS" if ok else "FAIL",
            )
        )
    header = ("problem", "monotonicity", "theta_hat", "gradcheck", "certificate", "result")
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) for i in range(6)]
    for line in (header, *rows):
        print("  ".join(str(c).ljust(w) for c, w in zip(line, widths)).rstrip())
    return 0 if all_pass else 1


# ---------------------------------------------------------------------------
# pde runs from JSON specs


def _kernel_from(spec) -> pdemod.GradientKernel:
    if isinstance(spec, str):
        spec = {"type": spec}
    kind = spec.get("type", "quadratic")
    if kind == "quadratic":
        return pdemod.quadratic_kernel()
    if kind == "quartic":
        return pdemod.quartic_kernel(
            float(spec.get("delta", 0.1)), float(spec.get("radius", 2.0))
        )
    raise ValueError(f"unknown kernel type {kind!r}")


def _coupling_from(spec, n_players: int) -> pdemod.PointwiseCoupling:
    kind = spec.get("type", "zero")
    if kind == "zero":
        return pdemod.zero_coupling(n_players)
    matrix = np.asarray(spec["matrix"], dtype=float)
    if matrix.shape != (n_players, n_players):
        raise ValueError(
            f"coupling matrix shape {matrix.shape} does not match "
            f"{n_players} players"
        )
    if kind == "linear":
        return pdemod.linear_coupling(matrix)
    if kind == "saturating":
        return pdemod.saturating_coupling(matrix, float(spec.get("beta", 1.0)))
    raise ValueError(f"unknown coupling type {kind!r}")


def _lagrangian_from(spec, n_players: int) -> pdemod.GradientLagrangian:
    kind = spec.get("type", "decoupled")
    if kind == "decoupled":
        return pdemod.decoupled_lagrangian(n_players)
    if kind == "ring":
        return pdemod.ring_lagrangian(n_players, float(spec.get("eps", 0.2)))
    if kind == "anisotropic":
        return pdemod.anisotropic_lagrangian(np.asarray(spec["mats"], dtype=float))
    raise ValueError(f"unknown lagrangian type {kind!r}")


def _grid_functions(grid, spec, n_players: int, what: str) -> np.ndarray:
    kind = spec.get("type", "zero")
    scale = spec.get("scale", 1.0)
    scales = np.broadcast_to(np.asarray(scale, dtype=float), (n_players,))
    if kind == "zero":
        return np.zeros((n_players, grid.npts))
    if kind == "phi1":
        return scales[:, None] * grid.phi1()[None, :]
    if kind == "random":
        seed = int(spec.get("seed", 0))
        u = xorshift64star_doubles(seed, n_players * grid.npts)
        return scales[:, None] * (2.0 * u - 1.0).reshape(n_players, grid.npts)
    if kind == "values":
        vals = np.asarray(spec["values"], dtype=float)
        if vals.shape != (n_players, grid.npts):
            raise ValueError(
                f"{what} values shape {vals.shape} does not match "
                f"({n_players}, {grid.npts})"
            )
        return vals
    raise ValueError(f"unknown {what} type {kind!r}")


_DEFAULT_NORMS = {"l2": "l2", "grad_coupled": "l2", "hminus": "hminus1", "h1": "h1semi"}


def cmd_pde(args) -> int:
    with open(args.spec, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    family = spec.get("family", "l2")
    if family not in _DEFAULT_NORMS:
        raise ValueError(f"unknown family {family!r}")
    n_players = int(spec.get("players", 2))
    grid = pdemod.Grid(dim=int(spec.get("dim", 1)), n=int(spec["n"]))
    sources = _grid_functions(grid, spec.get("sources", {}), n_players, "sources")

    if family == "l2":
        kspec = spec.get("kernels", [{"type": "quadratic"}])
        if isinstance(kspec, (dict, str)):
            kspec = [kspec]
        if len(kspec) == 1:
            kspec = kspec * n_players
        kernels = tuple(_kernel_from(k) for k in kspec)
        coupling = _coupling_from(spec.get("coupling", {"type": "zero"}), n_players)
        problem = pdemod.discretize_l2_game(
            grid, pdemod.CouplingSpec(kernels, coupling, sources)
        )
    elif family == "grad_coupled":
        lag = _lagrangian_from(spec.get("lagrangian", {}), n_players)
        problem = pdemod.discretize_gradient_coupled_game(grid, lag, sources)
    else:
        coupling = _coupling_from(spec["coupling"], n_players)
        if family == "hminus":
            problem = pdemod.discretize_hminus_game(grid, coupling, sources)
        else:
            problem = pdemod.discretize_h1_game(grid, coupling, sources)

    if family == "hminus":
        ne = pdemod.hminus_equilibrium(grid, coupling, sources)
    elif family == "h1":
        ne = pdemod.h1_equilibrium(grid, coupling, sources)
    else:
        ne = pdemod.discrete_nash_oracle(problem).data

    x0 = _grid_functions(
        grid, spec.get("x0", {"type": "random", "seed": 1}), n_players, "x0"
    ).ravel()
    cfg = FlowConfig(
        t_max=float(spec.get("t_max", 2.0)),
        h=spec.get("h"),
        scheme=spec.get("scheme", "euler"),
        residual_tol=float(spec.get("residual_tol", 0.0)),
        record_every=spec.get("record_every"),
    )
    t0 = time.perf_counter()
    traj = integrate(problem, x0, cfg)
    wall_ms = (time.perf_counter() - t0) * 1000.0

    norm = spec.get("norm", _DEFAULT_NORMS[family])
    try:
        rate = pdemod.fit_decay_rate(traj, ne, grid, norm=norm)
    except pdemod.RateFitError:
        rate = None
    norm_fns = {
        "l2": pdemod.l2_norm,
        "h1semi": pdemod.h1_seminorm,
        "hminus1": pdemod.hminus_norm,
    }
    nf = norm_fns[norm]
    err = traj.states[-1] - ne
    npts = grid.npts
    ne_distance = float(
        np.sqrt(
            sum(
                nf(grid, err[j * npts : (j + 1) * npts]) ** 2
                for j in range(n_players)
            )
        )
    )
    summary = {
        "family": family,
        "dim": grid.dim,
        "n": grid.n,
        "lambda1": grid.lambda1,
        "fitted_rate": rate,
        "ne_distance": ne_distance,
        "certificate": float(traj.residuals[-1]),
        "steps": int(traj.steps[-1]),
        "wall_time_ms": wall_ms,
    }
    summary_path = args.summary or spec.get("summary")
    if summary_path:
        with open(summary_path, "w", encoding="ascii") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    prefix = args.snapshots or spec.get("snapshot")
    if prefix:
        final = traj.states[-1].reshape(n_players, npts)
        nem = ne.reshape(n_players, npts)
        pdemod.write_snapshot_csv(
            grid, f"{prefix}_final.csv",
            {f"u{j}": final[j] for j in range(n_players)},
        )
        pdemod.write_snapshot_csv(
            grid, f"{prefix}_equilibrium.csv",
            {f"u{j}": nem[j] for j in range(n_players)},
        )
    rate_str = "null" if rate is None else f"{rate:.6g}"
    print(
        f"family={family} n={grid.n} dim={grid.dim} lambda1={grid.lambda1:.6g} "
        f"fitted_rate={rate_str} ne_distance={ne_distance:.6e} "
        f"steps={summary['steps']}"
    )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nashflow",
        description="Approximate Nash equilibria of monotone games by "
        "integrating the associated flow.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="integrate a problem and certify a point")
    run.add_argument("--problem", required=True,
                     help="rotation | quadratic2 | zerosum:<json> | quadmatrix:<json>")
    run.add_argument("--x0", required=True,
                     help="comma-separated floats, a preset name, or random:<seed>")
    run.add_argument("--scheme", choices=("euler", "proximal"), default="euler")
    run.add_argument("--h", type=float, default=None, help="time step")
    run.add_argument("--t-max", type=float, default=10.0, dest="t_max")
    run.add_argument("--residual-tol", type=float, default=1e-3, dest="residual_tol")
    run.add_argument("--residual-gamma", type=float, default=1.0,
                     dest="residual_gamma")
    run.add_argument("--record-every", type=int, default=None, dest="record_every")
    run.add_argument("--trajectory", default=None, help="write trajectory CSV here")
    run.add_argument("--summary", default=None, help="write summary JSON here")
    run.set_defaults(func=cmd_run)

    verify = sub.add_parser("verify", help="run problem audits and print a table")
    verify.add_argument("target", help="problem name or 'all'")
    verify.set_defaults(func=cmd_verify)

    pde = sub.add_parser("pde", help="run a grid game described by a JSON spec")
    pde.add_argument("spec", help="path to the JSON problem spec")
    pde.add_argument("--summary", default=None,
                     help="write summary JSON here (overrides the spec)")
    pde.add_argument("--snapshots", default=None,
                     help="prefix for final/equilibrium snapshot CSVs")
    pde.set_defaults(func=cmd_pde)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
