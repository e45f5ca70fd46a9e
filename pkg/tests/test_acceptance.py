"""Acceptance suite: every shipped claim, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines with measured values next to their tolerances.
"""
from __future__ import annotations

import time

import numpy as np
import pytest

import oracles
from nashflow import (
    Ball,
    Box,
    FlowConfig,
    GamePoint,
    HalfspaceIntersection,
    InnerSolveConfig,
    Simplex,
    WholeSpace,
    cesaro_mean,
    check_monotonicity,
    integrate,
    max_gradient_error,
    nash_residual,
    quadratic_two_player,
    read_trajectory_csv,
    rotation_game,
    step_proximal,
    write_trajectory_csv,
)
from nashflow.core import project_profile, sample_profile
from nashflow.flow import FlowTrajectory, TMAX_REACHED
from nashflow.legendre import DualSystem, dual_gradient, verify_dual_properties
from nashflow.pde import (
    CouplingSpec,
    Grid,
    discrete_nash_oracle,
    discretize_h1_game,
    discretize_hminus_game,
    discretize_l2_game,
    fit_decay_rate,
    h1_equilibrium,
    h1_seminorm,
    hminus_equilibrium,
    hminus_norm,
    l2_norm,
    linear_coupling,
    quadratic_kernel,
    zero_coupling,
)
from nashflow.problems import bilinear_zero_sum, random_monotone_quadratic_game


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# 1. rotation flow tracks the closed form at first order


def test_criterion_01_rotation_closed_form():
    p = rotation_game()
    x0 = np.array([0.6, 0.0])
    t_max = 4 * np.pi

    def max_err(h):
        traj = integrate(p, x0, FlowConfig(t_max=t_max, h=h, residual_tol=0.0))
        exact = np.stack([p.closed_form(t, x0) for t in traj.times])
        return float(np.max(np.linalg.norm(traj.states - exact, axis=1)))

    t0 = time.perf_counter()
    err_fine = max_err(1e-4)
    err_coarse = max_err(2e-4)
    wall = time.perf_counter() - t0
    ratio = err_coarse / err_fine
    ok = err_fine <= 2e-3 and 1.7 <= ratio <= 2.3 and wall < 5.0
    _report(
        "criterion 1 (closed-form tracking)",
        ok,
        f"max err {err_fine:.3e} <= 2e-3, halving ratio {ratio:.3f} in "
        f"[1.7, 2.3], wall {wall:.2f}s < 5s",
    )


# ---------------------------------------------------------------------------
# 2. Cesàro mean of the circling trajectory locates the equilibrium


def test_criterion_02_cesaro_mean_rotation():
    p = rotation_game()
    x0 = np.array([0.6, 0.0])
    traj = integrate(p, x0, FlowConfig(t_max=200.0, residual_tol=0.0))
    mean_norm = float(np.linalg.norm(traj.cesaro.data))
    bound = 2 * 0.6 / 200.0 + 1e-3

    # over exactly one period the sinusoid average vanishes: check the
    # library mean on the closed form sampled at the integration rate
    ts = np.linspace(0.0, 2 * np.pi, 62_833)  # spacing ~1e-4, endpoint exact
    states = np.stack([p.closed_form(t, x0) for t in ts])
    synthetic = FlowTrajectory(
        layout=p.layout,
        times=ts,
        steps=np.arange(ts.size),
        states=states,
        residuals=np.zeros(ts.size),
        cesaro=GamePoint(states[0], p.layout),
        reason=TMAX_REACHED,
        h=float(ts[1] - ts[0]),
        scheme="euler",
    )
    period_norm = float(np.linalg.norm(cesaro_mean(synthetic).data))
    ok = mean_norm <= bound and period_norm <= 1e-6
    _report(
        "criterion 2 (Cesaro certification)",
        ok,
        f"|mean(T=200)| {mean_norm:.3e} <= {bound:.3e}, "
        f"|mean over one period| {period_norm:.3e} <= 1e-6",
    )


# ---------------------------------------------------------------------------
# 3. boundary scenario: sliding along the box onto the unit circle


def test_criterion_03_boundary_scenario():
    p = rotation_game()
    traj = integrate(p, [0.8, -0.9], FlowConfig(t_max=200.0, residual_tol=0.0))
    feasible = bool(np.max(np.abs(traj.states)) <= 1.0 + 1e-10)
    radii = np.linalg.norm(traj.states, axis=1)
    late = traj.times >= 20.0
    band = float(np.max(np.abs(radii[late] - 1.0)))
    mean_dist = float(np.linalg.norm(traj.cesaro.data))
    ok = feasible and band <= 1e-2 and mean_dist <= 2e-2
    _report(
        "criterion 3 (boundary sliding)",
        ok,
        f"states feasible: {feasible}, max ||u|-1| for t>=20 {band:.3e} <= 1e-2, "
        f"|mean(200)| {mean_dist:.3e} <= 2e-2",
    )


# ---------------------------------------------------------------------------
# 4. coercive game converges exponentially at the advertised rate


def test_criterion_04_exponential_rate():
    p = quadratic_two_player()
    eq = p.known_equilibrium
    traj = integrate(p, np.zeros(2), FlowConfig(t_max=5.0, h=1e-4,
                                                residual_tol=0.0))
    d0 = float(np.linalg.norm(eq))
    worst = 0.0
    for t in (1.0, 2.0, 3.0, 4.0, 5.0):
        i = int(np.argmin(np.abs(traj.times - t)))
        d = float(np.linalg.norm(traj.states[i] - eq))
        rel = abs(d - d0 * np.exp(-traj.times[i])) / (d0 * np.exp(-traj.times[i]))
        worst = max(worst, rel)
    ok = worst <= 1e-2
    _report(
        "criterion 4 (e^{-t} decay)",
        ok,
        f"max relative deviation from e^-t over t=1..5 is {worst:.3e} <= 1e-2",
    )


# ---------------------------------------------------------------------------
# 5. resolvent steps are nonexpansive / contractive on random instances


def test_criterion_05_proximal_contraction():
    rng = np.random.default_rng(2024)
    worst_slack = 0.0
    worst_factor_violation = 0.0
    inner = InnerSolveConfig(tol=1e-11)
    for trial in range(100):
        theta = 0.0 if trial % 2 == 0 else float(rng.uniform(0.2, 2.0))
        game = random_monotone_quadratic_game(
            rng, n_players=3, d=3, theta=theta)
        p = game.problem
        x = rng.standard_normal(p.dim)
        y = rng.standard_normal(p.dim)
        h = float(rng.uniform(0.05, 1.0))
        for _ in range(12):
            xn = step_proximal(p, x, h, inner).data
            yn = step_proximal(p, y, h, inner).data
            d_new = float(np.linalg.norm(xn - yn))
            d_old = float(np.linalg.norm(x - y))
            worst_slack = max(worst_slack, d_new - d_old)
            if theta > 0:
                bound = d_old / (1.0 + theta * h)
                worst_factor_violation = max(
                    worst_factor_violation, d_new - bound)
            x, y = xn, yn
    ok = worst_slack <= 10 * inner.tol and worst_factor_violation <= 1e-6
    _report(
        "criterion 5 (resolvent contraction, 100 instances)",
        ok,
        f"max distance increase {worst_slack:.3e} <= {10 * inner.tol:g}, "
        f"max 1/(1+theta h) violation {worst_factor_violation:.3e} <= 1e-6",
    )


# ---------------------------------------------------------------------------
# 6. matching pennies: averaged flow finds the mixed equilibrium


def test_criterion_06_matching_pennies():
    m = [[1.0, -1.0], [-1.0, 1.0]]
    p = bilinear_zero_sum(m).problem
    traj = integrate(p, np.array([0.9, 0.1, 0.2, 0.8]),
                     FlowConfig(t_max=1e3, residual_tol=0.0))
    mean = project_profile(p, traj.cesaro.data)
    resid = nash_residual(p, mean)
    row, col, _ = oracles.minimax_strategies(m)
    target = np.concatenate([row, col])
    dist = float(np.linalg.norm(mean - target))
    ok = resid <= 1e-2 and dist <= 2e-2
    _report(
        "criterion 6 (matching pennies)",
        ok,
        f"mean residual {resid:.3e} <= 1e-2, distance to LP equilibrium "
        f"{dist:.3e} <= 2e-2",
    )


# ---------------------------------------------------------------------------
# 7. dual gradients of random strongly monotone systems


def test_criterion_07_dual_systems():
    rng = np.random.default_rng(7)
    worst_inverse = 0.0
    worst_hessian_slack = -np.inf
    worst_pairing = np.inf
    worst_zero = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 6))
        theta = float(rng.uniform(0.3, 2.0))
        a = rng.standard_normal((n, n))
        sym = 0.5 * (a + a.T)
        lo = np.linalg.eigvalsh(sym)[0]
        mat = sym + (theta - lo) * np.eye(n)
        skew = rng.standard_normal((n, n))
        mat = mat + 0.5 * (skew - skew.T)
        sys = DualSystem(n=n, f_grad=lambda z, m=mat: m @ z, theta=theta)
        for _ in range(25):
            y = 3.0 * rng.standard_normal(n)
            z = dual_gradient(sys, y, tol=1e-12)
            worst_inverse = max(worst_inverse,
                                float(np.max(np.abs(sys.f_grad(z) - y))))
            z0 = rng.standard_normal(n)
            back = dual_gradient(sys, sys.f_grad(z0), tol=1e-12)
            worst_inverse = max(worst_inverse, float(np.max(np.abs(back - z0))))
        rep = verify_dual_properties(sys, n=8)
        worst_hessian_slack = max(
            worst_hessian_slack, rep.max_hessian_entry - 1.0 / theta)
        worst_pairing = min(worst_pairing, rep.min_pairing)
        worst_zero = max(worst_zero, float(np.max(np.abs(
            dual_gradient(sys, np.zeros(n))))))
    ok = (worst_inverse <= 1e-8 and worst_hessian_slack <= 1e-4
          and worst_pairing >= -1e-9 and worst_zero <= 1e-10)
    _report(
        "criterion 7 (dual systems, 20 instances)",
        ok,
        f"max inverse error {worst_inverse:.3e} <= 1e-8, Hessian slack "
        f"{worst_hessian_slack:.3e} <= 1e-4, min pairing {worst_pairing:.3e} "
        f">= -1e-9, |dual_gradient(0)| {worst_zero:.3e} <= 1e-10",
    )


# ---------------------------------------------------------------------------
# 8. grid heat flow: spectral decay rate and coupled equilibria


def test_criterion_08_heat_rate_and_coupled_limit():
    g = Grid(dim=1, n=64)
    heat = discretize_l2_game(g, CouplingSpec(
        kernels=(quadratic_kernel(),),
        coupling=zero_coupling(1),
        sources=np.zeros((1, g.npts)),
    ))
    t0 = time.perf_counter()
    traj = integrate(heat, g.phi1(), FlowConfig(t_max=1.0, residual_tol=0.0))
    rate = fit_decay_rate(traj, np.zeros(g.npts), g, norm="l2")
    wall_heat = time.perf_counter() - t0
    rel = abs(rate - g.lambda1) / g.lambda1

    m = np.array([[1.0, 0.6], [-0.6, 1.0]])
    rng = np.random.default_rng(8)
    src = rng.standard_normal((2, g.npts))
    coupled = discretize_l2_game(g, CouplingSpec(
        kernels=(quadratic_kernel(), quadratic_kernel()),
        coupling=linear_coupling(m),
        sources=src,
    ))
    t0 = time.perf_counter()
    traj2 = integrate(coupled, np.zeros(coupled.dim),
                      FlowConfig(t_max=2.0, residual_tol=0.0))
    wall_coupled = time.perf_counter() - t0
    ne = discrete_nash_oracle(coupled).data
    err = traj2.states[-1] - ne
    dist = float(np.sqrt(sum(
        l2_norm(g, b) ** 2 for b in coupled.point(err).blocks())))
    ok = (rel <= 0.02 and dist <= 1e-6
          and wall_heat < 10.0 and wall_coupled < 10.0)
    _report(
        "criterion 8 (grid heat flow)",
        ok,
        f"rate {rate:.4f} vs lambda1 {g.lambda1:.4f} (rel {rel:.2%} <= 2%), "
        f"coupled flow vs oracle {dist:.3e} <= 1e-6 in L2, walls "
        f"{wall_heat:.2f}s/{wall_coupled:.2f}s < 10s",
    )


# ---------------------------------------------------------------------------
# 9. dual-construction equilibria match the integrated flow


def test_criterion_09_dual_constructions():
    g = Grid(dim=1, n=48)
    m = np.array([[1.0, 0.5], [-0.5, 1.0]])
    rng = np.random.default_rng(9)
    src = rng.standard_normal((2, g.npts))
    coupling = linear_coupling(m)

    ne_minus = hminus_equilibrium(g, coupling, src)
    p_minus = discretize_hminus_game(g, coupling, src)
    traj = integrate(p_minus, np.zeros(p_minus.dim),
                     FlowConfig(t_max=3.0, residual_tol=0.0))
    err = traj.states[-1] - ne_minus
    dist_minus = float(np.sqrt(sum(
        hminus_norm(g, b) ** 2 for b in p_minus.point(err).blocks())))

    ne_one = h1_equilibrium(g, coupling, src)
    p_one = discretize_h1_game(g, coupling, src)
    traj2 = integrate(p_one, np.zeros(p_one.dim),
                      FlowConfig(t_max=3.0, residual_tol=0.0))
    err2 = traj2.states[-1] - ne_one
    dist_one = float(np.sqrt(sum(
        h1_seminorm(g, b) ** 2 for b in p_one.point(err2).blocks())))

    ok = dist_minus <= 1e-6 and dist_one <= 1e-6
    _report(
        "criterion 9 (dual constructions vs flow)",
        ok,
        f"H^-1 family gap {dist_minus:.3e} <= 1e-6, "
        f"H^1 family gap {dist_one:.3e} <= 1e-6",
    )


# ---------------------------------------------------------------------------
# 10. property suites: projections, gradients, audits, round trips


def _projection_property_trials() -> tuple[int, float]:
    rng = np.random.default_rng(10)
    sets = [
        (Box(-np.ones(4), np.ones(4)), 4, 40_000),
        (Ball(np.array([0.5, -0.5, 0.0]), 1.3), 3, 30_000),
        (Simplex(5), 5, 20_000),
        (WholeSpace(3), 3, 5_000),
        (HalfspaceIntersection(
            np.array([[1.0, 1.0], [-1.0, 0.5], [0.0, -1.0]]),
            np.array([1.0, 1.0, 1.0])), 2, 5_000),
    ]
    total = 0
    worst = -np.inf
    for set_, dim, trials in sets:
        zs = 4.0 * rng.standard_normal((trials, dim))
        ys = np.stack([set_.sample(rng) for _ in range(64)])
        for i in range(trials):
            z = zs[i]
            pz = set_.project(z)
            assert set_.contains(pz, tol=1e-9)
            if not np.linalg.norm(set_.project(pz) - pz) <= 1e-9:
                return total, np.inf
            y = ys[i % 64]
            worst = max(worst, float((z - pz) @ (y - pz)))
            total += 1
    return total, worst


def test_criterion_10_property_suites():
    trials, worst_vi = _projection_property_trials()

    worst_grad = 0.0
    all_monotone = True
    games = [rotation_game(), quadratic_two_player(),
             bilinear_zero_sum([[1.0, -1.0], [-1.0, 1.0]]).problem]
    rng = np.random.default_rng(11)
    for p in games:
        pts = [sample_profile(p, rng) for _ in range(16)]
        worst_grad = max(worst_grad, max_gradient_error(p, pts))
        all_monotone = all_monotone and check_monotonicity(p, n=128).is_monotone

    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        traj = integrate(games[2], np.array([0.9, 0.1, 0.2, 0.8]),
                         FlowConfig(t_max=1.0, h=1e-2, residual_tol=0.0))
        path = f"{tmp}/traj.csv"
        write_trajectory_csv(traj, path)
        back = read_trajectory_csv(path)
        round_trip = (
            np.array_equal(back.times, traj.times)
            and np.array_equal(back.states, traj.states)
            and np.array_equal(back.residuals, traj.residuals)
        )

    ok = (trials == 100_000 and worst_vi <= 1e-9 and worst_grad <= 1e-5
          and all_monotone and round_trip)
    _report(
        "criterion 10 (property suites)",
        ok,
        f"{trials} projection trials (worst VI slack {worst_vi:.3e} <= 1e-9), "
        f"worst gradcheck {worst_grad:.3e} <= 1e-5, audits monotone: "
        f"{all_monotone}, CSV round trip bit-exact: {round_trip}",
    )
