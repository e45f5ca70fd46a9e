"""Integration, time-average, certification, and trajectory-file tests."""
from __future__ import annotations

import numpy as np
import pytest

import oracles
from nashflow import (
    Ball,
    Box,
    FlowConfig,
    GameProblem,
    InnerSolveConfig,
    SolveError,
    WholeSpace,
    cesaro_mean,
    contraction_audit,
    integrate,
    nash_residual,
    quadratic_two_player,
    read_trajectory_csv,
    rotation_game,
    solve,
    write_trajectory_csv,
)
from nashflow.core import FeasibilityWarning, StepSizeWarning, feasible_profile
from nashflow.flow import (
    CESARO_MEAN,
    RESIDUAL_CONVERGED,
    TMAX_REACHED,
    TRAJECTORY_LIMIT,
)
from nashflow.problems import bilinear_zero_sum


# ---------------------------------------------------------------------------
# closed-form accuracy


def test_rotation_tracks_closed_form():
    p = rotation_game()
    x0 = np.array([0.6, 0.0])
    traj = integrate(p, x0, FlowConfig(t_max=2 * np.pi, h=1e-3, residual_tol=0.0))
    exact = np.stack([p.closed_form(t, x0) for t in traj.times])
    err = np.max(np.linalg.norm(traj.states - exact, axis=1))
    assert err <= 5e-3


def test_rotation_error_halves_with_h():
    p = rotation_game()
    x0 = np.array([0.6, 0.0])

    def max_err(h):
        traj = integrate(p, x0, FlowConfig(t_max=2 * np.pi, h=h, residual_tol=0.0))
        exact = np.stack([p.closed_form(t, x0) for t in traj.times])
        return np.max(np.linalg.norm(traj.states - exact, axis=1))

    ratio = max_err(2e-3) / max_err(1e-3)
    assert 1.7 <= ratio <= 2.3


def test_quadratic_tracks_closed_form():
    p = quadratic_two_player()
    x0 = np.array([0.0, 0.0])
    traj = integrate(p, x0, FlowConfig(t_max=3.0, h=1e-3, residual_tol=0.0))
    exact = np.stack([p.closed_form(t, x0) for t in traj.times])
    err = np.max(np.linalg.norm(traj.states - exact, axis=1))
    assert err <= 5e-3


def test_quadratic_distance_decays_exponentially():
    p = quadratic_two_player()
    eq = p.known_equilibrium
    traj = integrate(p, np.zeros(2), FlowConfig(t_max=5.0, h=1e-4, residual_tol=0.0))
    d0 = np.linalg.norm(eq)
    for t in (1.0, 2.0, 3.0, 4.0, 5.0):
        i = int(np.argmin(np.abs(traj.times - t)))
        d = np.linalg.norm(traj.states[i] - eq)
        assert d == pytest.approx(d0 * np.exp(-traj.times[i]), rel=1e-2)


def test_single_player_gradient_flow_rate():
    # f(x) = 0.5|x|^2: the flow is x(t) = e^{-t} x0
    p = GameProblem(layout=(3,), sets=(WholeSpace(3),), grad=lambda j, x: x,
                    lipschitz=1.0, theta=1.0)
    x0 = np.array([1.0, -2.0, 0.5])
    traj = integrate(p, x0, FlowConfig(t_max=4.0, h=1e-3, residual_tol=0.0))
    exact = np.exp(-traj.times)[:, None] * x0
    assert np.max(np.abs(traj.states - exact)) <= 5e-3


# ---------------------------------------------------------------------------
# recording and feasibility invariants


def test_records_every_step_by_default():
    traj = integrate(rotation_game(), [0.5, 0.0],
                     FlowConfig(t_max=0.1, h=1e-3, residual_tol=0.0))
    assert len(traj) == 101
    np.testing.assert_array_equal(traj.steps, np.arange(101))
    np.testing.assert_allclose(np.diff(traj.times), 1e-3, atol=1e-12)


def test_record_every_subsamples_keeping_endpoints():
    traj = integrate(rotation_game(), [0.5, 0.0],
                     FlowConfig(t_max=0.1, h=1e-3, residual_tol=0.0, record_every=7))
    assert traj.steps[0] == 0
    assert traj.steps[-1] == 100
    assert np.all(np.diff(traj.steps[:-1]) == 7)


def test_partial_final_step_hits_t_max_exactly():
    traj = integrate(rotation_game(), [0.5, 0.0],
                     FlowConfig(t_max=0.05 + 0.25e-3, h=1e-3, residual_tol=0.0))
    assert traj.times[-1] == pytest.approx(0.05 + 0.25e-3, abs=1e-15)
    assert traj.steps[-1] == 51


def test_all_records_feasible():
    cases = [
        (rotation_game(), np.array([0.8, -0.9])),
        (bilinear_zero_sum([[1.0, -1.0], [-1.0, 1.0]]).problem,
         np.array([1.0, 0.0, 0.0, 1.0])),
    ]
    for p, x0 in cases:
        traj = integrate(p, x0, FlowConfig(t_max=5.0, h=1e-2, residual_tol=0.0))
        for row in traj.states:
            assert feasible_profile(p, row, tol=1e-10)


def test_infeasible_start_is_projected_with_warning():
    p = rotation_game()
    with pytest.warns(FeasibilityWarning):
        traj = integrate(p, [3.0, 0.0], FlowConfig(t_max=0.01, h=1e-3))
    np.testing.assert_allclose(traj.states[0], [1.0, 0.0])


def test_step_size_warning_beyond_inverse_lipschitz():
    p = quadratic_two_player()  # L = sqrt(2)
    with pytest.warns(StepSizeWarning):
        integrate(p, np.zeros(2), FlowConfig(t_max=1.0, h=1.0, residual_tol=0.0))


def test_zero_t_max_returns_initial_state():
    traj = integrate(rotation_game(), [0.5, 0.0], FlowConfig(t_max=0.0))
    assert len(traj) == 1
    assert traj.reason == TMAX_REACHED
    np.testing.assert_array_equal(traj.states[0], [0.5, 0.0])


def test_early_stop_on_residual():
    p = quadratic_two_player()
    cfg = FlowConfig(t_max=50.0, h=1e-2, residual_tol=1e-6)
    traj = integrate(p, np.zeros(2), cfg)
    assert traj.reason == RESIDUAL_CONVERGED
    assert traj.times[-1] < 50.0
    assert traj.residuals[-1] <= 1e-6
    assert nash_residual(p, traj.states[-1]) <= 1e-6


def test_constant_at_equilibrium():
    p = quadratic_two_player()
    traj = integrate(p, p.known_equilibrium, FlowConfig(t_max=1.0, h=1e-2,
                                                        residual_tol=0.0))
    assert np.max(np.abs(traj.states - p.known_equilibrium)) <= 1e-12
    np.testing.assert_allclose(traj.cesaro.data, p.known_equilibrium, atol=1e-12)


# ---------------------------------------------------------------------------
# Cesàro means


def test_cesaro_accumulator_matches_trapezoid_recomputation():
    for p, x0 in ((rotation_game(), [0.6, 0.0]),
                  (quadratic_two_player(), [0.0, 0.0])):
        traj = integrate(p, x0, FlowConfig(t_max=2.0, h=1e-3, residual_tol=0.0))
        gap = np.linalg.norm(cesaro_mean(traj).data - traj.cesaro.data)
        assert gap <= 1e-12


def test_cesaro_mean_requires_two_records():
    traj = integrate(rotation_game(), [0.5, 0.0], FlowConfig(t_max=0.0))
    with pytest.raises(ValueError):
        cesaro_mean(traj)


def test_cesaro_accumulator_unaffected_by_subsampling():
    p = rotation_game()
    full = integrate(p, [0.6, 0.0], FlowConfig(t_max=1.0, h=1e-3, residual_tol=0.0))
    sub = integrate(p, [0.6, 0.0], FlowConfig(t_max=1.0, h=1e-3, residual_tol=0.0,
                                              record_every=50))
    np.testing.assert_allclose(sub.cesaro.data, full.cesaro.data, atol=1e-14)


def test_rotation_mean_over_full_period_vanishes():
    # exact integral of the closed-form sinusoids over one period is zero
    p = rotation_game()
    x0 = np.array([0.6, 0.0])
    ts = np.linspace(0.0, 2 * np.pi, 62_833)
    samples = np.stack([p.closed_form(t, x0) for t in ts])
    mean = oracles.trapezoid_mean(ts, samples)
    assert np.linalg.norm(mean) <= 1e-6


def test_rotation_mean_obeys_two_r_over_t_bound():
    p = rotation_game()
    for t_max in (25.0, 50.0):
        traj = integrate(p, [0.6, 0.0], FlowConfig(t_max=t_max, residual_tol=0.0))
        bound = 2 * 0.6 / t_max
        assert np.linalg.norm(traj.cesaro.data) <= bound + 1e-3


# ---------------------------------------------------------------------------
# solve() certification


def test_solve_returns_trajectory_limit_for_coercive_game():
    p = quadratic_two_player()
    res = solve(p, np.zeros(2), FlowConfig(t_max=30.0, h=1e-2, residual_tol=1e-6))
    assert res.mode == TRAJECTORY_LIMIT
    assert res.certificate <= 1e-6
    np.testing.assert_allclose(res.equilibrium.data, [1.5, 0.5], atol=1e-5)


def test_solve_certifies_cesaro_mean_for_rotation():
    p = rotation_game()
    res = solve(p, [0.6, 0.0], FlowConfig(t_max=500.0, residual_tol=4e-3))
    assert res.mode == CESARO_MEAN
    assert res.certificate <= 4e-3
    assert np.linalg.norm(res.equilibrium.data) <= 4e-3


def test_solve_error_carries_best_candidate():
    p = rotation_game()
    cfg = FlowConfig(t_max=10.0, residual_tol=1e-6)
    with pytest.raises(SolveError) as exc:
        solve(p, [0.6, 0.0], cfg)
    err = exc.value
    assert err.mode in (TRAJECTORY_LIMIT, CESARO_MEAN)
    assert err.residual > 1e-6
    assert err.trajectory.reason == TMAX_REACHED
    assert err.residual == pytest.approx(nash_residual(p, err.point.data), rel=1e-9)


def test_solve_error_best_is_min_of_candidates():
    p = rotation_game()
    with pytest.raises(SolveError) as exc:
        solve(p, [0.6, 0.0], FlowConfig(t_max=40.0, residual_tol=1e-8))
    err = exc.value
    traj = err.trajectory
    from nashflow.core import project_profile

    cert_final = nash_residual(p, traj.states[-1])
    cert_mean = nash_residual(p, project_profile(p, traj.cesaro.data))
    assert err.residual == pytest.approx(min(cert_final, cert_mean), rel=1e-9)


# ---------------------------------------------------------------------------
# proximal integration and contraction audits


def test_proximal_integration_tracks_flow():
    p = quadratic_two_player()
    traj = integrate(p, np.zeros(2), FlowConfig(t_max=3.0, h=1e-3,
                                                scheme="proximal",
                                                residual_tol=0.0))
    exact = np.stack([p.closed_form(t, np.zeros(2)) for t in traj.times])
    assert np.max(np.linalg.norm(traj.states - exact, axis=1)) <= 5e-3


def test_proximal_allows_large_steps():
    # implicit stepping is stable far beyond 1/L
    p = quadratic_two_player()
    traj = integrate(p, np.zeros(2), FlowConfig(t_max=200.0, h=5.0,
                                                scheme="proximal",
                                                residual_tol=0.0))
    np.testing.assert_allclose(traj.states[-1], [1.5, 0.5], atol=1e-6)


def test_contraction_audit_identical_starts():
    d = contraction_audit(rotation_game(), [0.5, 0.0], [0.5, 0.0],
                          FlowConfig(t_max=1.0, h=0.05, scheme="proximal"))
    assert np.max(d) <= 1e-9


def test_contraction_audit_rotation_nonexpansive():
    d = contraction_audit(rotation_game(), [0.8, 0.0], [-0.3, 0.4],
                          FlowConfig(t_max=2.0, h=0.05, scheme="proximal"))
    assert np.all(np.diff(d) <= 1e-9)


def test_contraction_audit_quadratic_exact_factor():
    # affine resolvent (I + h(I+K))^{-1} shrinks every vector by exactly
    # ((1+h)^2 + h^2)^{-1/2} per step, which beats the 1/(1+theta h) bound
    p = quadratic_two_player()
    h = 0.1
    d = contraction_audit(p, [1.0, 0.0], [0.0, 0.0],
                          FlowConfig(t_max=1.0, h=h, scheme="proximal"))
    factor = 1.0 / np.sqrt((1 + h) ** 2 + h ** 2)
    k = np.arange(d.size)
    np.testing.assert_allclose(d, factor ** k, rtol=1e-9)
    assert np.all(d[1:] <= d[:-1] / (1 + 1.0 * h) + 1e-12)


def test_contraction_audit_euler_scheme():
    d = contraction_audit(quadratic_two_player(), [1.0, 0.0], [0.0, 1.0],
                          FlowConfig(t_max=1.0, h=0.1, scheme="euler"))
    assert np.all(np.diff(d) <= 1e-12)  # euler factor sqrt((1-h)^2 + h^2) < 1


# ---------------------------------------------------------------------------
# trajectory files


def test_trajectory_csv_round_trip_bit_exact(tmp_path):
    p = bilinear_zero_sum([[1.0, -1.0], [-1.0, 1.0]]).problem
    traj = integrate(p, np.array([0.9, 0.1, 0.2, 0.8]),
                     FlowConfig(t_max=1.0, h=1e-2, residual_tol=0.0))
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path)
    back = read_trajectory_csv(path)
    assert back.layout == traj.layout
    np.testing.assert_array_equal(back.times, traj.times)
    np.testing.assert_array_equal(back.states, traj.states)
    np.testing.assert_array_equal(back.residuals, traj.residuals)


def test_trajectory_csv_header(tmp_path):
    traj = integrate(rotation_game(), [0.5, 0.0],
                     FlowConfig(t_max=0.01, h=1e-3, residual_tol=0.0))
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path)
    header = path.read_text().splitlines()[0]
    assert header == "t,b0.0,b1.0,residual"


def test_read_trajectory_rejects_garbage(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n1,2\n")
    with pytest.raises(ValueError):
        read_trajectory_csv(path)


# ---------------------------------------------------------------------------
# config validation


def test_flow_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(t_max=-1.0)
    with pytest.raises(ValueError):
        FlowConfig(h=0.0)
    with pytest.raises(ValueError):
        FlowConfig(scheme="rk4")
    with pytest.raises(ValueError):
        FlowConfig(residual_tol=-1e-3)
    with pytest.raises(ValueError):
        FlowConfig(residual_gamma=0.0)
    with pytest.raises(ValueError):
        FlowConfig(record_every=0)


def test_default_h_resolution():
    # explicit h wins, then the problem's suggestion, then 0.5/L capped at 1e-2
    p = rotation_game()
    traj = integrate(p, [0.1, 0.0], FlowConfig(t_max=0.01, h=2e-3))
    assert traj.h == 2e-3
    traj = integrate(p, [0.1, 0.0], FlowConfig(t_max=0.01))
    assert traj.h == p.suggested_h
    q = quadratic_two_player()
    assert q.suggested_h is None
    traj = integrate(q, np.zeros(2), FlowConfig(t_max=0.1))
    assert traj.h == pytest.approx(min(1e-2, 0.5 / np.sqrt(2)))
