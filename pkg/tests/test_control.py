import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from conftest import chain_from_matrix
from msirl.control import (RhcConfig, expected_state, expm, rhc_control, run_closed_loop,
                           save_trajectory, wall_filter)
from msirl.discretize import Environment, MarkovChain, StateSet
from msirl.dynamics import ContinuousDynamics, linearize, single_integrator
from msirl.errors import ConfigError, NumericDomainError
from msirl.pipeline import goal_well_cost


def linear_system(rng, d, du):
    A = rng.normal(size=(d, d))
    c = rng.normal(size=d)
    Gm = rng.normal(size=(d, du))
    return ContinuousDynamics(d, du, drift=lambda x: A @ x + c, input_map=lambda x: Gm,
                              sigma=float(rng.uniform(0.5, 2.0)), jacobian=lambda x: A)


@given(st.integers(1, 6), st.floats(0.01, 40.0), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_expm_matches_scipy(n, scale, seed):
    A = np.random.default_rng(seed).normal(size=(n, n))
    A *= scale / max(np.abs(A).sum(axis=1).max(), 1e-12)
    ref = sla.expm(A)
    assert np.abs(expm(A) - ref).max() <= 1e-11 * max(1.0, np.abs(ref).max())


def test_expm_special_cases():
    np.testing.assert_array_equal(expm(np.zeros((3, 3))), np.eye(3))
    assert expm(np.array([[1.0]]))[0, 0] == pytest.approx(np.e, rel=1e-15)


def test_single_integrator_reduction():
    dyn = single_integrator(1.0)
    cfg = RhcConfig(k_rhc=5, h=0.1)
    x, y = np.array([1.2, 3.4]), np.array([2.0, 2.5])
    u = rhc_control(dyn, linearize(dyn, x), x, y, cfg)
    expected = -(x - y) / cfg.tau
    for t in (0.0, 0.1, 0.49):
        assert np.abs(u(t) - expected).max() <= 1e-10


def test_no_correction_when_target_is_mean():
    rng = np.random.default_rng(0)
    dyn = linear_system(rng, 3, 2)
    x = rng.normal(size=3)
    cfg = RhcConfig(k_rhc=4, h=0.05)
    u0 = rhc_control(dyn, linearize(dyn, x), x, np.zeros(3), cfg)
    u = rhc_control(dyn, linearize(dyn, x), x, u0.mean_tau, cfg)
    assert np.abs(u(0.0)).max() <= 1e-12 and np.abs(u(0.1)).max() <= 1e-12


def test_sigma_cancels_for_single_integrator():
    x, y = np.array([0.3, 0.3]), np.array([1.0, -0.5])
    cfg = RhcConfig(k_rhc=3, h=0.1)
    u1 = rhc_control(single_integrator(1.0), linearize(single_integrator(1.0), x), x, y, cfg)
    u2 = rhc_control(single_integrator(2.0), linearize(single_integrator(2.0), x), x, y, cfg)
    assert np.abs(u1(0.0) - u2(0.0)).max() <= 1e-12


def test_linear_in_offset():
    dyn = single_integrator(1.0)
    x = np.zeros(2)
    cfg = RhcConfig(k_rhc=3, h=0.1)
    d = np.array([0.2, -0.1])
    u1 = rhc_control(dyn, linearize(dyn, x), x, d, cfg)(0.0)
    u3 = rhc_control(dyn, linearize(dyn, x), x, 3 * d, cfg)(0.0)
    np.testing.assert_allclose(u3, 3 * u1, rtol=1e-12)


def test_first_moment_matching_random_linear():
    rng = np.random.default_rng(42)
    for _ in range(20):
        d = int(rng.integers(2, 5))
        du = int(rng.integers(d, d + 2))  # full row rank keeps Sigma(tau) invertible
        dyn = linear_system(rng, d, du)
        x = rng.normal(size=d)
        y = rng.normal(size=d)
        cfg = RhcConfig(k_rhc=int(rng.integers(1, 8)), h=0.1)
        lin = linearize(dyn, x)
        u = rhc_control(dyn, lin, x, y, cfg)
        Gm = dyn.G(x)
        sol = solve_ivp(lambda t, m: lin.A @ m + lin.c + Gm @ u(t), (0, cfg.tau), x,
                        rtol=1e-12, atol=1e-12, method="DOP853")
        mu_end = sol.y[:, -1]
        assert np.linalg.norm(mu_end - y) <= 1e-6 * max(1.0, np.linalg.norm(y))


def test_degenerate_noise_rejected():
    # input enters only the first coordinate and the drift never couples it
    dyn = ContinuousDynamics(2, 1, drift=lambda x: np.zeros(2),
                             input_map=lambda x: np.array([[1.0], [0.0]]), sigma=1.0)
    x = np.zeros(2)
    with pytest.raises(NumericDomainError):
        rhc_control(dyn, linearize(dyn, x), x, np.ones(2), RhcConfig(2, 0.1))


def test_config_validation():
    with pytest.raises(ConfigError):
        RhcConfig(0, 0.1)
    assert RhcConfig(5, 0.1).tau == pytest.approx(0.5)


def test_expected_state_cases():
    chain = chain_from_matrix(np.eye(3))
    pts = chain.states.points
    np.testing.assert_array_equal(expected_state(chain, sp.identity(3), pts[1] + 0.1, 7), pts[1])
    swap = chain_from_matrix([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(expected_state(swap, swap.P, [0.0, 0.0], 2), [0.0, 0.0])
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    sq = MarkovChain(StateSet(pts, np.zeros(4, int)), sp.csr_matrix(np.full((4, 4), 0.25)), 0.1)
    np.testing.assert_allclose(expected_state(sq, sq.P, [0.1, 0.1], 1), [0.5, 0.5], atol=1e-15)


def test_expected_state_in_hull(two_room, two_room_truth):
    chain = two_room[2]
    pol = two_room_truth[1].policy
    rng = np.random.default_rng(3)
    pts = chain.states.points
    for _ in range(20):
        y = expected_state(chain, pol, rng.uniform([0, 0], [2, 1]), int(rng.integers(1, 10)))
        assert np.all(y >= pts.min(axis=0) - 1e-12) and np.all(y <= pts.max(axis=0) + 1e-12)


def test_wall_filter_blocks_penetration():
    env = Environment(bounds=(0.0, 0.0, 2.0, 1.0), walls=[[1.0, 0.0, 1.0, 1.0]])
    f = wall_filter(env)
    x_new, hit = f(np.array([0.9, 0.5]), np.array([1.1, 0.6]))
    assert hit and x_new[0] == pytest.approx(0.9) and x_new[1] == pytest.approx(0.6)
    x_new, hit = f(np.array([0.2, 0.5]), np.array([0.3, 0.6]))
    assert not hit
    assert wall_filter(None) is None


def test_closed_loop_deterministic_and_inside(two_room, two_room_truth, tmp_path):
    env, _, chain = two_room
    pol = two_room_truth[1].policy
    dyn = single_integrator(1.0)
    cfg = RhcConfig(k_rhc=5, h=0.1)
    a = run_closed_loop(dyn, chain, pol, env, [0.3, 0.5], cfg, 2.0, 0.01, seed=4)
    b = run_closed_loop(dyn, chain, pol, env, [0.3, 0.5], cfg, 2.0, 0.01, seed=4)
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.controls, b.controls)
    assert len(a) == 201
    x0, y0, x1, y1 = env.bounds
    assert np.all((a.states[:, 0] >= x0) & (a.states[:, 0] <= x1))
    assert np.all((a.states[:, 1] >= y0) & (a.states[:, 1] <= y1))
    assert not any(env.segment_blocks(p, q) for p, q in zip(a.states[:-1], a.states[1:]))
    save_trajectory(a, tmp_path / "a", {"seed": 4})
    (tmp_path / "b").mkdir()
    (tmp_path / "a").mkdir(exist_ok=True)
    save_trajectory(a, tmp_path / "a", {"seed": 4})
    save_trajectory(b, tmp_path / "b", {"seed": 4})
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()
    header = (tmp_path / "a" / "trajectory.csv").read_text().splitlines()[1]
    assert header == "t,x,y,u1,u2"


def test_noiseless_head_direction(two_room, two_room_truth):
    env, _, chain = two_room
    pol = two_room_truth[1].policy
    dyn = ContinuousDynamics(2, 2, drift=lambda x: np.zeros(2), input_map=lambda x: np.eye(2),
                             sigma=1e-4)
    cfg = RhcConfig(k_rhc=5, h=0.1)
    traj = run_closed_loop(dyn, chain, pol, None, [0.5, 0.5], cfg, 1.5, 0.01, seed=0)
    for k in range(0, 150, 50):
        x = traj.states[k]
        y = expected_state(chain, pol, x, 5)
        step = traj.states[k + 1] - x
        cos = step @ (y - x) / (np.linalg.norm(step) * np.linalg.norm(y - x))
        assert cos > 0.999


def test_policy_beats_passive_baseline(two_room, two_room_truth):
    env, states, chain = two_room
    pol = two_room_truth[1].policy
    dyn = single_integrator(1.0)
    cfg = RhcConfig(k_rhc=5, h=0.1)
    goal = np.array([1.5, 0.5])

    def cost(traj):
        return goal_well_cost(traj.states, goal, 1.0, 0.75).sum() * 0.01

    from msirl.dynamics import simulate_sde
    filt = wall_filter(env)
    ctrl, passive = [], []
    for seed in range(50):
        ctrl.append(cost(run_closed_loop(dyn, chain, pol, env, [0.3, 0.5], cfg, 2.0, 0.01, seed)))
        passive.append(cost(simulate_sde(dyn, [0.3, 0.5], lambda t, x: np.zeros(2), 2.0, 0.01,
                                         seed, step_filter=filt)))
    assert np.mean(ctrl) <= np.mean(passive)
