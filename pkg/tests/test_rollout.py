import math

import numpy as np
import pytest

from fractalscape.envs import ENV_NAMES, make_env
from fractalscape.policies import PolicySpec, init_theta, mean_action
from fractalscape.rng import substream
from fractalscape.rollout import (
    RolloutConfig,
    lemma2_residual,
    objective,
    objective_batch,
    q_value,
    rollout,
    simulate,
    tail_bound,
    values,
)

from oracles import discounted_sum, logistic_orbit

LIN = PolicySpec("linear")


def _spec_for(env, kind="tanh-net"):
    return PolicySpec(kind, n=env.state_dim, m=env.action_dim, r=4)


def test_sat1d_origin_is_fixed():
    traj = rollout(make_env("sat1d"), LIN, [1.5], RolloutConfig(horizon=10, s0=(0.0,)))
    np.testing.assert_array_equal(traj.states, 0.0)
    np.testing.assert_array_equal(traj.costs, 0.0)
    assert traj.states.shape == (11, 1) and traj.horizon == 10


def test_logistic_orbit_matches_hand_iteration():
    traj = rollout(make_env("logistic"), LIN, [3.5], RolloutConfig(horizon=3, s0=(0.9,)))
    expected = logistic_orbit(3.5, 0.9, 3)
    np.testing.assert_allclose(traj.states[:, 0], expected, rtol=0, atol=1e-15)
    assert traj.states[1, 0] == pytest.approx(0.315)
    assert traj.states[2, 0] == pytest.approx(0.7552125)


def test_logistic_costs_and_return_by_hand():
    env = make_env("logistic")
    cfg = RolloutConfig(gamma=0.7, horizon=6, s0=(0.9,))
    s = logistic_orbit(3.5, 0.9, 6)
    costs = [x * x + 0.1 * (3.5 * x) ** 2 for x in s[:6]]
    assert objective(env, LIN, [3.5], cfg) == pytest.approx(discounted_sum(costs, 0.7), rel=1e-14)


def test_pendulum_zero_net_at_upright_costs_nothing():
    env = make_env("pendulum")
    spec = _spec_for(env)
    traj = rollout(env, spec, np.zeros(spec.n_params), RolloutConfig(horizon=100, s0=(0.0, 0.0)))
    np.testing.assert_array_equal(traj.costs, 0.0)


@pytest.mark.parametrize("gamma", [0.3, 0.9, 0.99])
def test_sat1d_shifted_objective_is_geometric_sum(gamma):
    env = make_env("sat1d-shifted")
    spec = PolicySpec("uniform-example3")
    cfg = RolloutConfig(gamma=gamma, horizon=500, s0=(0.0,))
    expected = (1 - gamma**500) / (1 - gamma)
    assert objective(env, spec, [1.7, 0.0], cfg) == pytest.approx(expected, rel=1e-13)
    sto = RolloutConfig(gamma=gamma, horizon=500, s0=(0.0,), stochastic=True, n_paths=4)
    assert objective(env, spec, [1.7, 0.0], sto) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("delta", [1e-2, 1e-3, 1e-4])
def test_sat1d_worst_case_lower_bound(delta):
    theta, gamma = 1.5, 0.8
    J = objective(make_env("sat1d"), LIN, [theta], RolloutConfig(gamma=gamma, horizon=1000, s0=(delta,)))
    exponent = -math.log(gamma) / math.log(theta)
    assert exponent == pytest.approx(0.5503, abs=1e-4)
    assert J >= gamma / (1 - gamma) * delta**exponent


@pytest.mark.parametrize("name", ENV_NAMES)
def test_truncation_within_tail_bound(name):
    env = make_env(name)
    spec = PolicySpec("uniform-example3") if name == "sat1d-shifted" else _spec_for(env)
    theta = init_theta(spec, substream(3, "t"), scale=0.5)
    if name == "sat1d-shifted":
        theta = np.array([1.2, 0.3])
    j1 = objective(env, spec, theta, RolloutConfig(gamma=0.9, horizon=1000))
    j2 = objective(env, spec, theta, RolloutConfig(gamma=0.9, horizon=2000))
    assert abs(j2 - j1) <= tail_bound(env, 0.9, 1000)


def test_tail_bound_formula():
    env = make_env("sat1d")
    assert tail_bound(env, 0.5, 3) == pytest.approx(1.0 * 0.125 / 0.5)


@pytest.mark.parametrize("name", ENV_NAMES[:4])
def test_q_of_policy_action_equals_value(name):
    env = make_env(name)
    spec = PolicySpec("uniform-example3") if name == "sat1d-shifted" else _spec_for(env)
    theta = init_theta(spec, substream(4, "q"), scale=0.7)
    cfg = RolloutConfig(gamma=0.8, horizon=50)
    s = env.sample_state(np.random.default_rng(0), (5,))
    for row in s:
        a = mean_action(spec, theta, row)
        v = values(env, spec, theta, row[None], cfg)[0]
        assert q_value(env, spec, theta, row, a, cfg) == v


def test_q_value_examples():
    assert q_value(make_env("sat1d"), LIN, [1.5], [0.0], [0.0], RolloutConfig(gamma=0.9, horizon=20)) == 0.0
    env = make_env("logistic")
    cfg = RolloutConfig(gamma=0.5, horizon=5)
    # Q_T(s, a) = c(s, a) + gamma V_{T-1}(s'), so four steps from s' = 0.315
    orbit = logistic_orbit(3.5, 0.315, 4)
    v = discounted_sum([x * x + 0.1 * (3.5 * x) ** 2 for x in orbit[:4]], 0.5)
    expected = 0.9**2 + 0.1 * 3.15**2 + 0.5 * v
    assert q_value(env, LIN, [3.5], [0.9], [3.15], cfg) == pytest.approx(expected, rel=1e-13)


def test_lemma2_identical_policies_exact_zero():
    assert lemma2_residual(make_env("logistic"), LIN, [3.1], [3.1], RolloutConfig(gamma=0.9, horizon=100)) == 0.0


@pytest.mark.parametrize(
    "env_name,theta,theta_p,gamma,horizon",
    [("logistic", 2.0, 2.01, 0.5, 60), ("sat1d", 0.5, 0.6, 0.9, 400)],
)
def test_lemma2_residual_below_tail(env_name, theta, theta_p, gamma, horizon):
    env = make_env(env_name)
    r = lemma2_residual(env, LIN, [theta], [theta_p], RolloutConfig(gamma=gamma, horizon=horizon))
    assert r <= 1e-6


def test_lemma2_residual_matches_telescoping_remainder():
    env = make_env("logistic")
    cfg = RolloutConfig(gamma=0.7, horizon=25)
    r = lemma2_residual(env, LIN, [2.9], [3.2], cfg)
    s_p = rollout(env, LIN, [3.2], cfg).states
    gap = values(env, LIN, [2.9], s_p[1:25], cfg, 24) - values(env, LIN, [2.9], s_p[1:25], cfg)
    remainder = 0.7**25 * values(env, LIN, [2.9], s_p[25:], cfg, 24)[0] + np.sum(0.7 ** np.arange(1, 25) * gap)
    assert r == pytest.approx(abs(remainder), rel=1e-6)
    assert r <= 2 * env.cost_bound * 0.7**25 / 0.3


def test_batched_objective_matches_single_and_thread_count():
    env = make_env("acrobot")
    spec = PolicySpec("tanh-net-gaussian", n=4, m=1, r=8)
    thetas = np.stack([init_theta(spec, substream(0, "b", i)) for i in range(150)])
    cfg1 = RolloutConfig(gamma=0.9, horizon=200)
    cfg4 = RolloutConfig(gamma=0.9, horizon=200, threads=4)
    batch = objective_batch(env, spec, thetas, cfg1)
    np.testing.assert_array_equal(batch, objective_batch(env, spec, thetas, cfg4))
    for i in (0, 63, 64, 149):
        assert objective(env, spec, thetas[i], cfg1) == batch[i]


def test_stochastic_objective_uses_common_random_numbers():
    env = make_env("pendulum")
    spec = PolicySpec("tanh-net-gaussian", n=2, m=1, r=4)
    th = init_theta(spec, substream(1, "crn"))
    cfg = RolloutConfig(gamma=0.9, horizon=100, stochastic=True, n_paths=8)
    a = objective(env, spec, th, cfg)
    assert a == objective(env, spec, th, cfg)
    paths = [
        float(np.sum(0.9 ** np.arange(100) * rollout(env, spec, th, cfg, path_seed=k).costs)) for k in range(8)
    ]
    assert a == pytest.approx(math.fsum(paths) / 8, rel=1e-12)
    # a nearby theta sees the same noise, so the difference is small and smooth
    th2 = th.copy()
    th2[0] += 1e-9
    assert abs(objective(env, spec, th2, cfg) - a) < 1e-6
    # without common random numbers the noise changes with theta
    ind = RolloutConfig(gamma=0.9, horizon=100, stochastic=True, n_paths=8, common_random_numbers=False)
    assert abs(objective(env, spec, th2, ind) - objective(env, spec, th, ind)) > 1e-6


def test_deterministic_mode_ignores_noise():
    env = make_env("pendulum")
    spec = PolicySpec("tanh-net-gaussian", n=2, m=1, r=4)
    th = init_theta(spec, substream(2, "det"))
    det = objective(env, spec, th, RolloutConfig(horizon=80))
    plain = PolicySpec("tanh-net", n=2, m=1, r=4)
    assert det == objective(env, plain, th[:-1], RolloutConfig(horizon=80))


def test_simulate_records_shapes():
    env = make_env("acrobot")
    spec = PolicySpec("tanh-net-gaussian", n=4, m=1, r=3)
    th = init_theta(spec, substream(0, "shape"))
    noise = np.zeros((2, 7, 1))
    out = simulate(env, spec, th, np.zeros((2, 4)), 7, 0.9, noise=noise, record=True, with_scores=True)
    assert out["states"].shape == (2, 8, 4)
    assert out["actions"].shape == (2, 7, 1)
    assert out["costs"].shape == (2, 7)
    assert out["scores"].shape == (2, 7, spec.n_params)


def test_config_validation():
    with pytest.raises(ValueError):
        RolloutConfig(gamma=1.0)
    with pytest.raises(ValueError):
        RolloutConfig(horizon=0)
