import math
from dataclasses import dataclass, field

import numpy as np
import pytest

from fractalscape.envs import EnvModel, Pendulum, make_env
from fractalscape.errors import DegenerateDensity
from fractalscape.policies import PolicySpec, init_theta
from fractalscape.policygrad import Baseline, GradConfig, baseline_value, estimate_gradient, reward_to_go
from fractalscape.rng import DEFAULT_SEED, substream
from fractalscape.rollout import RolloutConfig, objective_batch

PEND_SPEC = PolicySpec("tanh-net-gaussian", n=2, m=1, r=8)


@dataclass(frozen=True)
class QuadraticToy(EnvModel):
    """State never moves; cost is the squared action."""

    name: str = field(init=False, default="toy")
    action_lo: tuple = field(init=False, default=(-1e6,))
    action_hi: tuple = field(init=False, default=(1e6,))
    default_s0: tuple = field(init=False, default=(1.0,))

    @property
    def cost_bound(self) -> float:
        return 1e12

    def _dynamics(self, s, a):
        return s + 0.0 * a

    def cost(self, s, a):
        return np.asarray(a, dtype=float)[..., 0] ** 2


@dataclass(frozen=True)
class ZeroCostPendulum(Pendulum):
    def cost(self, s, a):
        return np.zeros(np.shape(s)[:-1])


@dataclass(frozen=True)
class ScaledPendulum(Pendulum):
    factor: float = 4.0

    def cost(self, s, a):
        return self.factor * super().cost(s, a)


def test_zero_cost_gives_zero_gradient():
    theta = init_theta(PEND_SPEC, substream(0, "zc"))
    est = estimate_gradient(ZeroCostPendulum(), PEND_SPEC, theta, GradConfig(n_episodes=8, horizon=50))
    np.testing.assert_array_equal(est.eta, 0.0)


def test_one_step_gaussian_quadratic():
    # J(mu, log sigma) = E[(mu + sigma z)^2] = mu^2 + sigma^2: gradient (2 mu, 2 sigma^2)
    spec = PolicySpec("linear-gaussian")
    est = estimate_gradient(QuadraticToy(), spec, [1.0, 0.0], GradConfig(n_episodes=10_000, horizon=1))
    se = est.stderr()
    assert abs(est.eta[0] - 2.0) <= 3 * se[0]
    assert abs(est.eta[1] - 2.0) <= 3 * se[1]


def test_cost_scaling_is_exact_under_common_random_numbers():
    theta = init_theta(PEND_SPEC, substream(1, "scale"))
    cfg = GradConfig(n_episodes=32, horizon=120)
    base = estimate_gradient(make_env("pendulum"), PEND_SPEC, theta, cfg).eta
    scaled = estimate_gradient(ScaledPendulum(factor=4.0), PEND_SPEC, theta, cfg).eta
    np.testing.assert_array_equal(scaled, 4.0 * base)


def test_gradient_agrees_with_smoothed_finite_differences():
    env = make_env("pendulum")
    theta = init_theta(PEND_SPEC, substream(DEFAULT_SEED, "theta0"))
    eta = estimate_gradient(env, PEND_SPEC, theta, GradConfig(n_episodes=256, gamma=0.9, horizon=200)).eta
    # antithetic central difference of E[J(theta + s z)], sigma held fixed
    s = 1e-3
    z = substream(0, "fd-oracle").standard_normal((10_000, PEND_SPEC.n_params))
    z[:, -1] = 0.0
    cfg = RolloutConfig(gamma=0.9, horizon=200)
    diff = objective_batch(env, PEND_SPEC, theta + s * z, cfg) - objective_batch(env, PEND_SPEC, theta - s * z, cfg)
    g = (z * (diff / (2 * s))[:, None]).mean(axis=0)
    a, b = eta[:-1], g[:-1]
    assert a @ b / (np.linalg.norm(a) * np.linalg.norm(b)) >= 0.5


def test_gradient_is_reproducible_and_thread_independent():
    env = make_env("acrobot")
    spec = PolicySpec("tanh-net-gaussian", n=4, m=1, r=8)
    theta = init_theta(spec, substream(2, "rep"))
    one = estimate_gradient(env, spec, theta, GradConfig(n_episodes=130, horizon=60)).eta
    four = estimate_gradient(env, spec, theta, GradConfig(n_episodes=130, horizon=60, threads=4)).eta
    np.testing.assert_array_equal(one, four)


def test_discounted_visitation_flag():
    env = make_env("pendulum")
    theta = init_theta(PEND_SPEC, substream(3, "vis"))
    a = estimate_gradient(env, PEND_SPEC, theta, GradConfig(n_episodes=16, horizon=30)).per_episode
    b = estimate_gradient(env, PEND_SPEC, theta, GradConfig(n_episodes=16, horizon=30, discount_visitation=False))
    assert not np.allclose(a, b.per_episode)
    # with a single step the gamma^0 weight is 1 either way
    c = estimate_gradient(env, PEND_SPEC, theta, GradConfig(n_episodes=16, horizon=1)).eta
    d = estimate_gradient(env, PEND_SPEC, theta, GradConfig(n_episodes=16, horizon=1, discount_visitation=False)).eta
    np.testing.assert_array_equal(c, d)


def test_requires_positive_sigma():
    theta = init_theta(PEND_SPEC, substream(0, "s"))
    theta[-1] = -np.inf
    with pytest.raises(DegenerateDensity):
        estimate_gradient(make_env("pendulum"), PEND_SPEC, theta)
    with pytest.raises(DegenerateDensity):
        estimate_gradient(make_env("pendulum"), PolicySpec("tanh-net", n=2), np.zeros(24))


def test_reward_to_go_by_hand():
    g = reward_to_go(np.array([1.0, 2.0, 3.0]), 0.5)
    np.testing.assert_allclose(g, [1 + 0.5 * 2 + 0.25 * 3, 2 + 0.5 * 3, 3.0])


def test_baseline_single_episode_cancels():
    g = reward_to_go(np.array([[1.0, 4.0, 2.0]]), 0.9)
    np.testing.assert_array_equal(g - baseline_value(g), 0.0)


def test_baseline_identical_episodes_cancel():
    g = np.tile(reward_to_go(np.array([1.0, 4.0, 2.0]), 0.9), (5, 1))
    np.testing.assert_array_equal(g - baseline_value(g), 0.0)


def test_baseline_symmetric_returns():
    g = np.array([[2.5, 1.0], [-2.5, -1.0]])
    b = baseline_value(g)
    np.testing.assert_array_equal(b, 0.0)
    np.testing.assert_array_equal(g - b, g)
    np.testing.assert_array_equal(baseline_value(g, Baseline.NONE), 0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        GradConfig(n_episodes=0)
    with pytest.raises(ValueError):
        GradConfig(gamma=1.5)
    assert GradConfig(baseline="none").baseline is Baseline.NONE


def test_stderr_shape_and_scale():
    est = estimate_gradient(QuadraticToy(), PolicySpec("linear-gaussian"), [0.5, math.log(0.5)],
                            GradConfig(n_episodes=400, horizon=1))
    assert est.stderr().shape == (2,) and np.all(est.stderr() > 0)
    assert est.norm == pytest.approx(np.linalg.norm(est.eta))
