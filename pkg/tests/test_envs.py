import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fractalscape.envs import ENV_NAMES, make_env, wrap_angle
from fractalscape.errors import NonFiniteState


def test_logistic_step_matches_hand_arithmetic():
    env = make_env("logistic")
    # a = 3.5 * 0.9 = 3.15, s' = (1 - 0.9) * 3.15
    assert env.step([0.9], [3.15])[0] == pytest.approx(0.315, abs=1e-15)


def test_sat1d_saturates_above_one():
    env = make_env("sat1d")
    for s in (-0.7, 0.0, 0.4):
        assert env.step([s], [1.7])[0] == 1.0
    assert env.step([0.2], [-3.0])[0] == -1.0
    assert env.step([0.2], [0.25])[0] == 0.25


def test_sat1d_shifted_clips_into_unit_interval():
    env = make_env("sat1d-shifted")
    assert env.step([0.5], [-2.0])[0] == 0.0
    assert env.step([0.5], [4.0])[0] == 1.0
    assert env.step([0.5], [0.3])[0] == pytest.approx(0.3)


def test_pendulum_upright_is_a_fixed_point():
    env = make_env("pendulum")
    np.testing.assert_array_equal(env.step([0.0, 0.0], [0.0]), [0.0, 0.0])


def test_acrobot_upright_is_a_fixed_point():
    env = make_env("acrobot")
    np.testing.assert_allclose(env.step([0.0, 0.0, 0.0, 0.0], [0.0]), 0.0, atol=1e-15)


def test_costs():
    assert make_env("pendulum").cost(np.array([-1.0, 0.0]), np.array([0.0])) == pytest.approx(1.0)
    assert make_env("sat1d").cost(np.array([0.0]), np.array([7.3])) == 0.0
    assert make_env("acrobot").cost(np.array([1.0, 0, 0, 0]), np.array([2.0])) == pytest.approx(1.02)
    assert make_env("logistic").cost(np.array([0.5]), np.array([2.0])) == pytest.approx(0.25 + 0.4)
    assert make_env("sat1d-shifted").cost(np.array([0.25]), np.array([1.0])) == 1.25


def test_projection_examples():
    assert make_env("sat1d").project([1.3])[0] == 1.0
    phi = make_env("pendulum").project([3 * math.pi / 2, 0.0])[0]
    assert phi == pytest.approx(-math.pi / 2)
    assert make_env("logistic").project([0.315])[0] == 0.315


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_wrap_angle_range_and_congruence(x):
    w = wrap_angle(x)
    assert -math.pi <= w < math.pi
    k = (x - w) / (2 * math.pi)
    assert abs(k - round(k)) < 1e-6


@pytest.mark.parametrize("name", ENV_NAMES)
def test_step_stays_in_box_and_cost_is_bounded(name):
    env = make_env(name)
    rng = np.random.default_rng(0)
    s = env.sample_state(rng, (500,))
    a = env.sample_action(rng, (500,))
    a_wild = a * 5.0  # out-of-range actions are clipped first
    nxt = env.step(s, a_wild)
    assert np.all(nxt >= np.asarray(env.state_lo)) and np.all(nxt <= np.asarray(env.state_hi))
    assert np.all(env.cost(s, a) <= env.cost_bound + 1e-12)
    assert np.all(env.cost(s, a) >= 0)


@pytest.mark.parametrize("name", ENV_NAMES)
def test_lipschitz_spot_check(name):
    env = make_env(name)
    rng = np.random.default_rng(1)
    s = env.sample_state(rng, (1000,))
    a = env.sample_action(rng, (1000,))
    h = rng.standard_normal(s.shape)
    h *= 1e-6 * rng.random((1000, 1)) / np.linalg.norm(h, axis=1, keepdims=True)
    s2 = env.project(s + h)
    d_in = np.linalg.norm(s2 - s, axis=1)
    d_out = np.linalg.norm(env.step(s2, a) - env.step(s, a), axis=1)
    # pairs straddling an angle seam are far apart after wrapping; skip them
    ok = (d_in > 0) & (d_in <= 1e-6) & (d_out < 1.0)
    assert ok.sum() > 900
    assert np.all(d_out[ok] <= env.lipschitz * d_in[ok] * (1 + 1e-6))


def test_batch_step_equals_single_steps():
    env = make_env("acrobot")
    rng = np.random.default_rng(2)
    s = env.sample_state(rng, (7,))
    a = env.sample_action(rng, (7,))
    batch = env.step(s, a)
    for i in range(7):
        np.testing.assert_array_equal(env.step(s[i], a[i]), batch[i])


def test_non_finite_state_raises():
    env = make_env("pendulum")
    with pytest.raises(NonFiniteState):
        env.step([np.nan, 0.0], [0.0])


def test_unknown_env():
    with pytest.raises(ValueError):
        make_env("cartpole")


@settings(max_examples=50)
@given(st.floats(-2.0, 2.0), st.floats(-8.0, 8.0), st.floats(-5.0, 5.0))
def test_pendulum_state_always_in_box(phi, omega, a):
    out = make_env("pendulum").step([phi, omega], [a])
    assert -math.pi <= out[0] <= math.pi and -8.0 <= out[1] <= 8.0
