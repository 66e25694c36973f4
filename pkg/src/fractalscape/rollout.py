"""Trajectories and truncated discounted returns.

The workhorse is :func:`simulate`, which advances a batch of closed-loop
trajectories in lockstep. Batches are cut into fixed-size chunks before being
handed to worker threads, so the numbers never depend on the thread count.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .envs import EnvModel
from .policies import PolicyKind, PolicySpec, action_from_noise, mean_action, score_gradient
from .rng import master_seed, substream

CHUNK = 64
DEFAULT_N_PATHS = 16


@dataclass(frozen=True)
class RolloutConfig:
    gamma: float = 0.9
    horizon: int = 1000
    s0: tuple | None = None
    stochastic: bool = False
    n_paths: int = DEFAULT_N_PATHS
    seed: int = field(default_factory=master_seed)
    common_random_numbers: bool = True
    threads: int = 1

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")

    def initial_state(self, env: EnvModel) -> np.ndarray:
        s0 = env.default_s0 if self.s0 is None else self.s0
        s0 = np.asarray(s0, dtype=float).reshape(env.state_dim)
        return env.project(s0)


@dataclass
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    costs: np.ndarray
    scores: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return len(self.costs)


def tail_bound(env: EnvModel, gamma: float, horizon: int) -> float:
    """Upper bound on the discounted cost dropped by truncating at ``horizon``."""
    return env.cost_bound * gamma**horizon / (1.0 - gamma)


def _noise_kind(spec: PolicySpec):
    if spec.is_gaussian:
        return "normal"
    if spec.kind is PolicyKind.UNIFORM_EXAMPLE3:
        return "uniform"
    return None


def draw_noise(spec: PolicySpec, seed: int, purpose: str, index: int, horizon: int) -> np.ndarray:
    """Per-path action noise of shape ``(horizon, m)`` from its own substream."""
    rng = substream(seed, purpose, index)
    if _noise_kind(spec) == "uniform":
        return rng.random((horizon, spec.m))
    return rng.standard_normal((horizon, spec.m))


def _simulate_chunk(env, spec, thetas, s0, horizon, gamma, noise, record, with_scores):
    b = len(s0)
    s = s0
    if record:
        states = np.empty((b, horizon + 1, env.state_dim))
        actions = np.empty((b, horizon, spec.m))
        states[:, 0] = s
    costs = np.empty((b, horizon)) if record or gamma is not None else None
    scores = np.empty((b, horizon, spec.n_params)) if with_scores else None
    for t in range(horizon):
        if noise is None:
            a = mean_action(spec, thetas, s)
        else:
            a = action_from_noise(spec, thetas, s, noise[:, t])
        c = env.cost(s, env.clip_action(a))
        if with_scores:
            scores[:, t] = score_gradient(spec, thetas, s, a)
        if costs is not None:
            costs[:, t] = c
        s_next = env.step(s, a)
        if record:
            actions[:, t] = a
            states[:, t + 1] = s_next
        s = s_next
    out = {}
    if gamma is not None:
        # Horner from the end: V_T(s_0) = c_0 + gamma * V_{T-1}(s_1) holds bitwise
        ret = np.zeros(b)
        for t in range(horizon - 1, -1, -1):
            ret = costs[:, t] + gamma * ret
        out["returns"] = ret
    if record:
        out.update(states=states, actions=actions, costs=costs)
    if with_scores:
        out["scores"] = scores
    return out


def simulate(
    env: EnvModel,
    spec: PolicySpec,
    thetas,
    s0,
    horizon: int,
    gamma: float | None = None,
    noise=None,
    record: bool = False,
    with_scores: bool = False,
    threads: int = 1,
) -> dict[str, np.ndarray]:
    """Advance a batch of trajectories for ``horizon`` steps.

    ``thetas`` is ``(B, p)`` (or ``(p,)``, broadcast), ``s0`` is ``(B, n)``,
    ``noise`` is ``(B, horizon, m)`` or None for the deterministic policy.
    Returns discounted returns (when ``gamma`` is given) and, if ``record``,
    the full states/actions/costs arrays.
    """
    s0 = np.atleast_2d(np.asarray(s0, dtype=float))
    b = len(s0)
    thetas = np.broadcast_to(np.asarray(thetas, dtype=float), (b, spec.n_params))
    if noise is not None:
        noise = np.asarray(noise, dtype=float)
    starts = list(range(0, b, CHUNK))

    def run(i):
        sl = slice(i, i + CHUNK)
        nz = None if noise is None else noise[sl]
        return _simulate_chunk(env, spec, thetas[sl], s0[sl], horizon, gamma, nz, record, with_scores)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(i) for i in starts]
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def _path_noise(spec, theta, cfg, path_seed):
    if cfg.common_random_numbers:
        return draw_noise(spec, cfg.seed, "rollout", path_seed, cfg.horizon)
    key = zlib.crc32(np.ascontiguousarray(theta, dtype=float).tobytes())
    return draw_noise(spec, cfg.seed, f"rollout-{key}", path_seed, cfg.horizon)


def rollout(env: EnvModel, spec: PolicySpec, theta, cfg: RolloutConfig, path_seed: int = 0) -> Trajectory:
    """One trajectory of exactly ``cfg.horizon`` steps.

    Deterministic mode uses the mean action and ignores ``path_seed``. In
    stochastic mode the action noise comes from the substream keyed by
    ``(cfg.seed, path_seed)``, so with common random numbers two parameter
    vectors see the same noise realization.
    """
    theta = np.asarray(theta, dtype=float)
    stochastic = cfg.stochastic and spec.is_stochastic
    noise = _path_noise(spec, theta, cfg, path_seed)[None] if stochastic else None
    out = simulate(
        env, spec, theta[None], cfg.initial_state(env)[None], cfg.horizon,
        noise=noise, record=True, with_scores=stochastic and spec.is_gaussian,
    )
    return Trajectory(
        states=out["states"][0],
        actions=out["actions"][0],
        costs=out["costs"][0],
        scores=out["scores"][0] if "scores" in out else None,
    )


def objective_batch(env: EnvModel, spec: PolicySpec, thetas, cfg: RolloutConfig) -> np.ndarray:
    """Objective for each row of ``thetas`` (shape ``(B, p)``)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    b = len(thetas)
    s0 = cfg.initial_state(env)
    if not (cfg.stochastic and spec.is_stochastic):
        s0s = np.broadcast_to(s0, (b, env.state_dim))
        return simulate(env, spec, thetas, s0s, cfg.horizon, cfg.gamma, threads=cfg.threads)["returns"]
    n = cfg.n_paths
    noise = np.stack([
        _path_noise(spec, thetas[i], cfg, k) for i in range(b) for k in range(n)
    ])
    rep = np.repeat(thetas, n, axis=0)
    s0s = np.broadcast_to(s0, (b * n, env.state_dim))
    rets = simulate(env, spec, rep, s0s, cfg.horizon, cfg.gamma, noise=noise, threads=cfg.threads)["returns"]
    rets = rets.reshape(b, n)
    total = np.zeros(b)
    for k in range(n):
        total = total + rets[:, k]
    return total / n


def objective(env: EnvModel, spec: PolicySpec, theta, cfg: RolloutConfig) -> float:
    """Truncated discounted cost ``sum_{t<T} gamma^t c(s_t, a_t)``.

    Stochastic mode averages ``cfg.n_paths`` noise paths.
    """
    return float(objective_batch(env, spec, np.asarray(theta, dtype=float)[None], cfg)[0])


def values(env: EnvModel, spec: PolicySpec, theta, states, cfg: RolloutConfig, horizon: int | None = None) -> np.ndarray:
    """Deterministic truncated value ``V_T(s)`` for each row of ``states``.

    ``horizon`` overrides ``cfg.horizon``; a zero horizon gives zeros.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    horizon = cfg.horizon if horizon is None else horizon
    if horizon == 0:
        return np.zeros(len(states))
    return simulate(env, spec, theta, states, horizon, cfg.gamma, threads=cfg.threads)["returns"]


def q_values(env: EnvModel, spec: PolicySpec, theta, states, actions, cfg: RolloutConfig) -> np.ndarray:
    """``Q_T(s, a) = c(s, a) + gamma * V_{T-1}(f(s, a))``, the same T-step truncation as V."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    actions = np.asarray(actions, dtype=float).reshape(len(states), spec.m)
    c = env.cost(states, env.clip_action(actions))
    nxt = env.step(states, actions)
    return c + cfg.gamma * values(env, spec, theta, nxt, cfg, cfg.horizon - 1)


def q_value(env: EnvModel, spec: PolicySpec, theta, s, a, cfg: RolloutConfig) -> float:
    """``c(s, a) + gamma * V_{T-1}(f(s, a))``; equals ``V_T(s)`` when ``a`` is the policy action."""
    return float(q_values(env, spec, theta, np.asarray(s, dtype=float)[None], a, cfg)[0])


def lemma2_residual(env: EnvModel, spec: PolicySpec, theta, theta_p, cfg: RolloutConfig) -> float:
    """``|(V'(s0) - V(s0)) - sum_t gamma^t (Q(s'_t, a'_t) - V(s'_t))|``.

    ``s'_t, a'_t`` follow ``theta_p``; Q and V belong to ``theta``, all
    truncated at T steps. The telescoping sum then leaves
    ``gamma^T V_{T-1}(s'_T) + sum_t gamma^t (V_{T-1} - V_T)(s'_t)``, at most
    ``2 M2 gamma^T / (1 - gamma)`` in size, and exactly 0 when the policies
    coincide.
    """
    det = replace(cfg, stochastic=False)
    traj = rollout(env, spec, theta_p, det)
    s_p = traj.states[:-1]
    v = values(env, spec, theta, s_p, det)
    q = q_values(env, spec, theta, s_p, traj.actions, det)
    disc = det.gamma ** np.arange(det.horizon)
    rhs = 0.0
    for t in range(det.horizon):
        rhs += disc[t] * (q[t] - v[t])
    lhs = objective(env, spec, theta_p, det) - objective(env, spec, theta, det)
    return abs(lhs - rhs)
