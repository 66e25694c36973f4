"""Score-function (likelihood-ratio) policy gradient estimate.

Produces the direction along which loss landscapes are scanned. Costs are
minimized, so ``eta`` estimates the gradient of the expected discounted cost
and ``-eta`` is the descent direction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .envs import EnvModel
from .errors import DegenerateDensity
from .policies import PolicySpec
from .rng import master_seed
from .rollout import RolloutConfig, draw_noise, simulate


class Baseline(str, enum.Enum):
    MEAN_RETURN = "mean"
    NONE = "none"


@dataclass(frozen=True)
class GradConfig:
    n_episodes: int = 256
    gamma: float = 0.9
    horizon: int = 1000
    baseline: Baseline = Baseline.MEAN_RETURN
    seed: int = field(default_factory=master_seed)
    discount_visitation: bool = True
    s0: tuple | None = None
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "baseline", Baseline(self.baseline))
        if self.n_episodes < 1:
            raise ValueError("n_episodes must be at least 1")
        RolloutConfig(gamma=self.gamma, horizon=self.horizon)


@dataclass
class GradEstimate:
    eta: np.ndarray
    n_episodes: int
    # per-episode contributions, kept for standard errors
    per_episode: np.ndarray = field(repr=False, default=None)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.eta))

    def stderr(self) -> np.ndarray:
        return self.per_episode.std(axis=0, ddof=1) / np.sqrt(self.n_episodes)


def reward_to_go(costs, gamma: float) -> np.ndarray:
    """``G_t = sum_{k >= t} gamma^(k-t) c_k`` along the last axis."""
    costs = np.asarray(costs, dtype=float)
    out = np.empty_like(costs)
    acc = np.zeros(costs.shape[:-1])
    for t in range(costs.shape[-1] - 1, -1, -1):
        acc = costs[..., t] + gamma * acc
        out[..., t] = acc
    return out


def baseline_value(returns_to_go, kind: Baseline = Baseline.MEAN_RETURN) -> np.ndarray:
    """Per-timestep baseline from an ``(episodes, T)`` array of reward-to-go."""
    returns_to_go = np.asarray(returns_to_go, dtype=float)
    if Baseline(kind) is Baseline.NONE:
        return np.zeros(returns_to_go.shape[-1])
    return returns_to_go.mean(axis=0)


def estimate_gradient(env: EnvModel, spec: PolicySpec, theta0, cfg: GradConfig | None = None) -> GradEstimate:
    """``eta = mean_episodes sum_t gamma^t score_t (G_t - b_t)``.

    Episode ``i`` draws its action noise from substream ``("grad", i)``, so
    the estimate is a deterministic function of ``(theta0, cfg)``.
    """
    cfg = cfg or GradConfig()
    theta0 = np.asarray(theta0, dtype=float)
    if not spec.is_gaussian:
        raise DegenerateDensity("the score-function gradient needs a Gaussian policy")
    if spec.sigma(theta0) == 0.0:
        raise DegenerateDensity("sigma = 0: the score function is undefined")
    rcfg = RolloutConfig(gamma=cfg.gamma, horizon=cfg.horizon, s0=cfg.s0)
    e = cfg.n_episodes
    noise = np.stack([draw_noise(spec, cfg.seed, "grad", i, cfg.horizon) for i in range(e)])
    s0 = np.broadcast_to(rcfg.initial_state(env), (e, env.state_dim))
    out = simulate(env, spec, theta0, s0, cfg.horizon, noise=noise, record=True, with_scores=True, threads=cfg.threads)
    g = reward_to_go(out["costs"], cfg.gamma)
    adv = g - baseline_value(g, cfg.baseline)
    weight = cfg.gamma ** np.arange(cfg.horizon) if cfg.discount_visitation else np.ones(cfg.horizon)
    per_episode = np.einsum("t,et,etp->ep", weight, adv, out["scores"])
    return GradEstimate(eta=per_episode.mean(axis=0), n_episodes=e, per_episode=per_episode)
