"""Maximal Lyapunov exponent of a closed-loop system (Benettin scheme).

A reference trajectory and a perturbed copy are advanced under the same
policy. Whenever their separation leaves ``[renorm_floor, renorm_threshold)``
or a window reaches ``renorm_every`` steps, the log-stretch of the window is
accumulated and the perturbed state is pulled back to distance ``d0`` along
the current separation. Several random initial directions run side by side
and the largest exponent is reported.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .envs import EnvModel, wrap_angle
from .errors import ZeroSeparation
from .policies import PolicySpec, action_from_noise, mean_action
from .rng import master_seed, substream

__all__ = [
    "MleConfig",
    "MleEstimate",
    "estimate_mle",
    "estimate_mle_stochastic",
    "mle_sweep",
    "exceeds_discount_threshold",
]


@dataclass(frozen=True)
class MleConfig:
    d0: float = 1e-8
    renorm_threshold: float = 1e-4
    renorm_floor: float = 1e-12
    renorm_every: int = 50
    t_max: int = 10_000
    transient_skip: int = 100
    n_paths: int = 64
    n_restarts: int = 8
    direction: tuple | None = None
    seed: int = field(default_factory=master_seed)

    def __post_init__(self):
        if not 0 < self.renorm_floor < self.d0 < self.renorm_threshold:
            raise ValueError("need 0 < renorm_floor < d0 < renorm_threshold")
        if self.t_max <= self.transient_skip:
            raise ValueError("t_max must exceed transient_skip")
        if self.n_restarts < 1 or self.n_paths < 1:
            raise ValueError("n_restarts and n_paths must be positive")


@dataclass
class MleEstimate:
    lambda_: float
    window_logs: list[float]
    n_renorms: int
    steps: int
    censored: bool = False
    restart_lambdas: list[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "lambda": self.lambda_,
            "n_renorms": self.n_renorms,
            "steps": self.steps,
            "censored": self.censored,
            "restart_lambdas": self.restart_lambdas,
        }


def exceeds_discount_threshold(lam: float, gamma: float) -> dict:
    """Whether ``lambda > -log(gamma)``, the regime where smoothness can fail."""
    thr = -math.log(gamma)
    return {"lambda": lam, "neg_log_gamma": thr, "exceeds": bool(lam > thr)}


def _displacement(env: EnvModel, a, b):
    d = a - b
    for i in env.angle_coords:
        d[..., i] = wrap_angle(d[..., i])
    return d


def _norm(v):
    return np.sqrt(np.sum(v * v, axis=-1))


def _directions(env: EnvModel, cfg: MleConfig) -> np.ndarray:
    if cfg.direction is not None:
        v = np.asarray(cfg.direction, dtype=float).reshape(1, env.state_dim)
        return v / np.linalg.norm(v)
    dirs = []
    for k in range(cfg.n_restarts):
        v = substream(cfg.seed, "mle-direction", k).standard_normal(env.state_dim)
        dirs.append(v / np.linalg.norm(v))
    return np.array(dirs)


class _Benettin:
    """Window bookkeeping for R restarts advancing in lockstep."""

    def __init__(self, cfg: MleConfig, n: int):
        self.cfg = cfg
        self.active = np.ones(n, bool)
        self.censored = np.zeros(n, bool)
        self.log_sum = np.zeros(n)
        self.steps = np.zeros(n, int)
        self.win_steps = np.zeros(n, int)
        self.d_prev = np.full(n, cfg.d0)
        self.d_last = np.full(n, cfg.d0)
        self.windows: list[list[float]] = [[] for _ in range(n)]

    def _close(self, i, d, steps):
        if steps > 0:
            w = math.log(d / self.d_prev[i])
            self.windows[i].append(w)
            self.log_sum[i] += w
            self.steps[i] += steps

    def start(self, d):
        """Register initial separations; a zero one censors its restart."""
        zero = d == 0.0
        self.censored |= zero
        self.active &= ~zero
        self.d_prev = np.where(zero, self.cfg.d0, d)
        self.d_last = self.d_prev.copy()

    def update(self, d) -> np.ndarray:
        """Process one step of separations; return mask of restarts to rescale."""
        cfg = self.cfg
        self.win_steps += self.active
        zero = self.active & (d == 0.0)
        if zero.any():
            for i in np.flatnonzero(zero):
                # merged: keep the stretch accumulated up to the last nonzero step
                self._close(i, self.d_last[i], self.win_steps[i] - 1)
            self.active &= ~zero
            self.censored |= zero
        rescale = self.active & (
            (d >= cfg.renorm_threshold) | (d < cfg.renorm_floor) | (self.win_steps >= cfg.renorm_every)
        )
        if rescale.any():
            for i in np.flatnonzero(rescale):
                self._close(i, d[i], self.win_steps[i])
            self.win_steps[rescale] = 0
        self.d_last = np.where(self.active, d, self.d_last)
        return rescale

    def restart_from(self, rescale, d_new):
        zero = rescale & (d_new == 0.0)
        self.censored |= zero
        self.active &= ~zero
        self.d_prev = np.where(rescale & ~zero, d_new, self.d_prev)
        self.d_last = np.where(rescale & ~zero, d_new, self.d_last)

    def finish(self, d, n_groups: int = 1) -> list[MleEstimate]:
        """Close open windows; report the best restart of each group of rows."""
        for i in np.flatnonzero(self.active & (self.win_steps > 0)):
            self._close(i, d[i], self.win_steps[i])
        lams = np.array([
            self.log_sum[i] / self.steps[i] if self.steps[i] > 0 else -math.inf
            for i in range(len(self.steps))
        ])
        per = len(lams) // n_groups
        out = []
        for g in range(n_groups):
            rows = slice(g * per, (g + 1) * per)
            best = g * per + int(np.argmax(lams[rows]))
            if self.censored[best]:
                warnings.warn("separation collapsed to zero; estimate is censored", ZeroSeparation, stacklevel=3)
            out.append(MleEstimate(
                lambda_=float(lams[best]),
                window_logs=self.windows[best],
                n_renorms=len(self.windows[best]),
                steps=int(self.steps[best]),
                censored=bool(self.censored[best]),
                restart_lambdas=[float(x) for x in lams[rows]],
            ))
        return out


def _advance_reference(env, spec, theta, s, n_steps, noise_fn=None):
    for t in range(n_steps):
        a = mean_action(spec, theta, s) if noise_fn is None else action_from_noise(spec, theta, s, noise_fn(t))
        s = env.step(s, a)
    return s


def _mle_batch(env: EnvModel, spec: PolicySpec, thetas, s0, cfg: MleConfig) -> list[MleEstimate]:
    g = len(thetas)
    s0 = np.asarray(env.default_s0 if s0 is None else s0, dtype=float).reshape(env.state_dim)
    ref = np.broadcast_to(env.project(s0), (g, env.state_dim))
    ref = _advance_reference(env, spec, thetas, ref, cfg.transient_skip)
    dirs = _directions(env, cfg)
    r = len(dirs)
    rows = g * r
    theta_rows = np.repeat(thetas, r, axis=0)
    theta_pair = np.concatenate([theta_rows, theta_rows])
    ref = np.repeat(ref, r, axis=0)
    pert = env.project(ref + cfg.d0 * np.tile(dirs, (g, 1)))
    book = _Benettin(cfg, rows)
    book.start(_norm(_displacement(env, pert, ref)))
    d = book.d_prev
    for _ in range(cfg.t_max - cfg.transient_skip):
        pair = np.concatenate([ref, pert])
        pair = env.step(pair, mean_action(spec, theta_pair, pair))
        ref, pert = pair[:rows], pair[rows:]
        disp = _displacement(env, pert, ref)
        d = _norm(disp)
        rescale = book.update(d)
        if rescale.any():
            scale = np.where(d > 0, cfg.d0 / np.where(d > 0, d, 1.0), 0.0)[:, None]
            new = env.project(ref + disp * scale)
            pert = np.where(rescale[:, None], new, pert)
            d_new = _norm(_displacement(env, pert, ref))
            book.restart_from(rescale, d_new)
            d = np.where(rescale, d_new, d)
        if not book.active.any():
            break
    return book.finish(d, g)


def estimate_mle(env: EnvModel, spec: PolicySpec, theta, s0=None, cfg: MleConfig | None = None) -> MleEstimate:
    """Largest Lyapunov exponent (nats per step) under the deterministic policy.

    Gaussian kinds are evaluated at their mean (sigma forced to 0). The
    exponent is the maximum over ``cfg.n_restarts`` random initial
    perturbation directions (or the single ``cfg.direction``).
    """
    cfg = cfg or MleConfig()
    theta = np.asarray(theta, dtype=float).reshape(1, spec.n_params)
    return _mle_batch(env, spec, theta, s0, cfg)[0]


def estimate_mle_stochastic(
    env: EnvModel, spec: PolicySpec, theta, s0=None, cfg: MleConfig | None = None
) -> MleEstimate:
    """Exponent of the path-averaged separation ``||E[s'_t - s_t]||``.

    Each of ``cfg.n_paths`` sample paths carries a reference and a perturbed
    state driven by the same action noise. Stretch factors use the norm of
    the mean separation across paths, and rescaling multiplies every path's
    separation by one common factor.
    """
    cfg = cfg or MleConfig()
    theta = np.asarray(theta, dtype=float)
    s0 = np.asarray(env.default_s0 if s0 is None else s0, dtype=float).reshape(env.state_dim)
    n = env.state_dim
    p = cfg.n_paths
    gens = [substream(cfg.seed, "mle-noise", k) for k in range(p)]
    uniform = not spec.is_gaussian

    def noise(_t=None):
        draws = [g.random(spec.m) if uniform else g.standard_normal(spec.m) for g in gens]
        return np.array(draws)

    ref = np.broadcast_to(env.project(s0), (p, n)).copy()
    for _ in range(cfg.transient_skip):
        ref = env.step(ref, action_from_noise(spec, theta, ref, noise()))

    dirs = _directions(env, cfg)
    r = len(dirs)
    ref = np.broadcast_to(ref, (r, p, n)).copy()
    pert = env.project(ref + cfg.d0 * dirs[:, None, :])

    def mean_sep(pert, ref):
        disp = _displacement(env, pert, ref)
        return disp, _norm(disp.mean(axis=1))

    book = _Benettin(cfg, r)
    book.start(mean_sep(pert, ref)[1])
    d = book.d_prev
    for _ in range(cfg.t_max - cfg.transient_skip):
        z = np.broadcast_to(noise(), (r, p, spec.m))
        pair = np.concatenate([ref, pert])
        pair = env.step(pair, action_from_noise(spec, theta, pair, np.concatenate([z, z])))
        ref, pert = pair[:r], pair[r:]
        disp, d = mean_sep(pert, ref)
        rescale = book.update(d)
        if rescale.any():
            scale = np.where(d > 0, cfg.d0 / np.where(d > 0, d, 1.0), 0.0)[:, None, None]
            new = env.project(ref + disp * scale)
            pert = np.where(rescale[:, None, None], new, pert)
            d_new = mean_sep(pert, ref)[1]
            book.restart_from(rescale, d_new)
            d = np.where(rescale, d_new, d)
        if not book.active.any():
            break
    return book.finish(d)[0]


def mle_sweep(
    env: EnvModel, spec: PolicySpec, theta_grid, s0=None, cfg: MleConfig | None = None
) -> list[tuple[float, float | None, str | None]]:
    """``(theta, lambda, error)`` for each scalar parameter in ``theta_grid``.

    A failing grid point is recorded with ``lambda=None`` and the error text.
    """
    if spec.n_params != 1:
        raise ValueError("mle_sweep needs a one-parameter policy family")
    cfg = cfg or MleConfig()
    grid = np.asarray(theta_grid, dtype=float).reshape(-1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ZeroSeparation)
        try:
            ests = _mle_batch(env, spec, grid[:, None], s0, cfg)
            return [(float(th), e.lambda_, None) for th, e in zip(grid, ests)]
        except Exception:  # noqa: BLE001 - redo point by point to isolate the failure
            pass
        out = []
        for th in grid:
            try:
                est = _mle_batch(env, spec, np.array([[th]]), s0, cfg)[0]
                out.append((float(th), est.lambda_, None))
            except Exception as exc:  # noqa: BLE001 - sweep keeps going per point
                out.append((float(th), None, f"{type(exc).__name__}: {exc}"))
    return out
