"""Loss-curve data: scans along a direction and one-parameter sweeps."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .envs import EnvModel
from .errors import InsufficientPoints
from .holder import HolderClass, HolderFit
from .policies import PolicySpec
from .rollout import RolloutConfig, objective_batch, tail_bound

DEFAULT_SCAN_STEPS = 200


@dataclass
class ScanResult:
    theta0: np.ndarray
    direction: np.ndarray
    deltas: np.ndarray
    J: np.ndarray
    gamma: float
    tail_bound: float
    stochastic: bool = False

    @property
    def xs(self):
        return self.deltas


@dataclass
class SweepResult:
    theta_grid: np.ndarray
    J: np.ndarray
    gamma: float
    tail_bound: float

    @property
    def xs(self):
        return self.theta_grid


def _evaluate(env, spec, thetas, cfg):
    """Objective per row; a failing batch is retried row by row, failures become NaN."""
    try:
        return objective_batch(env, spec, thetas, cfg)
    except ArithmeticError:
        out = np.full(len(thetas), np.nan)
        for i, th in enumerate(thetas):
            try:
                out[i] = objective_batch(env, spec, th[None], cfg)[0]
            except ArithmeticError:
                pass
        return out


def scan(
    env: EnvModel,
    spec: PolicySpec,
    theta0,
    direction,
    n_steps: int = DEFAULT_SCAN_STEPS,
    step_size: float = 1e-7,
    cfg: RolloutConfig | None = None,
    normalize: bool = False,
) -> ScanResult:
    """``J(theta0 + i * step_size * direction)`` for ``i = 0 .. n_steps - 1``.

    Uses the deterministic policy unless ``cfg.stochastic`` (single- or
    multi-path evaluation with common random numbers). Points whose rollout
    fails are recorded as NaN.
    """
    cfg = cfg or RolloutConfig()
    theta0 = np.asarray(theta0, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if not np.any(direction):
        raise ValueError("scan direction must be nonzero")
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    if normalize:
        direction = direction / np.linalg.norm(direction)
    deltas = np.arange(n_steps) * step_size
    thetas = theta0 + deltas[:, None] * direction
    J = _evaluate(env, spec, thetas, cfg)
    return ScanResult(theta0, direction, deltas, J, cfg.gamma, tail_bound(env, cfg.gamma, cfg.horizon), cfg.stochastic)


def sweep(
    env: EnvModel, spec: PolicySpec, theta_lo: float, theta_hi: float, n_points: int, cfg: RolloutConfig | None = None
) -> SweepResult:
    """Deterministic objective on a uniform grid of a one-parameter family."""
    if spec.n_params != 1:
        raise ValueError("sweep needs a one-parameter policy family")
    if n_points < 2 or not theta_hi > theta_lo:
        raise ValueError("need n_points >= 2 and theta_hi > theta_lo")
    cfg = replace(cfg or RolloutConfig(), stochastic=False)
    grid = np.linspace(theta_lo, theta_hi, n_points)
    J = _evaluate(env, spec, grid[:, None], cfg)
    return SweepResult(grid, J, cfg.gamma, tail_bound(env, cfg.gamma, cfg.horizon))


def roughness(curve) -> dict[str, float]:
    """Total variation and the largest second divided difference of a curve."""
    x = np.asarray(curve.xs, dtype=float)
    y = np.asarray(curve.J, dtype=float)
    if len(y) < 3:
        raise InsufficientPoints("roughness needs at least 3 points")
    tv = float(np.sum(np.abs(np.diff(y))))
    slopes = np.diff(y) / np.diff(x)
    second = np.diff(slopes) / (x[2:] - x[:-2])
    return {"total_variation": tv, "max_second_divided_difference": float(np.max(np.abs(second)))}


def guard_fractal(fit: HolderFit, values, bound: float) -> HolderFit:
    """Refuse a fractal verdict when truncation error is >1% of the observed J range."""
    values = np.asarray(values, dtype=float)
    spread = float(np.nanmax(values) - np.nanmin(values))
    if fit.classification is HolderClass.FRACTAL and bound > 0.01 * spread:
        fit.classification = HolderClass.INCONCLUSIVE
    return fit
