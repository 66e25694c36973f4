"""Policy families and their score functions.

Parameters are flat float vectors. The layout of a vector is fixed by its
``PolicySpec``: for the tanh network it is ``W1`` (r x n, row-major), then
``W2`` (m x r), then ``log sigma`` for Gaussian kinds. All functions accept a
single parameter vector ``(p,)`` or a batch ``(B, p)`` paired with states
``(B, n)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DegenerateDensity

__all__ = [
    "PolicyKind",
    "PolicySpec",
    "ActionSample",
    "mean_action",
    "action_from_noise",
    "sample_action",
    "log_density",
    "score_gradient",
    "init_theta",
]


class PolicyKind(str, enum.Enum):
    LINEAR_DET = "linear"
    LINEAR_GAUSSIAN = "linear-gaussian"
    TANH_NET_DET = "tanh-net"
    TANH_NET_GAUSSIAN = "tanh-net-gaussian"
    UNIFORM_EXAMPLE3 = "uniform-example3"


_GAUSSIAN = {PolicyKind.LINEAR_GAUSSIAN, PolicyKind.TANH_NET_GAUSSIAN}
_NET = {PolicyKind.TANH_NET_DET, PolicyKind.TANH_NET_GAUSSIAN}


@dataclass(frozen=True)
class PolicySpec:
    kind: PolicyKind
    n: int = 1
    m: int = 1
    r: int = 8
    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if min(self.n, self.m, self.r) < 1:
            raise ValueError("policy dimensions must be positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.kind is PolicyKind.UNIFORM_EXAMPLE3 and (self.n, self.m) != (1, 1):
            raise ValueError("uniform-example3 policy is one-dimensional")

    @property
    def is_gaussian(self) -> bool:
        return self.kind in _GAUSSIAN

    @property
    def is_stochastic(self) -> bool:
        return self.kind in _GAUSSIAN or self.kind is PolicyKind.UNIFORM_EXAMPLE3

    @cached_property
    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        if self.kind in _NET:
            blocks = [("W1", (self.r, self.n)), ("W2", (self.m, self.r))]
        elif self.kind is PolicyKind.UNIFORM_EXAMPLE3:
            return [("theta", (2,))]
        else:
            blocks = [("K", (self.m, self.n))]
        if self.is_gaussian:
            blocks.append(("log_sigma", ()))
        return blocks

    @cached_property
    def n_params(self) -> int:
        return sum(math.prod(shape) for _, shape in self.layout)

    @property
    def sigma_index(self) -> int | None:
        """Index of the log-sigma slot, or None for kinds without one."""
        return self.n_params - 1 if self.is_gaussian else None

    def unflatten(self, theta) -> dict[str, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape[-1]}")
        lead = theta.shape[:-1]
        out, i = {}, 0
        for name, shape in self.layout:
            size = math.prod(shape)
            out[name] = theta[..., i : i + size].reshape(lead + shape)
            i += size
        return out

    def flatten(self, blocks: dict[str, np.ndarray]) -> np.ndarray:
        parts = []
        for name, shape in self.layout:
            b = np.asarray(blocks[name], dtype=float)
            lead = b.shape[: b.ndim - len(shape)]
            parts.append(b.reshape(lead + (-1,)))
        return np.concatenate(parts, axis=-1)

    def sigma(self, theta) -> np.ndarray:
        if not self.is_gaussian:
            raise ValueError(f"{self.kind.value} policy has no sigma")
        return np.exp(np.asarray(theta, dtype=float)[..., self.sigma_index])


@dataclass
class ActionSample:
    action: np.ndarray
    log_prob: np.ndarray | None = None
    score: np.ndarray | None = None


def _matvec(w, x):
    # explicit accumulation keeps results independent of batch shape
    acc = w[..., 0] * x[..., None, 0]
    for j in range(1, w.shape[-1]):
        acc = acc + w[..., j] * x[..., None, j]
    return acc


def _hidden(spec: PolicySpec, blocks, s):
    return np.tanh(_matvec(blocks["W1"], s))


def mean_action(spec: PolicySpec, theta, s) -> np.ndarray:
    """Deterministic action: ``K s`` or ``W2 tanh(W1 s)`` (midpoint for uniform)."""
    s = np.asarray(s, dtype=float)
    blocks = spec.unflatten(theta)
    if spec.kind in _NET:
        return _matvec(blocks["W2"], _hidden(spec, blocks, s))
    if spec.kind is PolicyKind.UNIFORM_EXAMPLE3:
        lo, hi = _uniform_bounds(spec, blocks["theta"], s)
        return 0.5 * (lo + hi)
    return _matvec(blocks["K"], s)


def _uniform_bounds(spec, t, s):
    shift = np.abs(t[..., 1]) ** spec.beta
    base = np.abs(t[..., 0]) * s[..., 0]
    return (base + shift)[..., None], (base + 2.0 * shift)[..., None]


def action_from_noise(spec: PolicySpec, theta, s, noise) -> np.ndarray:
    """Map pre-drawn noise to an action.

    ``noise`` is standard normal for Gaussian kinds and uniform on [0, 1) for
    the uniform kind; deterministic kinds ignore it.
    """
    s = np.asarray(s, dtype=float)
    if spec.is_gaussian:
        sigma = spec.sigma(theta)[..., None]
        return mean_action(spec, theta, s) + sigma * noise
    if spec.kind is PolicyKind.UNIFORM_EXAMPLE3:
        lo, hi = _uniform_bounds(spec, spec.unflatten(theta)["theta"], s)
        return lo + (hi - lo) * noise
    return mean_action(spec, theta, s)


def sample_action(spec: PolicySpec, theta, s, rng) -> ActionSample:
    s = np.asarray(s, dtype=float)
    shape = s.shape[:-1] + (spec.m,)
    if spec.kind is PolicyKind.UNIFORM_EXAMPLE3:
        return ActionSample(action_from_noise(spec, theta, s, rng.random(shape)))
    if not spec.is_gaussian:
        return ActionSample(mean_action(spec, theta, s))
    a = action_from_noise(spec, theta, s, rng.standard_normal(shape))
    if np.any(spec.sigma(theta) == 0.0):
        return ActionSample(a)
    return ActionSample(a, log_density(spec, theta, s, a), score_gradient(spec, theta, s, a))


def log_density(spec: PolicySpec, theta, s, a) -> np.ndarray:
    """Gaussian log-density ``log N(a; u(s), sigma^2 I)``."""
    sigma = _checked_sigma(spec, theta)
    r = np.asarray(a, dtype=float) - mean_action(spec, theta, s)
    sq = np.sum(r * r, axis=-1)
    log_sigma = np.log(sigma)
    return -0.5 * sq / sigma**2 - spec.m * (log_sigma + 0.5 * math.log(2.0 * math.pi))


def _checked_sigma(spec, theta):
    if not spec.is_gaussian:
        raise DegenerateDensity(f"{spec.kind.value} policy has no Gaussian density")
    sigma = spec.sigma(theta)
    if np.any(sigma == 0.0):
        raise DegenerateDensity("sigma = 0: the policy is a Dirac delta")
    return sigma


def score_gradient(spec: PolicySpec, theta, s, a) -> np.ndarray:
    """Analytic gradient of the Gaussian log-density w.r.t. the full parameter vector."""
    sigma = _checked_sigma(spec, theta)
    s = np.asarray(s, dtype=float)
    a = np.asarray(a, dtype=float)
    blocks = spec.unflatten(theta)
    var = (sigma**2)[..., None]
    if spec.kind is PolicyKind.TANH_NET_GAUSSIAN:
        h = _hidden(spec, blocks, s)
        resid = a - _matvec(blocks["W2"], h)
        delta = resid / var
        g_w2 = delta[..., :, None] * h[..., None, :]
        back = _matvec(np.swapaxes(blocks["W2"], -1, -2), delta) * (1.0 - h * h)
        g_w1 = back[..., :, None] * s[..., None, :]
        grads = {"W1": g_w1, "W2": g_w2}
    else:
        resid = a - _matvec(blocks["K"], s)
        delta = resid / var
        grads = {"K": delta[..., :, None] * s[..., None, :]}
    grads["log_sigma"] = np.sum(resid * resid, axis=-1) / sigma**2 - spec.m
    return spec.flatten(grads)


def init_theta(spec: PolicySpec, rng, scale: float = 0.05, sigma0: float = 0.1) -> np.ndarray:
    """Weights ~ N(0, scale^2); log-sigma slot set to ``log(sigma0)``."""
    theta = scale * rng.standard_normal(spec.n_params)
    if spec.is_gaussian:
        theta[spec.sigma_index] = math.log(sigma0)
    return theta
