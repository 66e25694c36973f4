"""Deterministic closed-loop test environments.

Every function here is vectorized: states have shape ``(..., state_dim)`` and
actions ``(..., action_dim)``, so a whole batch of trajectories (different
parameters, initial states or noise paths) advances with one call. All
operations are elementwise over the batch, which makes batched and unbatched
results bitwise identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import NonFiniteState

__all__ = [
    "EnvModel",
    "Logistic",
    "Sat1d",
    "Sat1dShifted",
    "Pendulum",
    "Acrobot",
    "ENV_NAMES",
    "make_env",
    "wrap_angle",
]


def wrap_angle(x):
    """Wrap angles into ``[-pi, pi)``."""
    return np.mod(x + np.pi, 2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class EnvModel:
    """Base class: compact state/action boxes plus transition and cost.

    Subclasses implement ``_dynamics`` (raw next state, before projection) and
    ``cost``. ``cost_bound`` is the maximum of the cost over the compact
    state/action box and feeds the truncation tail bound.
    """

    name: str = field(init=False, default="")
    state_dim: int = field(init=False, default=1)
    action_dim: int = field(init=False, default=1)
    state_lo: tuple = field(init=False, default=(-1.0,))
    state_hi: tuple = field(init=False, default=(1.0,))
    action_lo: tuple = field(init=False, default=(-1.0,))
    action_hi: tuple = field(init=False, default=(1.0,))
    angle_coords: tuple = field(init=False, default=())
    default_s0: tuple = field(init=False, default=(0.0,))
    # Lipschitz constant of step() in s on S x A, used by spot checks.
    lipschitz: float = field(init=False, default=1.0)

    @property
    def cost_bound(self) -> float:
        raise NotImplementedError

    @cached_property
    def _boxes(self):
        return tuple(np.asarray(b, dtype=float) for b in (self.state_lo, self.state_hi, self.action_lo, self.action_hi))

    def clip_action(self, a):
        _, _, lo, hi = self._boxes
        return np.minimum(np.maximum(a, lo), hi)

    def project(self, s_raw):
        """Clamp into the state box, wrapping angle coordinates first."""
        lo, hi, _, _ = self._boxes
        s = np.asarray(s_raw, dtype=float)
        if self.angle_coords:
            s = s.copy()
            for i in self.angle_coords:
                s[..., i] = wrap_angle(s[..., i])
        return np.minimum(np.maximum(s, lo), hi)

    def step(self, s, a):
        s = np.asarray(s, dtype=float)
        a = self.clip_action(np.asarray(a, dtype=float))
        raw = self._dynamics(s, a)
        # checked before projection, which would clamp an infinity back into the box
        if not np.all(np.isfinite(raw)):
            raise NonFiniteState(f"{self.name}: non-finite state after step")
        return self.project(raw)

    def _dynamics(self, s, a):
        raise NotImplementedError

    def cost(self, s, a):
        raise NotImplementedError

    def sample_state(self, rng, size=()):
        lo, hi = np.asarray(self.state_lo), np.asarray(self.state_hi)
        return lo + (hi - lo) * rng.random(size + (self.state_dim,))

    def sample_action(self, rng, size=()):
        lo, hi = np.asarray(self.action_lo), np.asarray(self.action_hi)
        return lo + (hi - lo) * rng.random(size + (self.action_dim,))


@dataclass(frozen=True)
class Logistic(EnvModel):
    """``s' = (1 - s) * a``; with ``a = theta * s`` this is the logistic map."""

    name: str = field(init=False, default="logistic")
    state_lo: tuple = field(init=False, default=(-3.0,))
    state_hi: tuple = field(init=False, default=(3.0,))
    action_lo: tuple = field(init=False, default=(-20.0,))
    action_hi: tuple = field(init=False, default=(20.0,))
    default_s0: tuple = field(init=False, default=(0.9,))
    # |d s'/d s| = |a| <= 20 for fixed a
    lipschitz: float = field(init=False, default=20.0)

    @property
    def cost_bound(self) -> float:
        return 3.0**2 + 0.1 * 20.0**2

    def _dynamics(self, s, a):
        return (1.0 - s) * a

    def cost(self, s, a):
        s = np.asarray(s, dtype=float)
        a = np.asarray(a, dtype=float)
        return s[..., 0] ** 2 + 0.1 * a[..., 0] ** 2


@dataclass(frozen=True)
class Sat1d(EnvModel):
    """Saturating map ``s' = clip(a, -1, 1)`` on ``S = [-1, 1]``, cost ``|s|``."""

    name: str = field(init=False, default="sat1d")
    action_lo: tuple = field(init=False, default=(-10.0,))
    action_hi: tuple = field(init=False, default=(10.0,))
    # step does not depend on s for a fixed action
    lipschitz: float = field(init=False, default=0.0)

    @property
    def cost_bound(self) -> float:
        return 1.0

    def _dynamics(self, s, a):
        return np.clip(a, -1.0, 1.0) + 0.0 * s

    def cost(self, s, a):
        return np.abs(np.asarray(s, dtype=float)[..., 0])


@dataclass(frozen=True)
class Sat1dShifted(EnvModel):
    """Saturating map onto ``S = [0, 1]`` (``a <= 0`` gives 0), cost ``s + 1``."""

    name: str = field(init=False, default="sat1d-shifted")
    state_lo: tuple = field(init=False, default=(0.0,))
    action_lo: tuple = field(init=False, default=(0.0,))
    action_hi: tuple = field(init=False, default=(10.0,))
    lipschitz: float = field(init=False, default=0.0)

    @property
    def cost_bound(self) -> float:
        return 2.0

    def _dynamics(self, s, a):
        return np.clip(a, 0.0, 1.0) + 0.0 * s

    def cost(self, s, a):
        return np.asarray(s, dtype=float)[..., 0] + 1.0


@dataclass(frozen=True)
class Pendulum(EnvModel):
    """Torque-driven single pendulum; angle measured from upright.

    Semi-implicit Euler: ``w' = clip(w + dt*(g/l sin(phi) + a/(m l^2)))``,
    ``phi' = wrap(phi + dt*w')``.
    """

    name: str = field(init=False, default="pendulum")
    state_dim: int = field(init=False, default=2)
    state_lo: tuple = field(init=False, default=(-math.pi, -8.0))
    state_hi: tuple = field(init=False, default=(math.pi, 8.0))
    action_lo: tuple = field(init=False, default=(-2.0,))
    action_hi: tuple = field(init=False, default=(2.0,))
    angle_coords: tuple = field(init=False, default=(0,))
    default_s0: tuple = field(init=False, default=(-1.0, 0.0))
    g: float = 10.0
    m: float = 1.0
    length: float = 1.0
    dt: float = 0.05
    max_speed: float = 8.0
    # Jacobian of the Euler map is [[1 + dt^2 g/l cos, dt], [dt g/l cos, 1]];
    # its spectral norm peaks at 1.3125 for |cos| = 1 (clipping only shrinks it)
    lipschitz: float = field(init=False, default=1.32)

    @property
    def cost_bound(self) -> float:
        return math.pi**2 + 0.1 * self.max_speed**2 + 0.001 * 2.0**2

    def _dynamics(self, s, a):
        phi, w = s[..., 0], s[..., 1]
        acc = self.g / self.length * np.sin(phi) + a[..., 0] / (self.m * self.length**2)
        w_new = np.clip(w + self.dt * acc, -self.max_speed, self.max_speed)
        phi_new = phi + self.dt * w_new
        return np.stack([phi_new, w_new], axis=-1)

    def cost(self, s, a):
        s = np.asarray(s, dtype=float)
        a = np.asarray(a, dtype=float)
        return s[..., 0] ** 2 + 0.1 * s[..., 1] ** 2 + 0.001 * np.sum(a * a, axis=-1)


@dataclass(frozen=True)
class Acrobot(EnvModel):
    """Two-link underactuated arm, torque on the elbow, RK4 with ``dt=0.2``.

    Link constants follow the usual acrobot benchmark: unit masses and
    lengths, centres of mass at mid-link, unit moments of inertia. Angles are
    measured from the upright position (as for the pendulum), so the cost
    penalizes distance from the inverted configuration; ``theta1 = pi`` is
    hanging straight down.
    """

    name: str = field(init=False, default="acrobot")
    state_dim: int = field(init=False, default=4)
    state_lo: tuple = field(init=False, default=(-math.pi, -math.pi, -4 * math.pi, -9 * math.pi))
    state_hi: tuple = field(init=False, default=(math.pi, math.pi, 4 * math.pi, 9 * math.pi))
    angle_coords: tuple = field(init=False, default=(0, 1))
    default_s0: tuple = field(init=False, default=(1.0, 0.0, 0.0, 0.0))
    # RK4 at dt=0.2 is far from its stability region at the velocity limits:
    # sampled sup of |ds'|/|ds| over the box is ~4.5e6 (~1.3e5 for |w| <= 2 pi)
    lipschitz: float = field(init=False, default=1e7)
    g: float = 9.8
    dt: float = 0.2
    m1: float = 1.0
    m2: float = 1.0
    l1: float = 1.0
    lc1: float = 0.5
    lc2: float = 0.5
    i1: float = 1.0
    i2: float = 1.0

    @property
    def cost_bound(self) -> float:
        hi = np.asarray(self.state_hi)
        return float(hi[0] ** 2 + hi[1] ** 2 + 0.1 * (hi[2] ** 2 + hi[3] ** 2) + 0.005)

    def _derivs(self, s, torque):
        m1, m2, l1, lc1, lc2, i1, i2, g = (
            self.m1, self.m2, self.l1, self.lc1, self.lc2, self.i1, self.i2, self.g,
        )
        th1, th2, dth1, dth2 = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
        cos2, sin2 = np.cos(th2), np.sin(th2)
        d1 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * cos2) + i1 + i2
        d2 = m2 * (lc2**2 + l1 * lc2 * cos2) + i2
        # gravity terms of the hanging-origin equations with theta1 -> theta1 + pi
        phi2 = -m2 * lc2 * g * np.sin(th1 + th2)
        phi1 = (
            -m2 * l1 * lc2 * dth2**2 * sin2
            - 2 * m2 * l1 * lc2 * dth2 * dth1 * sin2
            - (m1 * lc1 + m2 * l1) * g * np.sin(th1)
            + phi2
        )
        ddth2 = (torque + d1 / d2 * phi1 - m2 * l1 * lc2 * dth1**2 * sin2 - phi2) / (
            m2 * lc2**2 + i2 - d2**2 / d1
        )
        ddth1 = -(d2 * ddth2 + phi1) / d1
        return np.stack([dth1, dth2, ddth1, ddth2], axis=-1)

    def _dynamics(self, s, a):
        torque = a[..., 0]
        h = self.dt
        k1 = self._derivs(s, torque)
        k2 = self._derivs(s + 0.5 * h * k1, torque)
        k3 = self._derivs(s + 0.5 * h * k2, torque)
        k4 = self._derivs(s + h * k3, torque)
        return s + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def cost(self, s, a):
        s = np.asarray(s, dtype=float)
        a = np.asarray(a, dtype=float)
        quad = s[..., 0] ** 2 + s[..., 1] ** 2 + 0.1 * (s[..., 2] ** 2 + s[..., 3] ** 2)
        return quad + 0.005 * np.sum(a * a, axis=-1)


_REGISTRY = {
    "logistic": Logistic,
    "sat1d": Sat1d,
    "sat1d-shifted": Sat1dShifted,
    "pendulum": Pendulum,
    "acrobot": Acrobot,
}
ENV_NAMES = tuple(_REGISTRY)


def make_env(name: str) -> EnvModel:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {', '.join(ENV_NAMES)}") from None
