"""Hölder exponent of an objective from variance scaling, plus test fractals.

Sampling ``X ~ N(theta0, sigma^2 I)`` and regressing ``log Var J(X)`` on
``log sigma`` gives a slope ``k``; a locally alpha-Hölder objective has
``k = 2 alpha``. Slopes near 2 (or above) indicate a Lipschitz objective.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVariance, InsufficientPoints
from .rng import master_seed, substream

__all__ = [
    "HolderClass",
    "HolderConfig",
    "HolderFit",
    "CurveSample",
    "SMOOTH_SLOPE",
    "FRACTAL_SLOPE",
    "MIN_R2",
    "variance_at_sigma",
    "variance_pairs",
    "fit_holder",
    "classify",
    "bootstrap_slopes",
    "weierstrass",
    "weierstrass_terms",
    "box_count_dimension",
]

SMOOTH_SLOPE = 1.8
FRACTAL_SLOPE = 1.5
MIN_R2 = 0.9
BOOTSTRAP_REPS = 500


class HolderClass(str, enum.Enum):
    SMOOTH = "smooth"
    FRACTAL = "fractal"
    INCONCLUSIVE = "inconclusive"


def _default_grid():
    return tuple(np.logspace(-5, -2, 12))


@dataclass(frozen=True)
class HolderConfig:
    sigma_grid: tuple = field(default_factory=_default_grid)
    n_samples: int = 200
    seed: int = field(default_factory=master_seed)
    scan_sigma: bool = False

    def __post_init__(self):
        grid = np.asarray(self.sigma_grid, dtype=float)
        if len(grid) < 4 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            raise ValueError("sigma_grid needs >= 4 strictly increasing positive values")
        if self.n_samples < 30:
            raise ValueError("n_samples must be at least 30")


@dataclass
class HolderFit:
    slope: float
    intercept: float
    r_squared: float
    classification: HolderClass
    sigmas: list[float]
    variances: list[float]
    # 5th/95th percentile of the slope under resampling of the draws, if available
    slope_ci: tuple[float, float] | None = None

    @property
    def alpha(self) -> float:
        return self.slope / 2.0

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r_squared,
            "alpha": self.alpha,
            "class": self.classification.value,
            "slope_ci": None if self.slope_ci is None else list(self.slope_ci),
            "pairs": [[s, v] for s, v in zip(self.sigmas, self.variances)],
        }


@dataclass
class CurveSample:
    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.ys = np.asarray(self.ys, dtype=float)
        if self.xs.shape != self.ys.shape or self.xs.ndim != 1 or len(self.xs) < 2:
            raise ValueError("xs and ys must be equal-length 1-D arrays with >= 2 points")
        if np.any(np.diff(self.xs) <= 0):
            raise ValueError("xs must be strictly increasing")


def _directions(theta0, n, seed, mask):
    z = substream(seed, "holder").standard_normal((n, len(theta0)))
    if mask is not None:
        z = z * np.asarray(mask, dtype=float)
    return z


def variance_at_sigma(evaluator, theta0, sigma: float, n: int = 200, seed: int | None = None, mask=None) -> float:
    """Unbiased sample variance of ``J(theta0 + sigma z_i)`` over ``n`` draws.

    ``evaluator`` maps an ``(n, p)`` array of parameter vectors to ``n``
    objective values. ``mask`` zeroes coordinates that must stay fixed.
    Directions ``z_i`` depend only on ``seed``, so every sigma reuses them.
    """
    if sigma <= 0 or n < 2:
        raise ValueError("need sigma > 0 and n >= 2")
    theta0 = np.asarray(theta0, dtype=float)
    z = _directions(theta0, n, master_seed(seed), mask)
    values = np.asarray(evaluator(theta0 + sigma * z), dtype=float)
    return float(np.var(values, ddof=1))


def variance_pairs(evaluator, theta0, cfg: HolderConfig, mask=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample variances over the whole sigma grid with one evaluator call.

    Returns ``(sigmas, variances, values)`` where ``values`` has shape
    ``(len(grid), n_samples)``.
    """
    theta0 = np.asarray(theta0, dtype=float)
    sig = np.asarray(cfg.sigma_grid, dtype=float)
    z = _directions(theta0, cfg.n_samples, cfg.seed, mask)
    thetas = (theta0 + sig[:, None, None] * z[None]).reshape(-1, len(theta0))
    values = np.asarray(evaluator(thetas), dtype=float).reshape(len(sig), cfg.n_samples)
    return sig, np.var(values, axis=1, ddof=1), values


def classify(slope: float, r_squared: float, slope_hi: float | None = None) -> HolderClass:
    """Smooth needs a good linear fit with slope >= 1.8.

    Fractal needs slope <= 1.5 and either a good linear fit or, when the
    log-variance curve is bent, an upper bootstrap slope ``slope_hi`` that
    also stays <= 1.5.
    """
    if r_squared >= MIN_R2:
        if slope >= SMOOTH_SLOPE:
            return HolderClass.SMOOTH
        if slope <= FRACTAL_SLOPE:
            return HolderClass.FRACTAL
        return HolderClass.INCONCLUSIVE
    if slope <= FRACTAL_SLOPE and slope_hi is not None and slope_hi <= FRACTAL_SLOPE:
        return HolderClass.FRACTAL
    return HolderClass.INCONCLUSIVE


def _line(x, y):
    xm, ym = x.mean(), y.mean()
    slope = float(np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2))
    intercept = float(ym - slope * xm)
    ss_res = float(np.sum((y - intercept - slope * x) ** 2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return slope, intercept, r2


def bootstrap_slopes(sigmas, values, reps: int = BOOTSTRAP_REPS, seed: int | None = None) -> np.ndarray:
    """Slopes refit after resampling the draws (columns of ``values``) with replacement.

    The same resampled draw indices are used at every sigma, matching the
    shared directions of :func:`variance_pairs`.
    """
    values = np.asarray(values, dtype=float)
    x = np.log(np.asarray(sigmas, dtype=float))
    rng = substream(master_seed(seed), "holder-bootstrap")
    n = values.shape[1]
    out = []
    for _ in range(reps):
        v = np.var(values[:, rng.integers(0, n, n)], axis=1, ddof=1)
        if np.all(v > 0):
            out.append(_line(x, np.log(v))[0])
    return np.asarray(out)


def fit_holder(sigmas, variances, values=None, seed: int | None = None) -> HolderFit:
    """Least-squares line through ``(log sigma, log Var)``.

    Zero-variance points are dropped with a warning; fewer than four
    remaining points raise :class:`InsufficientPoints`. Passing the raw
    ``values`` (``(len(sigmas), n)``) adds a bootstrap slope interval.
    """
    sig = np.asarray(sigmas, dtype=float)
    var = np.asarray(variances, dtype=float)
    keep = var > 0
    if not keep.all():
        warnings.warn(f"dropping {int((~keep).sum())} zero-variance sigma points", DegenerateVariance, stacklevel=2)
    sig, var = sig[keep], var[keep]
    if len(sig) < 4:
        raise InsufficientPoints(f"need >= 4 non-degenerate (sigma, variance) pairs, got {len(sig)}")
    slope, intercept, r2 = _line(np.log(sig), np.log(var))
    ci = None
    if values is not None:
        boots = bootstrap_slopes(sig, np.asarray(values, dtype=float)[keep], seed=seed)
        if len(boots) >= BOOTSTRAP_REPS // 2:
            ci = (float(np.percentile(boots, 5)), float(np.percentile(boots, 95)))
    cls = classify(slope, r2, None if ci is None else ci[1])
    return HolderFit(slope, intercept, r2, cls, sig.tolist(), var.tolist(), ci)


def weierstrass_terms(a: float, tol: float = 1e-12) -> int:
    """Smallest term count with ``a**n < tol``."""
    return max(1, math.ceil(math.log(tol) / math.log(a)) + 1)


def _phases(x, b: int, n_terms: int):
    """Yield ``b^n |x| mod 2`` for ``n = 0 .. n_terms - 1``, computed exactly.

    A float is ``m * 2^-k`` with integer ``m``, so ``b^n x mod 2`` is
    ``(b^n m mod 2^(k+1)) * 2^-k``: integer arithmetic with no rounding until
    the final conversion. This keeps high-frequency terms meaningful where
    ``cos(b^n pi x)`` in floating point would be noise.
    """
    mant, ex = np.frexp(np.abs(x))
    m = (mant * 2.0**53).astype(np.uint64)
    k = 53 - ex.astype(np.int64)
    bits = k + 1
    small = (bits >= 1) & (bits <= 64)
    # modulus fits in uint64: wrapping multiplication is exact mod 2^64, hence mod 2^bits
    mask = np.zeros(x.shape, dtype=np.uint64)
    mask[small] = np.left_shift(np.uint64(1), (bits[small] - 1).astype(np.uint64)) * np.uint64(2) - np.uint64(1)
    r = m & mask
    big = np.flatnonzero(bits > 64)
    rb = [int(m[i]) % (1 << int(bits[i])) for i in big]
    bu = np.uint64(b)
    for _ in range(n_terms):
        ph = np.ldexp(r.astype(float), -k)
        for j, i in enumerate(big):
            ph[i] = math.ldexp(float(rb[j]), -int(k[i]))
        ph[bits <= 0] = 0.0  # multiples of 2
        yield ph
        r = (r * bu) & mask
        rb = [(v * b) % (1 << int(bits[i])) for v, i in zip(rb, big)]


def weierstrass(x, a: float = 0.6, b: float = 7.0, n_terms: int | None = None):
    """Truncated ``sum_n a^n cos(b^n pi x)``; error at most ``a^n_terms / (1 - a)``.

    For integer ``b`` the phases are reduced exactly (see ``_phases``), so the
    result is accurate to rounding for any float input.
    """
    if not 0 < a < 1 or b < 1:
        raise ValueError("need 0 < a < 1 and b >= 1")
    n_terms = weierstrass_terms(a) if n_terms is None else n_terms
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1)
    total = np.zeros_like(flat)
    if float(b).is_integer():
        for n, ph in enumerate(_phases(flat, int(b), n_terms)):
            total = total + a**n * np.cos(np.pi * ph)
    else:
        for n in range(n_terms):
            total = total + a**n * np.cos(b**n * np.pi * flat)
    total = total.reshape(x.shape)
    return total if total.ndim else float(total)


def box_count_dimension(curve: CurveSample, min_points: int = 1000) -> float:
    """Box-counting dimension of a sampled graph.

    The curve is rescaled to the unit square and treated as the polyline
    through its samples. For each dyadic box size ``eps = 2^-k`` the boxes hit
    in every column are counted from the polyline's vertical extent there.
    The slope of ``log N`` against ``log(1/eps)`` is fit over the middle half
    of the ladder, which stops a few sample spacings above the resolution.
    """
    if len(curve.xs) < min_points:
        raise InsufficientPoints(f"need >= {min_points} curve points, got {len(curve.xs)}")
    x = (curve.xs - curve.xs[0]) / (curve.xs[-1] - curve.xs[0])
    span = curve.ys.max() - curve.ys.min()
    y = (curve.ys - curve.ys.min()) / span if span > 0 else np.zeros_like(curve.ys)
    k_max = int(math.floor(math.log2(len(x) / 4)))
    ks = np.arange(1, k_max + 1)
    counts = np.array([_boxes_hit(x, y, 2.0**-k) for k in ks], dtype=float)
    lo, hi = len(ks) // 4, len(ks) - len(ks) // 4
    sel = slice(lo, max(hi, lo + 2))
    lx = ks[sel] * math.log(2.0)
    slope = np.polyfit(lx, np.log(counts[sel]), 1)[0]
    return float(slope)


def _boxes_hit(x, y, eps):
    n_cols = int(round(1.0 / eps))
    col = np.minimum((x / eps).astype(int), n_cols - 1)
    # each polyline segment spans [min, max] of its endpoints inside the column
    # of its left endpoint; a segment crossing a column edge also touches the next
    seg_lo = np.minimum(y[:-1], y[1:])
    seg_hi = np.maximum(y[:-1], y[1:])
    lo = np.full(n_cols, np.inf)
    hi = np.full(n_cols, -np.inf)
    np.minimum.at(lo, col[:-1], seg_lo)
    np.maximum.at(hi, col[:-1], seg_hi)
    cross = col[1:] != col[:-1]
    np.minimum.at(lo, col[1:][cross], seg_lo[cross])
    np.maximum.at(hi, col[1:][cross], seg_hi[cross])
    used = np.isfinite(lo)
    top = np.minimum(np.floor(hi[used] / eps), n_cols - 1)
    bottom = np.minimum(np.floor(lo[used] / eps), n_cols - 1)
    return float(np.sum(top - bottom + 1))
