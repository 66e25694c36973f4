"""Exception and warning types shared across the package."""


class FractalscapeError(Exception):
    """Base class for errors raised by this package."""


class NonFiniteState(FractalscapeError, ArithmeticError):
    """A transition produced NaN or Inf (integrator blow-up)."""


class DegenerateDensity(FractalscapeError, ValueError):
    """A log-density or score was requested for a zero-variance policy."""


class InsufficientPoints(FractalscapeError, ValueError):
    """Too few usable points for a regression or roughness measure."""


class LayoutMismatch(FractalscapeError, ValueError):
    """A parameter file does not match its declared layout."""


class ZeroSeparation(RuntimeWarning):
    """Perturbed and reference trajectories merged during MLE estimation."""


class DegenerateVariance(RuntimeWarning):
    """All sampled objective values at some sigma were identical."""
