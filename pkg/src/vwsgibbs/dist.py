"""Distribution kernels and samplers used by the model.

Only what the samplers need: the unnormalized inverse-gamma log kernel, the
lognormal interval probability and truncated sampler, and thin wrappers over
numpy's generator for the standard blocks of the Gibbs sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _normal


class DegenerateIntervalError(ValueError):
    """Raised when an interval carries no probability at working precision."""


@dataclass(frozen=True)
class InverseGammaParams:
    shape: float
    rate: float

    def __post_init__(self):
        if not self.shape > 0 or not self.rate > 0:
            raise ValueError(f"inverse gamma needs shape > 0 and rate > 0, got {self}")


@dataclass(frozen=True)
class LognormalParams:
    """Lognormal with log-scale location ``mu`` and log-scale sd ``tau``."""

    mu: float
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"lognormal scale must be positive, got tau={self.tau}")


def _shape_rate(p):
    if isinstance(p, InverseGammaParams):
        return p.shape, p.rate
    return float(p[0]), float(p[1])


def ig_log_kernel(x, p):
    """Unnormalized inverse-gamma log density ``-(shape+1) log x - rate / x``.

    ``p`` may be an :class:`InverseGammaParams` or a ``(shape, rate)`` pair;
    the pair form skips validation so degenerate kernels (shape or rate zero)
    can be evaluated.
    """
    shape, rate = _shape_rate(p)
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("inverse gamma kernel is defined for x > 0 only")
    out = -(shape + 1.0) * np.log(x) - rate / x
    return float(out) if out.ndim == 0 else out


def ig_mode(p):
    shape, rate = _shape_rate(p)
    if not rate > 0:
        raise ValueError(f"mode needs a positive rate, got {rate}")
    if not shape > -1:
        raise ValueError(f"mode needs shape > -1, got {shape}")
    return rate / (shape + 1.0)


def _standardize(a, b, p):
    za = -math.inf if a == 0 else (math.log(a) - p.mu) / p.tau
    zb = math.inf if math.isinf(b) else (math.log(b) - p.mu) / p.tau
    return za, zb


def ln_log_interval_prob(a, b, p):
    """log P(a < T <= b) for T ~ lognormal(mu, tau^2)."""
    if a < 0 or not a < b:
        raise ValueError(f"need 0 <= a < b, got a={a}, b={b}")
    za, zb = _standardize(float(a), float(b), p)
    return _normal.log_interval_mass(za, zb)


def ln_interval_prob(a, b, p):
    """P(a < T <= b) for T ~ lognormal(mu, tau^2), with ``b`` possibly infinite.

    Computed on the log scale, using the survival function above the median
    and the CDF below it, so tail probabilities keep their relative accuracy.
    """
    return math.exp(ln_log_interval_prob(a, b, p))


def sample_trunc_lognormal(a, b, p, rng, size=None):
    """Draw from lognormal(mu, tau^2) restricted to (a, b].

    The log of the draw is a truncated normal; see ``_normal.sample_interval``.
    """
    if a < 0 or not a < b:
        raise ValueError(f"need 0 <= a < b, got a={a}, b={b}")
    za, zb = _standardize(float(a), float(b), p)
    if _normal.log_interval_mass(za, zb) < _normal.LOG_MASS_FLOOR:
        raise DegenerateIntervalError(f"interval ({a}, {b}] has no mass under {p}")
    n = 1 if size is None else int(size)
    out = np.empty(n)
    for k in range(n):
        x = math.exp(p.mu + p.tau * _normal.sample_interval(za, zb, rng))
        # rounding on the exp can land a hair outside the interval
        out[k] = min(max(x, np.nextafter(a, np.inf)), b)
    return float(out[0]) if size is None else out


def lognormal_logpdf(x, mu, tau):
    lx = np.log(x)
    return -lx - np.log(tau) - 0.5 * np.log(2 * np.pi) - 0.5 * ((lx - mu) / tau) ** 2


# Standard blocks ------------------------------------------------------------


def rnorm(rng, mean=0.0, sd=1.0, size=None):
    return rng.normal(mean, sd, size)


def rgamma(rng, shape, rate, size=None):
    """Gamma draws in the shape/rate parameterization."""
    return rng.gamma(shape, 1.0 / np.asarray(rate, dtype=float), size)


def rchisq(rng, df, size=None):
    return rng.chisquare(df, size)


def rinvgamma(rng, shape, rate, size=None):
    """IG(shape, rate) draws as ``rate / Gamma(shape, 1)``."""
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(shape <= 0) or np.any(rate <= 0):
        raise ValueError("inverse gamma needs positive shape and rate")
    return rate / rng.standard_gamma(shape, size)


def rmvnorm(rng, mean, cov=None, chol=None):
    """Multivariate normal draw ``mean + L z`` with ``L L^T = cov``.

    Pass ``chol`` to reuse a factor across calls. A covariance that is not
    positive definite raises ``numpy.linalg.LinAlgError``.
    """
    if chol is None:
        chol = np.linalg.cholesky(np.asarray(cov, dtype=float))
    mean = np.asarray(mean, dtype=float)
    return mean + chol @ rng.standard_normal(mean.shape[-1])
