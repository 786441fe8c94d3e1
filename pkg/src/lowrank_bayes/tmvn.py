"""Gaussian sampling under axis-aligned box truncation.

Univariate draws use the inverse CDF in the bulk, a uniform-proposal
rejection step on short intervals, and a truncated-exponential proposal
(Robert, 1995) when the interval lies more than ``TAIL`` standard deviations
from the mean.  The multivariate sampler is coordinate-wise Gibbs in the
canonical parametrisation ``exp(-x'Px/2 + h'x)``, so no covariance matrix is
ever formed and a singular precision is tolerated.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import BoxError, DimensionError, PrecisionError

TAIL = 5.0
NARROW = 0.25
DEFAULT_SWEEPS = 2


def _exp_tail(a, b, rng):
    """Standard normal truncated to ``[a, b]`` with ``a >= TAIL``."""
    alpha = 0.5 * (a + np.sqrt(a * a + 4.0))
    width = b - a
    peak = np.minimum(alpha, b)
    log_peak = -0.5 * (peak - alpha) ** 2
    mass = -np.expm1(-alpha * width)
    out = np.empty_like(a)
    todo = np.arange(a.size)
    while todo.size:
        u = rng.random(todo.size)
        z = a[todo] - np.log1p(-u * mass[todo]) / alpha[todo]
        v = rng.random(todo.size)
        ok = np.log(v) <= -0.5 * (z - alpha[todo]) ** 2 - log_peak[todo]
        ok &= z <= b[todo]
        out[todo[ok]] = z[ok]
        todo = todo[~ok]
    return out


def _uniform_reject(a, b, rng):
    """Standard normal on a short interval, by uniform proposals."""
    closest = np.clip(0.0, a, b)
    out = np.empty_like(a)
    todo = np.arange(a.size)
    while todo.size:
        x = a[todo] + (b[todo] - a[todo]) * rng.random(todo.size)
        v = rng.random(todo.size)
        ok = np.log(v) <= -0.5 * (x * x - closest[todo] ** 2)
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    return out


def _inverse_cdf(a, b, rng):
    u = rng.random(a.size)
    out = np.empty_like(a)
    upper = a >= 0
    # intervals right of zero: invert the survival function to keep precision
    if upper.any():
        sa, sb = ndtr(-a[upper]), ndtr(-b[upper])
        out[upper] = -ndtri(sa - u[upper] * (sa - sb))
    lower = ~upper
    if lower.any():
        fa, fb = ndtr(a[lower]), ndtr(b[lower])
        out[lower] = ndtri(fa + u[lower] * (fb - fa))
    return out


def standard_truncnorm(a, b, rng):
    """Vectorised draws of ``Z ~ N(0, 1)`` conditioned on ``a <= Z <= b``."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    with np.errstate(invalid="ignore"):
        flip = (a + b) < 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    z = np.empty_like(lo)
    tail = lo >= TAIL
    narrow = ~tail & ((hi - lo) < NARROW)
    bulk = ~(tail | narrow)
    # fixed branch order keeps the random stream consumption deterministic
    if tail.any():
        z[tail] = _exp_tail(lo[tail], hi[tail], rng)
    if narrow.any():
        z[narrow] = _uniform_reject(lo[narrow], hi[narrow], rng)
    if bulk.any():
        z[bulk] = _inverse_cdf(lo[bulk], hi[bulk], rng)
    z = np.clip(z, lo, hi)
    return np.where(flip, -z, z)


def truncnorm_rvs(mu, sigma, lo, hi, rng):
    """Draws from ``N(mu, sigma**2)`` restricted to ``[lo, hi]``, elementwise.

    ``lo == hi`` pins the value to ``lo`` without consuming randomness and
    ``sigma == inf`` (zero precision) gives a uniform draw on the box.
    """
    mu, sigma, lo, hi = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (mu, sigma, lo, hi)))
    shape = mu.shape
    mu, sigma, lo, hi = (x.ravel() for x in (mu, sigma, lo, hi))
    out = lo.copy()
    free = lo < hi
    flat = free & np.isinf(sigma)
    gauss = free & ~flat
    if flat.any():
        out[flat] = rng.uniform(lo[flat], hi[flat])
    if gauss.any():
        m, s = mu[gauss], sigma[gauss]
        z = standard_truncnorm((lo[gauss] - m) / s, (hi[gauss] - m) / s, rng)
        out[gauss] = np.clip(m + s * z, lo[gauss], hi[gauss])
    return out.reshape(shape)


def sample_truncated_univariate(mu, sigma, lo, hi, rng, size=None):
    """One draw (or ``size`` draws) from ``N(mu, sigma**2)`` conditioned on ``[lo, hi]``."""
    if not lo < hi:
        raise BoxError(f"need lo < hi, got [{lo}, {hi}]")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    n = 1 if size is None else size
    draws = truncnorm_rvs(np.full(n, float(mu)), sigma, lo, hi, rng)
    return float(draws[0]) if size is None else draws


@dataclass(frozen=True)
class BoxTruncatedGaussian:
    """``N(mean, precision^-1)`` restricted to ``lower <= x <= upper``.

    ``precision`` may be singular; directions it does not constrain are flat
    inside the box.
    """

    mean: np.ndarray
    precision: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        P = np.asarray(self.precision, dtype=float)
        lower = np.broadcast_to(np.asarray(self.lower, dtype=float), mean.shape).copy()
        upper = np.broadcast_to(np.asarray(self.upper, dtype=float), mean.shape).copy()
        d = mean.shape[0]
        if mean.ndim != 1 or P.shape != (d, d):
            raise DimensionError(f"mean of length {d} needs a {d}x{d} precision, got {P.shape}")
        if np.any(lower > upper):
            raise BoxError("box lower bounds must not exceed upper bounds")
        scale = max(1.0, float(np.max(np.abs(P), initial=0.0)))
        if np.max(np.abs(P - P.T), initial=0.0) > 1e-10 * scale:
            raise PrecisionError("precision matrix is not symmetric")
        if d and np.linalg.eigvalsh(0.5 * (P + P.T))[0] < -1e-10 * scale:
            raise PrecisionError("precision matrix has a negative eigenvalue")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "precision", 0.5 * (P + P.T))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self):
        return self.mean.shape[0]

    @property
    def linear_term(self):
        """``h = P @ mean``, the canonical-form linear coefficient."""
        return self.precision @ self.mean

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


def coordinate_sweeps(P, h, x, lower, upper, sweeps, rng):
    """Coordinate-wise Gibbs on a batch of box-truncated Gaussians, in place.

    ``P`` has shape ``(..., d, d)`` and ``h``, ``x``, ``lower``, ``upper``
    shape ``(..., d)``.  The target density of each batch member is
    proportional to ``exp(-x'Px/2 + h'x)`` on its box.  Coordinates with a
    zero diagonal precision are resampled uniformly.
    """
    d = x.shape[-1]
    for _ in range(sweeps):
        for l in range(d):
            lo, hi = lower[..., l], upper[..., l]
            free = lo < hi
            if not free.any():
                x[..., l] = lo
                continue
            pll = P[..., l, l]
            rest = np.einsum("...j,...j->...", P[..., l, :], x) - pll * x[..., l]
            has_prec = pll > 0
            safe = np.where(has_prec, pll, 1.0)
            mu = np.where(has_prec, (h[..., l] - rest) / safe, 0.0)
            sigma = np.where(has_prec, 1.0 / np.sqrt(safe), np.inf)
            x[..., l] = truncnorm_rvs(mu, sigma, lo, hi, rng)
    return x


def _check_active_pd(dist):
    P = dist.precision
    active = (dist.lower < dist.upper) & (np.diag(P) > 0)
    if not active.any():
        return
    sub = P[np.ix_(active, active)]
    eig = np.linalg.eigvalsh(sub)
    if eig[0] <= 1e-12 * max(eig[-1], 1e-300):
        raise PrecisionError("precision is not positive definite on the active coordinates")


def sample_box_tmvn(dist, current, sweeps=DEFAULT_SWEEPS, rng=None):
    """Run ``sweeps`` coordinate-Gibbs sweeps from ``current`` and return the new state.

    The chain leaves the truncated Gaussian invariant.  Zero-width coordinates
    are pinned to their bound.
    """
    if rng is None:
        raise ValueError("an explicit numpy Generator is required")
    x = np.array(current, dtype=float)
    if x.shape != dist.mean.shape:
        raise DimensionError(f"current state has shape {x.shape}, expected {dist.mean.shape}")
    if not dist.contains(x):
        raise BoxError("current state lies outside the truncation box")
    if sweeps < 1:
        raise ValueError("sweeps must be positive")
    _check_active_pd(dist)
    coordinate_sweeps(dist.precision, dist.linear_term, x, dist.lower, dist.upper, sweeps, rng)
    return x

