"""Priors over the factor pair ``(U, V)``.

The structured uniform prior draws an active rank ``k`` from a truncated
geometric law, then fills the first ``k`` columns of ``U`` and ``V`` uniformly
on ``[-delta, delta]`` and the remaining ones on ``[-kappa, kappa]``.  With
``kappa == 0`` the trailing columns are an exact point mass at zero.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError


@dataclass(frozen=True)
class PriorConfig:
    L: float = 50.0
    K: int = 5
    tau: float = 0.5
    kappa: float = 0.0

    def __post_init__(self):
        if not self.L > 0:
            raise ConfigError(f"L must be positive, got {self.L}")
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError(f"K must be a positive integer, got {self.K}")
        if not 0 < self.tau < 1:
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau}")
        if self.kappa < 0:
            raise ConfigError(f"kappa must be nonnegative, got {self.kappa}")
        object.__setattr__(self, "K", int(self.K))

    @property
    def delta(self):
        """Slab half-width ``sqrt(2 L / K)``; never read from configuration."""
        return math.sqrt(2.0 * self.L / self.K)

    def kappa_max(self, n):
        return math.sqrt(self.L / (10.0 * self.K)) / n

    def validate_for(self, m, p, n):
        """Checks that depend on the data: ``K <= min(m, p)`` and the spike width."""
        if self.K > min(m, p):
            raise ConfigError(f"K={self.K} exceeds min(m, p)={min(m, p)}")
        if self.kappa > self.kappa_max(n):
            raise ConfigError(
                f"kappa={self.kappa} exceeds (1/n) sqrt(L/(10K))={self.kappa_max(n):.3g} for n={n}"
            )

    def halfwidths(self, k):
        """Per-column box half-widths for active rank ``k`` (1-based)."""
        h = np.full(self.K, float(self.kappa))
        h[:k] = self.delta
        return h


@dataclass(frozen=True)
class ConjugatePriorConfig:
    """Gaussian factors with per-column inverse-Gamma variances."""

    a: float = 1.0
    b: float = 0.01
    K: int = 5

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ConfigError(f"inverse-Gamma parameters must be positive, got a={self.a}, b={self.b}")
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError(f"K must be a positive integer, got {self.K}")
        object.__setattr__(self, "K", int(self.K))


@dataclass
class FactorPair:
    """Chain state: ``U`` (m x K), ``V`` (p x K) and the active rank ``k``."""

    U: np.ndarray
    V: np.ndarray
    k: int

    @property
    def matrix(self):
        return self.U @ self.V.T

    def check(self, cfg, atol=0.0):
        """Raise ``AssertionError`` if the box invariants are violated."""
        K = cfg.K
        if self.U.shape[1] != K or self.V.shape[1] != K:
            raise DimensionError(f"factor width must be K={K}")
        if not 1 <= self.k <= K:
            raise AssertionError(f"active rank {self.k} outside 1..{K}")
        h = cfg.halfwidths(self.k)
        assert np.all(np.abs(self.U) <= h + atol), "U outside its prior box"
        assert np.all(np.abs(self.V) <= h + atol), "V outside its prior box"
        # each entry is a sum of K products bounded by delta**2 = 2L/K
        assert np.max(np.abs(self.matrix), initial=0.0) <= 2.0 * cfg.L * (1 + 1e-12) + atol


def rank_indicator_pmf(cfg):
    """``P(k) = tau**(k-1) (1 - tau) / (1 - tau**K)`` for ``k = 1..K``."""
    k = np.arange(cfg.K)
    return cfg.tau ** k * ((1.0 - cfg.tau) / (1.0 - cfg.tau ** cfg.K))


def log_rank_pmf(cfg):
    k = np.arange(cfg.K)
    return k * math.log(cfg.tau) + math.log1p(-cfg.tau) - math.log1p(-(cfg.tau ** cfg.K))


def sample_factors(cfg, m, p, k, rng):
    """Draw ``(U, V)`` from the prior conditional on active rank ``k``."""
    U = np.zeros((m, cfg.K))
    V = np.zeros((p, cfg.K))
    U[:, :k] = rng.uniform(-cfg.delta, cfg.delta, size=(m, k))
    V[:, :k] = rng.uniform(-cfg.delta, cfg.delta, size=(p, k))
    if cfg.kappa > 0 and k < cfg.K:
        U[:, k:] = rng.uniform(-cfg.kappa, cfg.kappa, size=(m, cfg.K - k))
        V[:, k:] = rng.uniform(-cfg.kappa, cfg.kappa, size=(p, cfg.K - k))
    return FactorPair(U, V, k)


def sample_prior(cfg, m, p, rng):
    if cfg.K > min(m, p):
        raise ConfigError(f"K={cfg.K} exceeds min(m, p)={min(m, p)}")
    k = int(rng.choice(cfg.K, p=rank_indicator_pmf(cfg))) + 1
    return sample_factors(cfg, m, p, k, rng)


def log_prior_density(fp, cfg):
    """Log density of ``(k, U, V)`` under the uniform prior.

    Spike columns with ``kappa == 0`` are Dirac factors: they add 0 when
    exactly zero and make the density vanish otherwise.
    """
    U, V, k = np.asarray(fp.U), np.asarray(fp.V), fp.k
    if not 1 <= k <= cfg.K:
        return -math.inf
    m, p = U.shape[0], V.shape[0]
    h = cfg.halfwidths(k)
    if np.any(np.abs(U) > h) or np.any(np.abs(V) > h):
        return -math.inf
    out = float(log_rank_pmf(cfg)[k - 1])
    out -= (m + p) * k * math.log(2.0 * cfg.delta)
    if cfg.kappa > 0:
        out -= (m + p) * (cfg.K - k) * math.log(2.0 * cfg.kappa)
    return out
