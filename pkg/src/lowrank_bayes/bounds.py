"""Explicit constants and the oracle bound for the estimator run at ``lambda*``."""

import math
from dataclasses import dataclass, replace

from .errors import ConfigError


@dataclass(frozen=True)
class NoiseSpec:
    """Sub-exponential noise: ``E e^2 <= sigma^2`` and ``E|e|^k <= sigma^2 k! xi^(k-2)``."""

    sigma: float = 1.0
    xi: float = 1.0

    def __post_init__(self):
        if not (self.sigma > 0 and self.xi > 0):
            raise ConfigError(f"sigma and xi must be positive, got sigma={self.sigma}, xi={self.xi}")


@dataclass(frozen=True)
class AuxiliaryConstants:
    w: float
    C_sigma_L: float
    alpha: float
    beta: float


@dataclass(frozen=True)
class BoundInputs:
    m: int
    p: int
    n: int
    rank: int
    approx_error: float
    epsilon: float
    L: float
    tau: float
    noise: NoiseSpec = NoiseSpec()

    def __post_init__(self):
        if min(self.m, self.p, self.n) < 1:
            raise ConfigError("m, p and n must be positive")
        if self.rank < 0:
            raise ConfigError("rank must be nonnegative")
        if self.approx_error < 0:
            raise ConfigError("approx_error must be nonnegative")
        if not 0 < self.epsilon < 1:
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0 < self.tau < 1:
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau}")
        if not self.L > 0:
            raise ConfigError("L must be positive")

    def with_n(self, n):
        return replace(self, n=n)


def constant_C(L, noise):
    """``max(12 L (2 xi + 3 L), 8 sigma^2 + 2 (3 L)^2)``."""
    return max(12.0 * L * (2.0 * noise.xi + 3.0 * L), 8.0 * noise.sigma ** 2 + 2.0 * (3.0 * L) ** 2)


def lambda_star(n, L, noise):
    """Theoretical inverse temperature ``n / (2 C)``."""
    return n / (2.0 * constant_C(L, noise))


def lambda_gauss(n, sigma=1.0):
    """``n / (2 sigma^2)``: the exact Bayes posterior for ``N(0, sigma^2)`` noise."""
    return n / (2.0 * sigma ** 2)


def lambda_experiment(n, sigma=1.0):
    """``n / (4 sigma^2)``, the setting used in the simulation study."""
    return n / (4.0 * sigma ** 2)


LAMBDA_MODES = ("experiment", "star", "gauss")


def lambda_for(mode, n, L, noise):
    if mode == "experiment":
        return lambda_experiment(n, noise.sigma)
    if mode == "star":
        return lambda_star(n, L, noise)
    if mode == "gauss":
        return lambda_gauss(n, noise.sigma)
    raise ConfigError(f"unknown lambda mode {mode!r}; expected one of {LAMBDA_MODES}")


def auxiliary_constants(lam, n, L, noise):
    """Bernstein-step constants ``(w, C_sigma_L, alpha, beta)``; requires ``0 < lam < n / w``."""
    w = 12.0 * L * (2.0 * noise.xi + 3.0 * L)
    c_sl = 2.0 * (4.0 * noise.sigma ** 2 + (3.0 * L) ** 2)
    if not 0 < lam < n / w:
        raise ConfigError(f"lambda={lam} outside (0, n/w) = (0, {n / w:.6g})")
    corr = lam * lam * c_sl / (2.0 * n * (1.0 - w * lam / n))
    return AuxiliaryConstants(w=w, C_sigma_L=c_sl, alpha=lam - corr, beta=lam + corr)


def bound_terms(inp, log_term="sharp"):
    """The individual pieces of the bound, keyed by name.

    ``log_term="sharp"`` uses ``log(36 n / (m + p))``; ``"coarse"`` uses
    ``log(36 K)`` with ``K = min(m, p)`` and ``log(1/(1 - tau))`` in place of
    ``log(tau/(1 - tau))``.
    """
    if inp.n < max(inp.m, inp.p):
        raise ConfigError(f"n={inp.n} must be at least max(m, p)={max(inp.m, inp.p)}")
    mp, n, r, tau = inp.m + inp.p, inp.n, inp.rank, inp.tau
    C = constant_C(inp.L, inp.noise)
    if log_term == "sharp":
        dim_log = math.log(36.0 * n / mp)
        tau_term = 2.0 * math.log(tau / (1.0 - tau))
    elif log_term == "coarse":
        dim_log = math.log(36.0 * min(inp.m, inp.p))
        tau_term = 2.0 * math.log(1.0 / (1.0 - tau))
    else:
        raise ConfigError(f"unknown log_term {log_term!r}")
    return {
        "discretisation": 3.0 * inp.L ** 2 * mp / (18.0 * n) * (mp / (9.0 * n) + 3.0),
        "approximation": 3.0 * inp.approx_error,
        "complexity": 8.0 * C / n * 0.5 * mp * r * dim_log,
        "confidence": 8.0 * C / n * math.log(2.0 / inp.epsilon),
        "rank_prior": 8.0 * C / n * 2.0 * r * math.log(1.0 / tau),
        "tau_normaliser": 8.0 * C / n * tau_term,
    }


def oracle_bound(inp, log_term="sharp"):
    """Right-hand side of the explicit oracle inequality, holding with probability ``1 - epsilon``."""
    t = bound_terms(inp, log_term)
    return (
        t["discretisation"] + t["approximation"] + t["complexity"]
        + t["confidence"] + t["rank_prior"] + t["tau_normaliser"]
    )


def optimal_c(m, p, n, L, K):
    """Localisation radius ``sqrt((m + p) L / (18 n K))`` used to derive the bound."""
    return math.sqrt((m + p) * L / (18.0 * n * K))
