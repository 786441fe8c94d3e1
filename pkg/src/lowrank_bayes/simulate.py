"""Synthetic data and the four simulation series.

Series 1: rank-2 truth ``U0 V0'``, Gaussian noise.
Series 2: series 1 plus ``(1/100) Z0 W0'`` with 50 extra columns.
Series 3: series-1 truth, uniform noise on ``[-1, 1]``.
Series 4: series-1 truth, Student-t noise with 5 degrees of freedom.

Factor entries are ``N(0, 20 / sqrt(m))``; by default the second argument is
read as a variance (``gaussian_param_is_variance``).
"""

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngmod
from .bounds import NoiseSpec, lambda_for
from .core import ObservationSet, SamplingDistribution, rmse_per_entry, weighted_frobenius_sq
from .errors import ConfigError
from .gibbs import GibbsConfig, sample_conjugate_posterior, sample_uniform_posterior
from .prior import ConjugatePriorConfig, PriorConfig

logger = logging.getLogger(__name__)

SERIES = (1, 2, 3, 4)
ESTIMATORS = ("uniform", "conjugate")


@dataclass(frozen=True)
class NoiseModel:
    kind: str = "gaussian"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform", "student_t"):
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if self.kind == "student_t" and not self.scale > 2:
            raise ConfigError("Student-t noise needs more than 2 degrees of freedom")
        if not self.scale > 0:
            raise ConfigError("noise parameter must be positive")

    @classmethod
    def gaussian(cls, sd=1.0):
        return cls("gaussian", sd)

    @classmethod
    def uniform(cls, half_width=1.0):
        return cls("uniform", half_width)

    @classmethod
    def student_t(cls, dof=5.0):
        return cls("student_t", dof)

    @property
    def variance(self):
        if self.kind == "gaussian":
            return self.scale ** 2
        if self.kind == "uniform":
            return self.scale ** 2 / 3.0
        return self.scale / (self.scale - 2.0)

    def sample(self, size, rng):
        if self.kind == "gaussian":
            return rng.normal(0.0, self.scale, size)
        if self.kind == "uniform":
            return rng.uniform(-self.scale, self.scale, size)
        return rng.standard_t(self.scale, size)


def series_noise(series):
    return {1: NoiseModel.gaussian(1.0), 2: NoiseModel.gaussian(1.0),
            3: NoiseModel.uniform(1.0), 4: NoiseModel.student_t(5.0)}[series]


def series_tau(series):
    return 0.25 if series == 4 else 0.5


def _factor(rng, m, r, variance_reading):
    v = 20.0 / math.sqrt(m)
    sd = math.sqrt(v) if variance_reading else v
    return rng.normal(0.0, sd, size=(m, r))


def gen_ground_truth(series, m, rng, gaussian_param_is_variance=True):
    """Square ``m x m`` ground-truth matrix for the given series."""
    if series not in SERIES:
        raise ConfigError(f"series must be one of {SERIES}, got {series}")
    if series == 2 and m < 50:
        raise ConfigError(f"series 2 needs m >= 50 for its m x 50 factors, got m={m}")
    U0 = _factor(rng, m, 2, gaussian_param_is_variance)
    V0 = _factor(rng, m, 2, gaussian_param_is_variance)
    M0 = U0 @ V0.T
    if series == 2:
        Z0 = _factor(rng, m, 50, gaussian_param_is_variance)
        W0 = _factor(rng, m, 50, gaussian_param_is_variance)
        M0 = M0 + (Z0 @ W0.T) / 100.0
    return M0


def sample_observations(M0, Pi, n, noise, rng, without_replacement=False):
    """``n`` draws ``(X_t, M0[X_t] + e_t)`` with ``X_t ~ Pi``."""
    M0 = np.asarray(M0, dtype=float)
    m, p = M0.shape
    if Pi.shape != (m, p):
        raise ConfigError(f"sampling distribution shape {Pi.shape} does not match {M0.shape}")
    if n < 1:
        raise ConfigError("need at least one observation")
    flat = Pi.weights.ravel()
    if without_replacement:
        if n > np.count_nonzero(flat):
            raise ConfigError("cannot draw more distinct entries than the support of Pi")
        idx = rng.choice(flat.size, size=n, replace=False, p=flat)
    else:
        idx = rng.choice(flat.size, size=n, replace=True, p=flat)
    rows, cols = np.divmod(idx, p)
    y = M0[rows, cols] + noise.sample(n, rng)
    return ObservationSet(m, p, rows, cols, y)


@dataclass(frozen=True)
class ExperimentSpec:
    series: int = 1
    m: int = 100
    observe_fraction: float = 0.2
    seed: int = 0
    replication: int = 0
    estimators: tuple = ESTIMATORS
    prior: PriorConfig = None
    conjugate: ConjugatePriorConfig = ConjugatePriorConfig()
    gibbs: GibbsConfig = GibbsConfig()
    lambda_mode: str = "experiment"
    noise_spec: NoiseSpec = NoiseSpec()
    gaussian_param_is_variance: bool = True
    without_replacement: bool = False
    monitored_entries: int = 4
    sampling: SamplingDistribution = None

    def __post_init__(self):
        if self.series not in SERIES:
            raise ConfigError(f"series must be one of {SERIES}, got {self.series}")
        if not 0 < self.observe_fraction <= 1:
            raise ConfigError("observe_fraction must lie in (0, 1]")
        if self.series == 2 and self.m < 50:
            raise ConfigError(f"series 2 needs m >= 50 for its m x 50 factors, got m={self.m}")
        for e in self.estimators:
            if e not in ESTIMATORS:
                raise ConfigError(f"unknown estimator {e!r}")
        if self.prior is None:
            object.__setattr__(self, "prior", PriorConfig(L=50.0, K=5, tau=series_tau(self.series), kappa=0.0))

    @property
    def n(self):
        return int(round(self.observe_fraction * self.m * self.m))

    def replicate(self, r):
        return replace(self, replication=r)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    M0: np.ndarray
    obs: ObservationSet
    rmse: dict
    seconds: dict
    seeds: dict
    estimates: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    weighted_error: dict = field(default_factory=dict)

    def rows(self):
        """CSV records ``series,m,replication,estimator,rmse,seconds,seed``."""
        s = self.spec
        return [
            {"series": s.series, "m": s.m, "replication": s.replication, "estimator": e,
             "rmse": self.rmse[e], "seconds": self.seconds[e], "seed": self.seeds[e]}
            for e in s.estimators
        ]


def simulate_data(spec):
    """Ground truth and observations for one replication."""
    r = spec.replication
    M0 = gen_ground_truth(spec.series, spec.m, rngmod.stream(spec.seed, "replication", r, "truth"),
                          spec.gaussian_param_is_variance)
    Pi = spec.sampling or SamplingDistribution.uniform(spec.m, spec.m)
    obs = sample_observations(M0, Pi, spec.n, series_noise(spec.series),
                              rngmod.stream(spec.seed, "replication", r, "observations"),
                              spec.without_replacement)
    return M0, obs


def run_experiment(spec, keep_fits=False):
    """Simulate one replication and fit every requested estimator."""
    M0, obs = simulate_data(spec)
    Pi = spec.sampling or SamplingDistribution.uniform(spec.m, spec.m)
    lam = lambda_for(spec.lambda_mode, obs.n, spec.prior.L, spec.noise_spec)
    pick = rngmod.stream(spec.seed, "replication", spec.replication, "monitor")
    cells = pick.choice(spec.m * spec.m, size=min(spec.monitored_entries, spec.m * spec.m), replace=False)
    monitored = [tuple(divmod(int(c), spec.m)) for c in cells]
    res = ExperimentResult(spec, M0, obs, {}, {}, {})
    for est in spec.estimators:
        seed = rngmod.derive_seed(spec.seed, "replication", spec.replication, est)
        gcfg = replace(spec.gibbs, seed=seed)
        t0 = time.perf_counter()
        if est == "uniform":
            fit = sample_uniform_posterior(obs, spec.prior, lam, gcfg, monitored)
        else:
            fit = sample_conjugate_posterior(obs, replace(spec.conjugate, K=spec.prior.K), lam, gcfg, monitored)
        res.seconds[est] = time.perf_counter() - t0
        res.rmse[est] = rmse_per_entry(fit.estimate, M0)
        res.weighted_error[est] = weighted_frobenius_sq(fit.estimate - M0, Pi)
        res.seeds[est] = seed
        res.estimates[est] = fit.estimate
        if keep_fits:
            fit.extra.pop("ensemble", None)
            res.fits[est] = fit
        logger.info("series %d m=%d rep %d %s: rmse %.4f (%.1fs)", spec.series, spec.m,
                    spec.replication, est, res.rmse[est], res.seconds[est])
    return res


def _run_one(args):
    spec, keep_fits = args
    return run_experiment(spec, keep_fits)


def run_replications(spec, replications, workers=1, keep_fits=False):
    """Run ``replications`` seeded replications; results come back in replication order."""
    if replications < 1:
        raise ConfigError("replications must be at least 1")
    jobs = [(spec.replicate(r), keep_fits) for r in range(replications)]
    if workers <= 1 or replications == 1:
        return [_run_one(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))
