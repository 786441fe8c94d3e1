"""Posterior simulation for the tempered (Gibbs) posterior ``exp(-lam r(M)) pi(dM)``.

Uniform prior
    One chain per active rank ``k = 1..K`` evolves simultaneously.  Every
    round each chain gets a full sweep (all rows of ``U``, then all rows of
    ``V``), then one chain is selected with probability proportional to
    ``p_k exp(-lam r(U_k V_k'))`` and its matrix enters the running mean.

Conjugate baseline
    Gaussian factor columns with inverse-Gamma variances and the same
    tempered likelihood, sampled by blocked row updates.

Internally factor matrices of all chains are stacked as ``(rows, chains, K)``
so that a sweep is a handful of vectorised operations; the rows of ``U`` are
conditionally independent given ``V`` and vice versa.
"""

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import rng as rngmod
from .core import empirical_risk
from .errors import ConfigError, EmptyObservationsError
from .prior import FactorPair, log_rank_pmf, rank_indicator_pmf, sample_factors
from .tmvn import BoxTruncatedGaussian, coordinate_sweeps

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GibbsConfig:
    burn_in: int = 500
    iterations: int = 2000
    thin: int = 1
    inner_sweeps: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.burn_in < 0:
            raise ConfigError("burn_in must be nonnegative")
        if self.iterations < 1:
            raise ConfigError("iterations must be at least 1")
        if self.thin < 1:
            raise ConfigError("thin must be at least 1")
        if self.inner_sweeps < 1:
            raise ConfigError("inner_sweeps must be at least 1")


@dataclass
class GibbsResult:
    """Output of a sampler run.

    ``trace`` has one row per kept round and one column per monitored entry;
    ``k_selected`` and ``r_selected`` are aligned with it (for the conjugate
    sampler ``k_selected`` is the factor width and ``r_selected`` the
    current empirical risk).
    """

    estimate: np.ndarray
    lam: float
    n_draws: int
    monitored: list
    trace: np.ndarray
    k_selected: np.ndarray
    r_selected: np.ndarray
    max_abs_draw: float
    weights: np.ndarray = None
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    def mc_standard_error(self, batches=20):
        """Batch-means standard error of the monitored entries' posterior means."""
        return batch_means_se(self.trace, batches)


def batch_means_se(samples, batches=20):
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    b = min(batches, n)
    if b < 2:
        raise ValueError("need at least two draws for a standard error")
    size = n // b
    means = samples[: b * size].reshape(b, size, *samples.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / math.sqrt(b)


class _Design:
    """Sparse row/column incidence of the observations, built once per fit."""

    def __init__(self, obs):
        n = obs.n
        data = np.ones(n)
        t = np.arange(n)
        self.rows = obs.rows
        self.cols = obs.cols
        self.y = obs.y
        self.n = n
        self.by_row = sp.csr_matrix((data, (obs.rows, t)), shape=(obs.m, n))
        self.by_col = sp.csr_matrix((data, (obs.cols, t)), shape=(obs.p, n))


def _gram(A, W, y, scale):
    """Per-row ``scale * sum W W'`` and ``scale * sum y W`` over incident observations.

    ``W`` has shape ``(n, C, K)``; returns ``(rows, C, K, K)`` and ``(rows, C, K)``.
    """
    n, C, K = W.shape
    outer = np.einsum("nck,ncl->nckl", W, W)
    P = (A @ outer.reshape(n, C * K * K)).reshape(-1, C, K, K)
    h = (A @ (y[:, None, None] * W).reshape(n, C * K)).reshape(-1, C, K)
    return P * scale, h * scale


def _update_side(X, other, A, idx_other, y, scale, half, sweeps, rng):
    P, h = _gram(A, other[idx_other], y, scale)
    hi = np.broadcast_to(half, X.shape)
    coordinate_sweeps(P, h, X, -hi, hi, sweeps, rng)


def _risks(U, V, design):
    pred = np.einsum("ncl,ncl->nc", U[design.rows], V[design.cols])
    resid = design.y[:, None] - pred
    return np.mean(resid * resid, axis=0)


class ChainEnsemble:
    """``K`` uniform-prior chains, chain ``c`` having active rank ``c + 1``.

    ``U`` is stored as ``(m, K, K)`` (row, chain, column) and ``V`` as
    ``(p, K, K)``.
    """

    def __init__(self, U, V, lam, cfg):
        self.U = U
        self.V = V
        self.lam = float(lam)
        self.cfg = cfg
        self.weights = rank_indicator_pmf(cfg)
        self.mean_accumulator = np.zeros((U.shape[0], V.shape[0]))
        self.draws_accumulated = 0
        ks = np.arange(1, cfg.K + 1)
        self.halfwidths = np.stack([cfg.halfwidths(k) for k in ks])

    @classmethod
    def from_prior(cls, m, p, lam, cfg, rng):
        U = np.empty((m, cfg.K, cfg.K))
        V = np.empty((p, cfg.K, cfg.K))
        for c in range(cfg.K):
            fp = sample_factors(cfg, m, p, c + 1, rng)
            U[:, c, :] = fp.U
            V[:, c, :] = fp.V
        return cls(U, V, lam, cfg)

    @property
    def K(self):
        return self.cfg.K

    def chain(self, k):
        """The state of the chain with active rank ``k`` (1-based) as a FactorPair copy."""
        return FactorPair(self.U[:, k - 1, :].copy(), self.V[:, k - 1, :].copy(), k)

    @property
    def chains(self):
        return [self.chain(k) for k in range(1, self.K + 1)]

    def matrix(self, k):
        return self.U[:, k - 1, :] @ self.V[:, k - 1, :].T

    def sweep(self, design, sweeps, rng):
        scale = 2.0 * self.lam / design.n
        _update_side(self.U, self.V, design.by_row, design.cols, design.y, scale, self.halfwidths, sweeps, rng)
        _update_side(self.V, self.U, design.by_col, design.rows, design.y, scale, self.halfwidths, sweeps, rng)

    def risks(self, design):
        return _risks(self.U, self.V, design)

    def log_weights(self, design, risks=None):
        risks = self.risks(design) if risks is None else risks
        return log_rank_pmf(self.cfg) - self.lam * risks

    def accumulate(self, M):
        self.mean_accumulator += M
        self.draws_accumulated += 1

    @property
    def mean(self):
        if self.draws_accumulated == 0:
            raise RuntimeError("no draws accumulated yet")
        return self.mean_accumulator / self.draws_accumulated


def _softmax(logw):
    w = np.exp(logw - np.max(logw))
    return w / w.sum()


def _categorical(w, rng):
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(w), u * w.sum(), side="right"))
    return min(idx, len(w) - 1)


def row_conditional(i, V, obs, lam, k, cfg):
    """Conditional law of row ``i`` of ``U`` given ``V`` under the uniform prior.

    The precision is ``(2 lam / n) sum V_j V_j'`` over the observations in
    row ``i``; the mean is the minimum-norm solution of ``P mu = h`` with
    ``h = (2 lam / n) sum y V_j``.  A row without observations has zero
    precision and the conditional is flat on the prior box.
    """
    if obs.n == 0:
        raise EmptyObservationsError("row_conditional needs at least one observation")
    mask = obs.rows == i
    Vj = np.asarray(V, dtype=float)[obs.cols[mask]]
    scale = 2.0 * lam / obs.n
    P = scale * (Vj.T @ Vj)
    h = scale * (Vj.T @ obs.y[mask])
    mean = np.linalg.lstsq(P, h, rcond=None)[0] if mask.any() else np.zeros(cfg.K)
    half = cfg.halfwidths(k)
    return BoxTruncatedGaussian(mean, P, -half, half)


def gibbs_sweep(chain, obs, lam, cfg, gibbs_cfg, rng):
    """One sweep (rows of ``U`` then rows of ``V``) of a single uniform-prior chain."""
    ens = ChainEnsemble(chain.U[:, None, :].copy(), chain.V[:, None, :].copy(), lam, cfg)
    ens.halfwidths = cfg.halfwidths(chain.k)[None, :]
    ens.sweep(_Design(obs), gibbs_cfg.inner_sweeps, rng)
    return FactorPair(ens.U[:, 0, :], ens.V[:, 0, :], chain.k)


def select_chain(ensemble, obs, cfg, rng, design=None):
    """Pick a chain with probability ``∝ p_k exp(-lam r_k)``; updates ``ensemble.weights``.

    Returns the selected active rank (1-based).
    """
    design = design or _Design(obs)
    ensemble.weights = _softmax(ensemble.log_weights(design))
    return _categorical(ensemble.weights, rng) + 1


def _check_fit_inputs(obs, cfg):
    if obs.n == 0:
        raise EmptyObservationsError("cannot fit without observations")
    cfg.validate_for(obs.m, obs.p, obs.n)


def _monitored(monitored):
    return [(int(i), int(j)) for i, j in (monitored or [])]


def default_lambda(n):
    return n / 4.0


def sample_uniform_posterior(obs, cfg, lam=None, gibbs_cfg=None, monitored=None, rng=None):
    """Run the multi-chain sampler; returns a :class:`GibbsResult`.

    ``monitored`` lists 0-based entries whose selected-draw values are traced.
    """
    _check_fit_inputs(obs, cfg)
    gibbs_cfg = gibbs_cfg or GibbsConfig()
    lam = default_lambda(obs.n) if lam is None else float(lam)
    if not lam >= 0:
        raise ConfigError(f"lambda must be nonnegative, got {lam}")
    rng = rng if rng is not None else rngmod.stream(gibbs_cfg.seed, "fit", "uniform")
    monitored = _monitored(monitored)
    design = _Design(obs)
    t0 = time.perf_counter()

    ens = ChainEnsemble.from_prior(obs.m, obs.p, lam, cfg, rng)
    mi = np.array([e[0] for e in monitored], dtype=np.intp)
    mj = np.array([e[1] for e in monitored], dtype=np.intp)
    trace, ks, rs = [], [], []
    max_abs = 0.0
    total = gibbs_cfg.burn_in + gibbs_cfg.iterations
    for it in range(total):
        ens.sweep(design, gibbs_cfg.inner_sweeps, rng)
        risks = ens.risks(design)
        ens.weights = _softmax(ens.log_weights(design, risks))
        k = _categorical(ens.weights, rng) + 1
        kept = it >= gibbs_cfg.burn_in and (it - gibbs_cfg.burn_in) % gibbs_cfg.thin == 0
        if not kept:
            continue
        M = ens.matrix(k)
        ens.accumulate(M)
        max_abs = max(max_abs, float(np.max(np.abs(M))))
        trace.append(M[mi, mj])
        ks.append(k)
        rs.append(float(risks[k - 1]))
    seconds = time.perf_counter() - t0
    logger.debug("uniform-prior sampler: %d rounds in %.2fs", total, seconds)
    return GibbsResult(
        estimate=ens.mean,
        lam=lam,
        n_draws=ens.draws_accumulated,
        monitored=monitored,
        trace=np.array(trace).reshape(len(trace), len(monitored)),
        k_selected=np.array(ks),
        r_selected=np.array(rs),
        max_abs_draw=max_abs,
        weights=ens.weights,
        seconds=seconds,
        extra={"ensemble": ens},
    )


def fit_uniform_prior(obs, cfg, lam=None, gibbs_cfg=None):
    """Monte-Carlo posterior mean under the structured uniform prior."""
    return sample_uniform_posterior(obs, cfg, lam, gibbs_cfg).estimate


def _gaussian_rows(P, h, rng):
    """Draw ``x ~ N(P^-1 h, P^-1)`` for a batch of SPD precisions ``P``."""
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        # ill-conditioned at very large lambda; a relative ridge keeps the draw finite
        K = P.shape[-1]
        ridge = 1e-10 * np.trace(P, axis1=-2, axis2=-1)[..., None, None] / K
        P = P + ridge * np.eye(K)
        L = np.linalg.cholesky(P)
    Lt = np.swapaxes(L, -1, -2)
    # x = L'^-1 (L^-1 h + z), both solves reuse the Cholesky factor
    z = rng.standard_normal(h.shape)
    w = np.linalg.solve(L, h[..., None])[..., 0] + z
    return np.linalg.solve(Lt, w[..., None])[..., 0]


def sample_conjugate_posterior(obs, conj_cfg, lam=None, gibbs_cfg=None, monitored=None,
                               rng=None, fixed_gamma=None):
    """Gibbs sampler for Gaussian factors with inverse-Gamma column variances.

    Prior: ``U_il, V_jl ~ N(0, gamma_l)``, ``gamma_l ~ InvGamma(a, b)``.  The
    likelihood is tempered exactly as for the uniform prior, so row
    precisions are ``diag(1/gamma) + (2 lam / n) sum V_j V_j'``.  Passing
    ``fixed_gamma`` freezes the variances.
    """
    if obs.n == 0:
        raise EmptyObservationsError("cannot fit without observations")
    gibbs_cfg = gibbs_cfg or GibbsConfig()
    lam = default_lambda(obs.n) if lam is None else float(lam)
    rng = rng if rng is not None else rngmod.stream(gibbs_cfg.seed, "fit", "conjugate")
    monitored = _monitored(monitored)
    design = _Design(obs)
    m, p, K = obs.m, obs.p, conj_cfg.K
    a, b = conj_cfg.a, conj_cfg.b
    scale = 2.0 * lam / obs.n
    t0 = time.perf_counter()

    if fixed_gamma is not None:
        gamma = np.broadcast_to(np.asarray(fixed_gamma, dtype=float), (K,)).copy()
    else:
        gamma = np.ones(K)
    U = rng.standard_normal((m, 1, K)) * np.sqrt(gamma)
    V = rng.standard_normal((p, 1, K)) * np.sqrt(gamma)
    mi = np.array([e[0] for e in monitored], dtype=np.intp)
    mj = np.array([e[1] for e in monitored], dtype=np.intp)
    acc = np.zeros((m, p))
    draws = 0
    trace, rs, gammas = [], [], []
    max_abs = 0.0
    total = gibbs_cfg.burn_in + gibbs_cfg.iterations
    for it in range(total):
        prior_prec = np.diag(1.0 / gamma)
        P, h = _gram(design.by_row, V[design.cols], design.y, scale)
        U = _gaussian_rows(P + prior_prec, h, rng)
        P, h = _gram(design.by_col, U[design.rows], design.y, scale)
        V = _gaussian_rows(P + prior_prec, h, rng)
        if fixed_gamma is None:
            ss = np.sum(U[:, 0, :] ** 2, axis=0) + np.sum(V[:, 0, :] ** 2, axis=0)
            gamma = 1.0 / rng.gamma(a + 0.5 * (m + p), 1.0 / (b + 0.5 * ss))
        if it < gibbs_cfg.burn_in or (it - gibbs_cfg.burn_in) % gibbs_cfg.thin:
            continue
        M = U[:, 0, :] @ V[:, 0, :].T
        acc += M
        draws += 1
        max_abs = max(max_abs, float(np.max(np.abs(M))))
        trace.append(M[mi, mj])
        rs.append(float(_risks(U, V, design)[0]))
        gammas.append(gamma.copy())
    seconds = time.perf_counter() - t0
    logger.debug("conjugate sampler: %d rounds in %.2fs", total, seconds)
    return GibbsResult(
        estimate=acc / draws,
        lam=lam,
        n_draws=draws,
        monitored=monitored,
        trace=np.array(trace).reshape(len(trace), len(monitored)),
        k_selected=np.full(draws, K),
        r_selected=np.array(rs),
        max_abs_draw=max_abs,
        seconds=seconds,
        extra={"gamma": np.array(gammas)},
    )


def fit_conjugate_prior(obs, conj_cfg, lam=None, gibbs_cfg=None):
    """Monte-Carlo posterior mean under the conjugate Gaussian/inverse-Gamma prior."""
    return sample_conjugate_posterior(obs, conj_cfg, lam, gibbs_cfg).estimate


def chain_risk(fp, obs):
    """Empirical risk of a chain state."""
    return empirical_risk(obs, fp.matrix)
