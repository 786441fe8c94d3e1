"""Brute-force reference computations for validating the samplers.

Only usable on tiny problems; not part of the public package surface.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import CompletionError
from .prior import log_rank_pmf

MAX_DIMS = 4
MIN_ACCEPTANCE = 1e-6


class OracleError(CompletionError):
    pass


@dataclass(frozen=True)
class QuadratureGrid:
    points_per_dim: int
    dims: int

    def __post_init__(self):
        if self.points_per_dim < 11:
            raise OracleError("points_per_dim must be at least 11")
        if self.dims > MAX_DIMS:
            raise OracleError(f"quadrature limited to {MAX_DIMS} latent dimensions, got {self.dims}")


def _midpoints(half, count):
    edges = np.linspace(-half, half, count + 1)
    return 0.5 * (edges[:-1] + edges[1:])


def quadrature_posterior_mean(obs, cfg, lam, grid):
    """Posterior mean of ``U V'`` by midpoint quadrature over the prior boxes.

    Integrates ``exp(-lam r(U V'))`` against the uniform prior for each
    active rank and mixes the strata with the rank weights.
    """
    m, p, K = obs.m, obs.p, cfg.K
    dims = (m + p) * K
    if dims > MAX_DIMS:
        raise OracleError(f"quadrature limited to {MAX_DIMS} latent dimensions, got {dims}")
    if grid.dims != dims:
        raise OracleError(f"grid declares {grid.dims} dimensions, the problem has {dims}")
    logp = log_rank_pmf(cfg)
    log_z, numer = [], []
    for k in range(1, K + 1):
        half = cfg.halfwidths(k)
        # latent coordinates: U (m x K) then V (p x K), row-major
        axes = []
        for _ in range(m + p):
            for l in range(K):
                axes.append(_midpoints(half[l], grid.points_per_dim) if half[l] > 0 else np.zeros(1))
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=1)
        U = pts[:, : m * K].reshape(-1, m, K)
        V = pts[:, m * K:].reshape(-1, p, K)
        M = np.einsum("gik,gjk->gij", U, V)
        resid = obs.y[None, :] - M[:, obs.rows, obs.cols]
        logf = -lam * np.mean(resid * resid, axis=1)
        # the uniform prior density is constant on the grid, so prior
        # integrals are plain averages over grid points
        lz = logsumexp(logf) - np.log(len(logf))
        w = np.exp(logf - logf.max())
        log_z.append(logp[k - 1] + lz)
        numer.append(np.tensordot(w, M, axes=1) / w.sum())
    mix = np.exp(np.array(log_z) - logsumexp(log_z))
    return np.tensordot(mix, np.array(numer), axes=1)


def rejection_tmvn(dist, count, rng, batch=200_000, pilot=2_000_000):
    """Exact i.i.d. draws from a box-truncated Gaussian by naive rejection.

    Proposals come from the untruncated Gaussian, so ``dist.precision`` must
    be positive definite.  Raises :class:`OracleError` when the estimated
    acceptance rate is below ``MIN_ACCEPTANCE``.
    """
    try:
        L = np.linalg.cholesky(dist.precision)
    except np.linalg.LinAlgError:
        raise OracleError("rejection oracle needs a positive-definite precision") from None
    d = dist.dim

    def propose(size):
        z = rng.standard_normal((size, d))
        # x = mean + L^-T z has covariance (L L')^-1
        x = dist.mean + np.linalg.solve(L.T, z.T).T
        keep = np.all((x >= dist.lower) & (x <= dist.upper), axis=1)
        return x[keep]

    first = propose(pilot)
    rate = len(first) / pilot
    if rate < MIN_ACCEPTANCE:
        raise OracleError(
            f"acceptance rate {rate:.2e} too low; the tail-robust path cannot be tested by rejection"
        )
    out = [first]
    got = len(first)
    while got < count:
        more = propose(batch)
        out.append(more)
        got += len(more)
    samples = np.concatenate(out)[:count]
    return samples, rate
