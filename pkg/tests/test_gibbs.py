import math

import numpy as np
import pytest

from lowrank_bayes.core import ObservationSet, empirical_risk
from lowrank_bayes.errors import EmptyObservationsError
from lowrank_bayes.gibbs import (
    ChainEnsemble,
    GibbsConfig,
    _Design,
    fit_uniform_prior,
    gibbs_sweep,
    row_conditional,
    sample_conjugate_posterior,
    sample_uniform_posterior,
    select_chain,
)
from lowrank_bayes.oracles import QuadratureGrid, quadrature_posterior_mean
from lowrank_bayes.prior import ConjugatePriorConfig, PriorConfig, rank_indicator_pmf, sample_factors

from conftest import random_obs


def test_row_without_observations_is_flat():
    obs = ObservationSet.from_triples(3, 2, [(1, 1, 1.0), (2, 2, -1.0)])
    cfg = PriorConfig(L=1.0, K=2, tau=0.5)
    d = row_conditional(2, np.ones((2, 2)), obs, 10.0, 2, cfg)
    assert np.all(d.precision == 0)
    assert np.allclose(d.upper, cfg.halfwidths(2)) and np.allclose(d.lower, -cfg.halfwidths(2))


def test_scalar_row_conditional():
    obs = ObservationSet.from_triples(1, 1, [(1, 1, 0.6)])
    cfg = PriorConfig(L=1.0, K=1, tau=0.5)
    v, lam = 0.8, 3.0
    d = row_conditional(0, np.array([[v]]), obs, lam, 1, cfg)
    assert d.precision[0, 0] == pytest.approx(2 * lam * v * v)
    assert d.mean[0] == pytest.approx(0.6 / v)


def test_row_conditional_mode_matches_grid_search(rng):
    obs = ObservationSet.from_triples(3, 3, [(1, 1, 0.3), (1, 2, -0.2), (1, 3, 0.4),
                                             (2, 2, 0.1), (3, 1, 0.5), (3, 3, -0.3)])
    cfg = PriorConfig(L=1.0, K=2, tau=0.5)
    V = np.array([[0.5, -0.2], [0.1, 0.6], [0.4, 0.3]])
    d = row_conditional(0, V, obs, 5.0, 2, cfg)
    half = cfg.halfwidths(2)
    g = np.linspace(-half[0], half[0], 801)
    U0, U1 = np.meshgrid(g, g, indexing="ij")
    pts = np.stack([U0.ravel(), U1.ravel()], axis=1)
    mask = obs.rows == 0
    risk = ((obs.y[mask][None, :] - pts @ V[obs.cols[mask]].T) ** 2).sum(axis=1)
    best = pts[np.argmin(risk)]
    # the unconstrained mean lies inside the box here, so it is the mode
    assert d.contains(d.mean)
    assert np.allclose(d.mean, best, atol=2 * (g[1] - g[0]))


def test_row_conditional_rejects_empty_set():
    empty = ObservationSet(2, 2, np.array([], int), np.array([], int), np.array([]))
    with pytest.raises(EmptyObservationsError):
        row_conditional(0, np.ones((2, 1)), empty, 1.0, 1, PriorConfig(L=1, K=1))


def test_sweep_decreases_risk(rng):
    obs = random_obs(rng, 8, 6, 30, scale=1.0)
    cfg = PriorConfig(L=1.0, K=2, tau=0.5)
    gcfg = GibbsConfig(inner_sweeps=1)
    first, last = [], []
    for _ in range(60):
        fp = sample_factors(cfg, 8, 6, 2, rng)
        fp = gibbs_sweep(fp, obs, 200.0, cfg, gcfg, rng)
        first.append(empirical_risk(obs, fp.matrix))
        for _ in range(29):
            fp = gibbs_sweep(fp, obs, 200.0, cfg, gcfg, rng)
        last.append(empirical_risk(obs, fp.matrix))
    assert np.median(last) < np.median(first)


def test_spike_columns_stay_zero(rng):
    obs = random_obs(rng, 5, 4, 12, scale=1.0)
    cfg = PriorConfig(L=1.0, K=3, tau=0.5, kappa=0.0)
    fp = sample_factors(cfg, 5, 4, 1, rng)
    gcfg = GibbsConfig()
    for _ in range(1000):
        fp = gibbs_sweep(fp, obs, 20.0, cfg, gcfg, rng)
        fp.check(cfg)
        assert np.all(fp.U[:, 1:] == 0) and np.all(fp.V[:, 1:] == 0)


def test_sweep_seed_replay(rng):
    obs = random_obs(rng, 5, 4, 12, scale=1.0)
    cfg = PriorConfig(L=1.0, K=2, tau=0.5, kappa=0.01)
    start = sample_factors(cfg, 5, 4, 2, rng)
    outs = []
    for _ in range(2):
        r = np.random.default_rng(5)
        fp = start
        for _ in range(20):
            fp = gibbs_sweep(fp, obs, 20.0, cfg, GibbsConfig(), r)
        outs.append(fp.matrix)
    assert np.array_equal(outs[0], outs[1])


def _identical_ensemble(cfg, rng, m=3, p=3):
    fp = sample_factors(cfg, m, p, cfg.K, rng)
    U = np.repeat(fp.U[:, None, :], cfg.K, axis=1)
    V = np.repeat(fp.V[:, None, :], cfg.K, axis=1)
    return ChainEnsemble(U, V, 5.0, cfg)


def test_identical_chains_select_by_prior(rng):
    cfg = PriorConfig(L=1.0, K=4, tau=0.3, kappa=0.1)
    ens = _identical_ensemble(cfg, rng)
    obs = random_obs(rng, 3, 3, 6, scale=1.0)
    select_chain(ens, obs, cfg, rng)
    assert np.allclose(ens.weights, rank_indicator_pmf(cfg), rtol=1e-12)


def test_dominant_chain_is_selected(rng):
    cfg = PriorConfig(L=1.0, K=3, tau=0.5)
    obs = random_obs(rng, 3, 3, 9, scale=0.2)
    ens = _identical_ensemble(cfg, rng)
    ens.U[:, 1, :] = 0.0   # chain k=2 predicts zero, the others are random
    ens.lam = 1e6
    ens.U[:, [0, 2], :] += 0.5
    design = _Design(obs)
    r = ens.risks(design)
    assert np.argmin(r) == 1
    assert select_chain(ens, obs, cfg, rng, design) == 2


def test_selection_frequencies_match_softmax(rng):
    cfg = PriorConfig(L=1.0, K=2, tau=0.5)
    obs = random_obs(rng, 3, 3, 6, scale=1.0)
    ens = ChainEnsemble.from_prior(3, 3, 2.0, cfg, rng)
    design = _Design(obs)
    r = ens.risks(design)
    logw = np.log(rank_indicator_pmf(cfg)) - 2.0 * r
    exact = np.exp(logw - logw.max())
    exact /= exact.sum()
    rounds = 100_000
    picks = np.array([select_chain(ens, obs, cfg, rng, design) for _ in range(rounds)])
    freq = np.mean(picks == 1)
    assert abs(freq - exact[0]) <= 4 / math.sqrt(rounds)


def test_zero_data_gives_zero_estimate(rng):
    obs = ObservationSet(6, 5, rng.integers(0, 6, 20), rng.integers(0, 5, 20), np.zeros(20))
    cfg = PriorConfig(L=1.0, K=2, tau=0.5)
    est = fit_uniform_prior(obs, cfg, lam=50.0, gibbs_cfg=GibbsConfig(burn_in=200, iterations=2000))
    assert np.max(np.abs(est)) < 0.05


def test_fit_output_contract(rng):
    obs = random_obs(rng, 10, 8, 40, scale=3.0)
    cfg = PriorConfig(L=1.0, K=3, tau=0.5)
    res = sample_uniform_posterior(obs, cfg, gibbs_cfg=GibbsConfig(burn_in=20, iterations=200, thin=2),
                                   monitored=[(0, 0), (9, 7)])
    assert res.estimate.shape == (10, 8)
    assert res.n_draws == 100 and res.trace.shape == (100, 2)
    assert res.max_abs_draw <= 2 * cfg.L + 1e-12
    assert np.all(res.weights >= 0) and res.weights.sum() == pytest.approx(1.0)
    assert set(np.unique(res.k_selected)) <= {1, 2, 3}
    assert np.all(np.isfinite(res.mc_standard_error(10)))


def test_fit_seed_replay(rng):
    obs = random_obs(rng, 6, 5, 15, scale=1.0)
    cfg = PriorConfig(L=1.0, K=2, tau=0.5)
    g = GibbsConfig(burn_in=10, iterations=50, seed=17)
    a = fit_uniform_prior(obs, cfg, gibbs_cfg=g)
    b = fit_uniform_prior(obs, cfg, gibbs_cfg=g)
    assert np.array_equal(a, b)


def test_transposition_symmetry(rng):
    obs = random_obs(rng, 4, 3, 10, scale=1.0)
    cfg = PriorConfig(L=0.5, K=2, tau=0.5)
    g = GibbsConfig(burn_in=200, iterations=2000, seed=1)
    a = sample_uniform_posterior(obs, cfg, lam=5.0, gibbs_cfg=g, monitored=[(0, 0), (3, 2)])
    b = sample_uniform_posterior(obs.transpose(), cfg, lam=5.0, gibbs_cfg=GibbsConfig(200, 2000, seed=2),
                                 monitored=[(0, 0), (2, 3)])
    se = np.sqrt(a.mc_standard_error() ** 2 + b.mc_standard_error() ** 2)
    diff = np.abs(a.trace.mean(axis=0) - b.trace.mean(axis=0))
    assert np.all(diff <= 4 * se + 1e-3)


def test_sampler_matches_quadrature_on_scalar_problem():
    obs = ObservationSet.from_triples(1, 1, [(1, 1, v) for v in (0.9, 1.3, 0.7, 1.1, 1.0)])
    cfg = PriorConfig(L=1.0, K=1, tau=0.5)
    want = quadrature_posterior_mean(obs, cfg, 5.0, QuadratureGrid(801, 2))[0, 0]
    res = sample_uniform_posterior(obs, cfg, lam=5.0, gibbs_cfg=GibbsConfig(100, 4000, seed=3),
                                   monitored=[(0, 0)])
    se = res.mc_standard_error()[0]
    assert abs(res.estimate[0, 0] - want) <= 3 * se


def test_conjugate_recovers_fully_observed_matrix(rng):
    M0 = np.array([[1.0, -0.5], [2.0, -1.0]])
    trip = [(i + 1, j + 1, M0[i, j]) for _ in range(5) for i in range(2) for j in range(2)]
    obs = ObservationSet.from_triples(2, 2, trip)
    res = sample_conjugate_posterior(obs, ConjugatePriorConfig(K=2), lam=1e5,
                                     gibbs_cfg=GibbsConfig(200, 1000, seed=4), fixed_gamma=1e6)
    assert np.max(np.abs(res.estimate - M0)) < 0.05


def test_conjugate_contract(rng):
    obs = random_obs(rng, 7, 5, 20, scale=1.0)
    res = sample_conjugate_posterior(obs, ConjugatePriorConfig(K=3), gibbs_cfg=GibbsConfig(10, 40),
                                     monitored=[(1, 1)])
    assert res.estimate.shape == (7, 5) and res.trace.shape == (40, 1)
    assert np.all(res.extra["gamma"] > 0)
