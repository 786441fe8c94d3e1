"""Command-line entry point: ``lowrank-bayes {simulate,fit,experiment,bound,acf}``."""

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone

import numpy as np

from . import __version__
from . import config as configmod
from . import rng as rngmod
from .bounds import (
    BoundInputs,
    NoiseSpec,
    auxiliary_constants,
    bound_terms,
    constant_C,
    lambda_for,
    lambda_star,
    oracle_bound,
)
from .core import read_observations, write_matrix, write_observations
from .diagnostics import acf, acf_majority, format_table, summarize_replications
from .errors import CompletionError, ConfigError
from .gibbs import GibbsConfig, sample_conjugate_posterior, sample_uniform_posterior
from .prior import ConjugatePriorConfig, PriorConfig
from .simulate import ExperimentSpec, run_replications, series_tau, simulate_data

logger = logging.getLogger("lowrank_bayes")


# ------------------------------------------------------------------ manifest

class Manifest:
    """Provenance of one CLI invocation; its hash tags every output file."""

    def __init__(self, command, cfg, config_path):
        self.command = command
        self.cfg = cfg
        self.config_path = config_path
        self.timestamp = datetime.now(timezone.utc).isoformat()

    @property
    def snapshot(self):
        return {k: v for k, v in sorted(self.cfg.items()) if k != "workers"}

    @property
    def digest(self):
        # the timestamp is excluded so identical runs yield byte-identical files
        payload = json.dumps({"command": self.command, "config": self.snapshot,
                              "version": __version__}, sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def header(self):
        return [f"manifest={self.digest}", f"lowrank-bayes {__version__} {self.command} seed={self.cfg['seed']}"]

    def write(self, out_dir):
        doc = {"manifest": self.digest, "command": self.command, "config_path": self.config_path,
               "config": self.snapshot, "seed": self.cfg["seed"], "version": __version__,
               "timestamp": self.timestamp}
        with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")


def _csv_writer(path, manifest, header):
    fh = open(path, "w", newline="")
    for line in manifest.header():
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    return fh, w


# ------------------------------------------------------------------ builders

def _series_list(value):
    if str(value) == "all":
        return [1, 2, 3, 4]
    try:
        s = int(value)
    except ValueError:
        raise ConfigError(f"series must be 1-4 or 'all', got {value!r}") from None
    if s not in (1, 2, 3, 4):
        raise ConfigError(f"series must be 1-4 or 'all', got {value!r}")
    return [s]


def _estimators(value):
    if value == "both":
        return ("uniform", "conjugate")
    if value in ("uniform", "conjugate"):
        return (value,)
    raise ConfigError(f"estimator must be uniform, conjugate or both, got {value!r}")


def build_prior(cfg, series=1):
    tau = cfg["tau"] if cfg["tau"] is not None else series_tau(series)
    return PriorConfig(L=cfg["L"], K=cfg["K"], tau=tau, kappa=cfg["kappa"])


def build_gibbs(cfg, seed=None):
    return GibbsConfig(burn_in=cfg["burn_in"], iterations=cfg["iterations"], thin=cfg["thin"],
                       inner_sweeps=cfg["inner_sweeps"], seed=cfg["seed"] if seed is None else seed)


def build_spec(cfg, series):
    return ExperimentSpec(
        series=series, m=cfg["m"], observe_fraction=cfg["observe_fraction"], seed=cfg["seed"],
        estimators=_estimators(cfg["estimator"]), prior=build_prior(cfg, series),
        conjugate=ConjugatePriorConfig(a=cfg["a"], b=cfg["b"], K=cfg["K"]), gibbs=build_gibbs(cfg),
        lambda_mode=cfg["lambda_mode"], noise_spec=NoiseSpec(cfg["sigma"], cfg["xi"]),
        gaussian_param_is_variance=cfg["gaussian_param_is_variance"],
        without_replacement=cfg["without_replacement"], monitored_entries=cfg["monitored_entries"],
    )


def _out_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


# ------------------------------------------------------------------ commands

def cmd_simulate(args, cfg):
    out = _out_dir(args.out)
    manifest = Manifest("simulate", cfg, args.config)
    for series in _series_list(cfg["series"]):
        spec = build_spec(cfg, series)
        M0, obs = simulate_data(spec)
        suffix = "" if str(cfg["series"]) != "all" else f"_series{series}"
        write_matrix(os.path.join(out, f"M0{suffix}.csv"), M0, manifest.header())
        write_observations(os.path.join(out, f"observations{suffix}.csv"), obs, manifest.header())
        print(f"series {series}: m={spec.m} n={obs.n} -> {out}")
    manifest.write(out)
    return 0


def _monitored(cfg, m, p):
    pick = rngmod.stream(cfg["seed"], "monitor")
    count = min(cfg["monitored_entries"], m * p)
    return [tuple(divmod(int(c), p)) for c in pick.choice(m * p, size=count, replace=False)]


def run_fit(obs, cfg, estimator, monitored=()):
    """Library call behind ``fit``; returns the sampler result."""
    prior = build_prior(cfg, int(cfg["series"]) if str(cfg["series"]).isdigit() else 1)
    lam = lambda_for(cfg["lambda_mode"], obs.n, prior.L, NoiseSpec(cfg["sigma"], cfg["xi"]))
    gcfg = build_gibbs(cfg)
    if estimator == "uniform":
        return sample_uniform_posterior(obs, prior, lam, gcfg, list(monitored))
    conj = ConjugatePriorConfig(a=cfg["a"], b=cfg["b"], K=cfg["K"])
    return sample_conjugate_posterior(obs, conj, lam, gcfg, list(monitored))


def cmd_fit(args, cfg):
    out = _out_dir(args.out)
    obs = read_observations(args.observations)
    manifest = Manifest("fit", dict(cfg, observations=os.path.abspath(args.observations)), args.config)
    monitored = _monitored(cfg, obs.m, obs.p)
    for est in _estimators(cfg["estimator"]):
        res = run_fit(obs, cfg, est, monitored)
        write_matrix(os.path.join(out, f"estimate_{est}.csv"), res.estimate, manifest.header())
        cols = [f"m_{i + 1}_{j + 1}" for i, j in monitored]
        fh, w = _csv_writer(os.path.join(out, f"trace_{est}.csv"), manifest,
                            ["round", "k_selected", "r_selected", *cols])
        with fh:
            for t in range(res.n_draws):
                w.writerow([t + 1, int(res.k_selected[t]), repr(float(res.r_selected[t])),
                            *(repr(float(v)) for v in res.trace[t])])
        print(f"{est}: lambda={res.lam:.6g} draws={res.n_draws} -> {out}/estimate_{est}.csv")
    manifest.write(out)
    return 0


def cmd_experiment(args, cfg):
    if cfg["replications"] < 1:
        raise ConfigError("replications must be at least 1")
    out = _out_dir(args.out)
    manifest = Manifest("experiment", cfg, args.config)
    results = []
    for series in _series_list(cfg["series"]):
        spec = build_spec(cfg, series)
        for res in run_replications(spec, cfg["replications"], workers=cfg["workers"]):
            results.extend(res.rows())
    fh, w = _csv_writer(os.path.join(out, "results.csv"), manifest,
                        ["series", "m", "replication", "estimator", "rmse", "seconds", "seed"])
    with fh:
        for r in results:
            w.writerow([r["series"], r["m"], r["replication"], r["estimator"], repr(r["rmse"]),
                        f"{r['seconds']:.3f}", r["seed"]])
    cells = summarize_replications(results)
    fh, w = _csv_writer(os.path.join(out, "summary.csv"), manifest,
                        ["series", "m", "estimator", "mean_rmse", "se", "replications"])
    with fh:
        for c in cells:
            w.writerow([c.series, c.m, c.estimator, repr(c.mean), repr(c.se), c.count])
    table = format_table(cells)
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        for line in manifest.header():
            fh.write(f"# {line}\n")
        fh.write(table + "\n")
    print(table)
    manifest.write(out)
    return 0


def _bound_inputs(cfg, n):
    m = cfg["m"]
    p = cfg["p"] or m
    tau = cfg["tau"] if cfg["tau"] is not None else 0.5
    return BoundInputs(m=m, p=p, n=n, rank=cfg["rank"], approx_error=cfg["approx_error"],
                       epsilon=cfg["epsilon"], L=cfg["L"], tau=tau, noise=NoiseSpec(cfg["sigma"], cfg["xi"]))


def _bound_row(inp, log_term):
    lam = lambda_star(inp.n, inp.L, inp.noise)
    aux = auxiliary_constants(lam, inp.n, inp.L, inp.noise)
    return {"n": inp.n, "C": constant_C(inp.L, inp.noise), "w": aux.w, "C_sigma_L": aux.C_sigma_L,
            "lambda_star": lam, "alpha": aux.alpha, "beta": aux.beta,
            "bound": oracle_bound(inp, log_term)}


def cmd_bound(args, cfg):
    manifest = Manifest("bound", cfg, args.config)
    p = cfg["p"] or cfg["m"]
    n = cfg["n"] or int(round(cfg["observe_fraction"] * cfg["m"] * p))
    log_term = cfg["log_term"]
    if cfg["n_grid"]:
        rows = [_bound_row(_bound_inputs(cfg, k), log_term) for k in cfg["n_grid"]]
        keys = list(rows[0])
        if args.out:
            out = _out_dir(args.out)
            fh, w = _csv_writer(os.path.join(out, "bound_grid.csv"), manifest, keys)
            with fh:
                for r in rows:
                    w.writerow([repr(float(r[k])) if k != "n" else r[k] for k in keys])
            manifest.write(out)
        print(",".join(keys))
        for r in rows:
            print(",".join(str(r[k]) for k in keys))
        return 0
    inp = _bound_inputs(cfg, n)
    row = _bound_row(inp, log_term)
    print(f"# manifest={manifest.digest}")
    for k in ("C", "w", "C_sigma_L", "lambda_star", "alpha", "beta"):
        print(f"{k}: {row[k]!r}")
    for k, v in bound_terms(inp, log_term).items():
        print(f"term_{k}: {v!r}")
    print(f"bound: {row['bound']!r}")
    return 0


def cmd_acf(args, cfg):
    out = _out_dir(args.out)
    manifest = Manifest("acf", cfg, args.config)
    series = _series_list(cfg["series"])[0]
    spec = replace(build_spec(cfg, series), estimators=("uniform", "conjugate"))
    res = run_replications(spec, 1, workers=1, keep_fits=True)[0]
    U, C = res.fits["uniform"].trace, res.fits["conjugate"].trace
    max_lag = cfg["max_lag"]
    wins, total, comps = acf_majority(U, C, max_lag)
    for e, (i, j) in enumerate(res.fits["uniform"].monitored):
        au, ac = acf(U[:, e], max_lag), acf(C[:, e], max_lag)
        fh, w = _csv_writer(os.path.join(out, f"acf_{i + 1}_{j + 1}.csv"), manifest,
                            ["lag", "acf_uniform", "acf_conjugate"])
        with fh:
            for h in range(max_lag + 1):
                w.writerow([h, repr(float(au[h])), repr(float(ac[h]))])
        print(f"entry ({i + 1},{j + 1}): sum|acf| uniform={comps[e].sum_abs_b:.3f} "
              f"conjugate={comps[e].sum_abs_a:.3f}")
    print(f"conjugate summed |ACF| <= uniform in {wins}/{total} monitored entries (proxy for faster mixing)")
    manifest.write(out)
    return 0


# ------------------------------------------------------------------ parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", help="64-bit master seed")
    common.add_argument("--series", help="1, 2, 3, 4 or all")
    common.add_argument("--m", type=int, help="matrix dimension (square)")
    common.add_argument("--estimator", choices=["uniform", "conjugate", "both"])
    common.add_argument("--lambda-mode", dest="lambda_mode", choices=["experiment", "star", "gauss"])
    common.add_argument("--workers", type=int, help="parallel replications (default: all cores)")
    common.add_argument("--replications", type=int)
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="lowrank-bayes", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="generate M0 and observations")
    fit = sub.add_parser("fit", parents=[common], help="fit an observations CSV")
    fit.add_argument("observations", help="CSV with header i,j,y (1-based)")
    sub.add_parser("experiment", parents=[common], help="replicated simulation study")
    sub.add_parser("bound", parents=[common], help="constants and the oracle bound")
    sub.add_parser("acf", parents=[common], help="trace autocorrelations of both samplers")
    return parser


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "experiment": cmd_experiment,
            "bound": cmd_bound, "acf": cmd_acf}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    overrides = {k: getattr(args, k) for k in
                 ("seed", "series", "m", "estimator", "lambda_mode", "workers", "replications")}
    if args.replications is not None and args.replications < 1:
        parser.error("--replications must be at least 1")
    if args.out is None and args.command != "bound":
        args.out = "out"
    try:
        cfg = configmod.resolve(args.config, overrides)
        return COMMANDS[args.command](args, cfg)
    except (CompletionError, OSError) as exc:
        print(f"lowrank-bayes: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
