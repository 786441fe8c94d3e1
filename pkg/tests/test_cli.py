import subprocess
import sys

import numpy as np
import pytest

from lowrank_bayes.bounds import NoiseSpec, lambda_star
from lowrank_bayes.cli import main
from lowrank_bayes.core import read_matrix, read_observations
from lowrank_bayes.gibbs import GibbsConfig, sample_conjugate_posterior, sample_uniform_posterior
from lowrank_bayes.prior import ConjugatePriorConfig, PriorConfig


@pytest.fixture
def quick_cfg(tmp_path):
    path = tmp_path / "quick.cfg"
    path.write_text("# short chains for tests\nburn_in = 5\niterations = 30\nK = 3\nL = 20\nworkers = 1\n")
    return str(path)


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def read_data_lines(path):
    return [ln for ln in open(path).read().splitlines() if not ln.startswith("#")]


def test_simulate_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["simulate", "--series", "3", "--m", "30", "--seed", "11", "--out", str(d)], capsys)[0] == 0
    for name in ("M0.csv", "observations.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    obs = read_observations(str(a / "observations.csv"))
    assert obs.n == round(0.2 * 30 * 30) and obs.shape == (30, 30)
    assert read_matrix(str(a / "M0.csv")).shape == (30, 30)
    assert (a / "manifest.json").exists()


def test_simulate_seed_changes_output(tmp_path, capsys):
    run(["simulate", "--m", "10", "--seed", "1", "--out", str(tmp_path / "a")], capsys)
    run(["simulate", "--m", "10", "--seed", "2", "--out", str(tmp_path / "b")], capsys)
    assert (tmp_path / "a/M0.csv").read_bytes() != (tmp_path / "b/M0.csv").read_bytes()


def test_simulate_all_series(tmp_path, capsys):
    code, out, _ = run(["simulate", "--series", "all", "--m", "50", "--out", str(tmp_path)], capsys)
    assert code == 0
    for s in (1, 2, 3, 4):
        assert (tmp_path / f"observations_series{s}.csv").exists()


def test_series_two_small_m_fails_cleanly(tmp_path, capsys):
    code, out, err = run(["simulate", "--series", "2", "--m", "40", "--out", str(tmp_path)], capsys)
    assert code != 0
    lines = err.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith("lowrank-bayes: error:") and "m >= 50" in lines[0]


def _simulate(tmp_path, capsys, m=12):
    run(["simulate", "--m", str(m), "--seed", "5", "--out", str(tmp_path / "sim")], capsys)
    return str(tmp_path / "sim" / "observations.csv")


def test_fit_matches_library(tmp_path, capsys, quick_cfg):
    obs_path = _simulate(tmp_path, capsys)
    out = tmp_path / "fit"
    code, stdout, _ = run(["fit", obs_path, "--config", quick_cfg, "--seed", "8", "--estimator", "uniform",
                           "--out", str(out)], capsys)
    assert code == 0
    est = read_matrix(str(out / "estimate_uniform.csv"))
    obs = read_observations(obs_path)
    lib = sample_uniform_posterior(obs, PriorConfig(L=20, K=3, tau=0.5), obs.n / 4,
                                   GibbsConfig(burn_in=5, iterations=30, seed=8))
    assert np.array_equal(est, lib.estimate)
    trace = read_data_lines(out / "trace_uniform.csv")
    assert trace[0].startswith("round,k_selected,r_selected,m_")
    assert len(trace) == 31


def test_fit_conjugate_and_lambda_star(tmp_path, capsys, quick_cfg):
    obs_path = _simulate(tmp_path, capsys)
    out = tmp_path / "fit"
    code, stdout, _ = run(["fit", obs_path, "--config", quick_cfg, "--estimator", "conjugate",
                           "--lambda-mode", "star", "--out", str(out)], capsys)
    assert code == 0
    obs = read_observations(obs_path)
    lam = lambda_star(obs.n, 20.0, NoiseSpec())
    lib = sample_conjugate_posterior(obs, ConjugatePriorConfig(K=3), lam, GibbsConfig(5, 30, seed=0))
    assert np.array_equal(read_matrix(str(out / "estimate_conjugate.csv")), lib.estimate)
    assert f"lambda={lam:.6g}" in stdout
    assert not (out / "estimate_uniform.csv").exists()


def test_experiment_summary(tmp_path, capsys, quick_cfg):
    code, stdout, _ = run(["experiment", "--config", quick_cfg, "--m", "10", "--replications", "2",
                           "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = read_data_lines(tmp_path / "results.csv")
    assert rows[0] == "series,m,replication,estimator,rmse,seconds,seed" and len(rows) == 5
    summary = read_data_lines(tmp_path / "summary.csv")
    assert summary[0] == "series,m,estimator,mean_rmse,se,replications" and len(summary) == 3
    assert "(±" in stdout


def test_experiment_all_series(tmp_path, capsys, quick_cfg):
    code, _, _ = run(["experiment", "--config", quick_cfg, "--series", "all", "--m", "50",
                      "--replications", "1", "--estimator", "conjugate", "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = read_data_lines(tmp_path / "results.csv")[1:]
    assert sorted(r.split(",")[0] for r in rows) == ["1", "2", "3", "4"]


def test_zero_replications_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["experiment", "--replications", "0", "--out", str(tmp_path)])
    assert exc.value.code == 2
    assert "replications" in capsys.readouterr().err


def test_bound_prints_constants(tmp_path, capsys):
    cfg = tmp_path / "b.cfg"
    cfg.write_text("L = 1\nm = 10\nn = 120\n")
    code, out, _ = run(["bound", "--config", str(cfg)], capsys)
    assert code == 0
    lines = dict(ln.split(": ", 1) for ln in out.splitlines() if ": " in ln)
    assert float(lines["C"]) == 60.0
    assert float(lines["lambda_star"]) == 1.0
    assert float(lines["alpha"]) == pytest.approx(47 / 60)
    assert "bound" in lines and "term_complexity" in lines


def test_bound_grid(tmp_path, capsys):
    cfg = tmp_path / "b.cfg"
    cfg.write_text("L = 1\nm = 10\nn_grid = 100, 200, 400\n")
    code, out, _ = run(["bound", "--config", str(cfg), "--out", str(tmp_path / "g")], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].startswith("n,C,") and len(lines) == 4
    bounds = [float(ln.split(",")[-1]) for ln in lines[1:]]
    assert bounds[0] > bounds[1] > bounds[2]
    assert read_data_lines(tmp_path / "g" / "bound_grid.csv")[0] == lines[0]


def test_acf_command(tmp_path, capsys, quick_cfg):
    cfg = tmp_path / "acf.cfg"
    cfg.write_text(open(quick_cfg).read() + "max_lag = 5\nmonitored_entries = 2\n")
    code, out, _ = run(["acf", "--config", str(cfg), "--m", "10", "--out", str(tmp_path / "acf")], capsys)
    assert code == 0
    files = sorted((tmp_path / "acf").glob("acf_*.csv"))
    assert len(files) == 2
    rows = read_data_lines(files[0])
    assert rows[0] == "lag,acf_uniform,acf_conjugate" and len(rows) == 7
    assert "/2 monitored entries" in out


def test_every_output_has_manifest_header(tmp_path, capsys, quick_cfg):
    run(["simulate", "--m", "10", "--out", str(tmp_path)], capsys)
    run(["experiment", "--config", quick_cfg, "--m", "10", "--replications", "1", "--out", str(tmp_path)], capsys)
    run(["fit", str(tmp_path / "observations.csv"), "--config", quick_cfg, "--out", str(tmp_path)], capsys)
    files = [f for f in tmp_path.iterdir() if f.suffix in (".csv", ".txt")]
    assert len(files) >= 8
    for f in files:
        assert f.read_text().startswith("# manifest="), f.name


def test_malformed_input_is_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("i,j,y\n1,1,0.5\n1,x,0.2\n")
    code, _, err = run(["fit", str(bad), "--out", str(tmp_path)], capsys)
    assert code == 1
    assert err.count("\n") == 1 and "bad.csv:3:" in err
    badcfg = tmp_path / "bad.cfg"
    badcfg.write_text("iterations = 10\nbogus = 1\n")
    code, _, err = run(["bound", "--config", str(badcfg)], capsys)
    assert code == 1 and "bad.cfg:2:" in err
    code, _, err = run(["fit", str(tmp_path / "missing.csv"), "--out", str(tmp_path)], capsys)
    assert code == 1 and err.startswith("lowrank-bayes: error:")


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "lowrank_bayes.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()
