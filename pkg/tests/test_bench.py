import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gengs import distributions as dist
from gengs.bench import cli, params
from gengs.bench import (
    ExperimentConfig, compare_estimators, cumulative_average, grid_search_optimum, load_config,
    run_synthetic,
)
from gengs.bench.synthetic import draw_targets
from gengs.errors import ConfigError


def small(tmp_path, **kw):
    base = dict(dist="poisson:20", steps=30, cadence=10, moment_repeats=8, seed=3,
                out=str(tmp_path / "run.csv"))
    base.update(kw)
    return load_config(**base)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# -- config ---------------------------------------------------------------------------

def test_load_config_file_and_overrides(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"dist": "negbin:3,0.4", "steps": 5, "estimators": "gengs,exact"}))
    cfg = load_config(path, steps=7, lr=None)
    assert cfg.target_spec == dist.negative_binomial(3.0, 0.4)
    assert cfg.steps == 7 and cfg.estimators == ("gengs", "exact")


def test_unknown_config_key(tmp_path):
    with pytest.raises(ConfigError):
        load_config(learning_rate=0.1)


@pytest.mark.parametrize("kw", [
    dict(estimator="gengs-rb", dist="multinomial:3,0.7,0.2,0.1"),
    dict(estimator="gengs-implicit", dist="multinomial:3,0.7,0.2,0.1"),
    dict(estimator="nope"),
    dict(steps=0),
    dict(optimizer="rmsprop"),
    dict(tau0=0.05, tau_min=0.1),
])
def test_incompatible_configs_fail_before_compute(tmp_path, kw):
    with pytest.raises(ConfigError):
        run_synthetic(small(tmp_path, **kw))
    assert not (tmp_path / "run.csv").exists()


def test_truncation_level_from_tail(tmp_path):
    cfg = small(tmp_path, dist="poisson:7", tail_eps=1e-6)
    assert cfg.truncation_level() == dist.suggest_truncation(dist.poisson(7.0), 1e-6)
    assert small(tmp_path, trunc=30).truncation_level() == 30


# -- run --------------------------------------------------------------------------------

def test_single_step_gives_one_record_per_replicate(tmp_path):
    result = run_synthetic(small(tmp_path, steps=1, replicates=3))
    assert [(r.step, r.replicate) for r in result["records"]] == [(0, 0), (0, 1), (0, 2)]


def test_trajectory_file_layout(tmp_path):
    cfg = small(tmp_path)
    run_synthetic(cfg)
    rows = read_csv(cfg.out)
    assert list(rows[0]) == ["step", "replicate", "loss", "grad_var", "grad_bias_norm", "param_0", "tau"]
    assert len(rows) == cfg.steps
    probed = [int(r["step"]) for r in rows if r["grad_var"]]
    assert probed == [0, 10, 20, 29]
    summary = json.loads((tmp_path / "run.summary.json").read_text())
    assert summary["estimator"] == "gengs"
    assert "grid.lam" in summary and "final.lam" in summary and "wall_clock_seconds" in summary


def test_negative_binomial_has_two_parameter_columns(tmp_path):
    cfg = small(tmp_path, dist="negbin:3,0.4", steps=3, cadence=2)
    run_synthetic(cfg)
    assert {"param_0", "param_1"} <= set(read_csv(cfg.out)[0])


def test_exact_descent_is_monotone(tmp_path):
    result = run_synthetic(small(tmp_path, estimator="exact", steps=200, lr=0.01), write=False)
    losses = [r.loss for r in result["records"]]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


@pytest.mark.parametrize("estimator", ["gengs", "gengs-implicit", "gengs-rb", "st-gengs", "reinforce", "exact"])
def test_every_estimator_runs(tmp_path, estimator):
    result = run_synthetic(small(tmp_path, estimator=estimator, steps=5, cadence=2, baseline=True), write=False)
    assert len(result["records"]) == 5
    assert np.isfinite(result["summary"]["final_loss"])


def test_multinomial_run(tmp_path):
    cfg = small(tmp_path, dist="multinomial:3,0.7,0.2,0.1", K=4, steps=5, cadence=2, estimator="gengs")
    result = run_synthetic(cfg, write=False)
    assert len(result["records"][0].params) == 3
    assert draw_targets(cfg).targets.shape == (4, 3)


def test_run_is_reproducible(tmp_path):
    a = run_synthetic(small(tmp_path, replicates=2), write=False)["records"]
    b = run_synthetic(small(tmp_path, replicates=2), write=False)["records"]
    assert a == b


# -- compare ------------------------------------------------------------------------------

def test_cumulative_average():
    assert np.allclose(cumulative_average(np.full(7, 2.5)), 2.5)
    assert np.allclose(cumulative_average([1.0, np.nan, 3.0]), [1.0, 1.0, 2.0])


def test_duplicated_estimator_gives_identical_columns(tmp_path):
    result = compare_estimators(small(tmp_path, estimators="gengs,gengs"))
    rows = read_csv(tmp_path / "run.comparison.csv")
    for field in ("loss", "grad_var", "grad_bias_norm"):
        assert all(r[f"gengs_{field}"] == r[f"gengs#2_{field}"] for r in rows)
    assert "gengs#2" in result["table"]


def test_compare_needs_two_estimators(tmp_path):
    with pytest.raises(ConfigError):
        compare_estimators(small(tmp_path, estimators="gengs"))


def test_compare_is_byte_identical(tmp_path):
    cfg = small(tmp_path, estimators="gengs,reinforce,exact")
    compare_estimators(cfg)
    first = {p.name: p.read_bytes() for p in tmp_path.glob("*.csv")}
    compare_estimators(cfg)
    second = {p.name: p.read_bytes() for p in tmp_path.glob("*.csv")}
    assert first == second and len(first) == 4


# -- grid search -------------------------------------------------------------------------------

def test_grid_optimum_matches_stationary_point(tmp_path):
    # sum_i lam + (lam - t_i)^2 is minimized at mean(t) - 1/2
    cfg = small(tmp_path, K=5, trunc=80)
    t = draw_targets(cfg).targets
    result = grid_search_optimum(cfg)
    assert abs(result["params"][0] - (t.mean() - 0.5)) < 2e-3


def test_grid_with_no_targets(tmp_path):
    assert grid_search_optimum(small(tmp_path, K=0))["loss"] == 0.0


def test_grid_two_dimensional(tmp_path):
    result = grid_search_optimum(small(tmp_path, dist="negbin:3,0.4", K=3, trunc=60))
    assert len(result["params"]) == 2 and np.isfinite(result["loss"])


# -- unconstrained parameters ----------------------------------------------------------------

@pytest.mark.parametrize("spec", [dist.poisson(3.7), dist.negative_binomial(2.0, 0.3),
                                  dist.binomial(5, 0.2), dist.categorical([0.2, 0.5, 0.3])])
def test_unconstrained_round_trip(spec):
    back = params.from_unconstrained(spec, params.to_unconstrained(spec))
    assert np.allclose(dist.learnable(back), dist.learnable(spec))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 2, elements=st.floats(-4, 4)), arrays(np.float64, 2, elements=st.floats(-3, 3)))
def test_pullback_is_the_chain_rule(u, w):
    template = dist.negative_binomial(1.0, 0.5)

    def f(x):
        return float(np.dot(params.natural(template, x), w))

    fd = np.array([(f(u + h) - f(u - h)) / 2e-6 for h in np.eye(2) * 1e-6])
    assert np.allclose(params.pullback(template, u, w), fd, rtol=1e-5, atol=1e-8)


# -- CLI ---------------------------------------------------------------------------------------

def test_cli_run_and_compare(tmp_path, capsys):
    out = tmp_path / "cli.csv"
    assert cli.main(["run", "--dist", "poisson:10", "--steps", "4", "--cadence", "2",
                     "--moment-repeats", "4", "--out", str(out)]) == 0
    assert out.exists() and (tmp_path / "cli.summary.json").exists()
    assert cli.main(["compare", "--estimators", "gengs,exact", "--steps", "4", "--cadence", "2",
                     "--moment-repeats", "4", "--out", str(out)]) == 0
    assert "exact" in capsys.readouterr().out
    assert (tmp_path / "cli.comparison.csv").exists()


def test_cli_reports_config_errors(tmp_path, capsys):
    assert cli.main(["run", "--estimator", "gengs-rb", "--dist", "multinomial:2,0.5,0.5",
                     "--out", str(tmp_path / "x.csv")]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_reads_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dist": "geometric:0.3", "steps": 3, "cadence": 2, "moment_repeats": 4,
                               "out": str(tmp_path / "g.csv")}))
    assert cli.main(["run", "--config", str(cfg), "--estimator", "exact"]) == 0
    assert len(read_csv(tmp_path / "g.csv")) == 3
