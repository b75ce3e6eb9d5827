"""Synthetic benchmark runner.

Targets ``t_1..t_K`` are drawn once from the target distribution; the model's
parameters are then fitted to ``E_z[sum_i (z_i - t_i)^2]`` by gradient descent
driven by one estimator.  Every logged loss is the exactly enumerated
expectation, so estimators are compared on the same yardstick.
"""
from __future__ import annotations

import copy
import csv
import dataclasses
import io
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import distributions as dist
from .. import estimators as est
from ..errors import ConfigError, ParameterDomainError
from ..randomness import NoiseSource
from . import params as unc
from .config import ExperimentConfig

TRAIN_STREAM = 0
TARGET_STREAM = 1
PROBE_STREAM = 1 << 32  # probe at step s uses stream PROBE_STREAM + s


@dataclass
class TrajectoryRecord:
    step: int
    replicate: int
    loss: float
    grad_var: float | None
    grad_bias_norm: float | None
    params: tuple
    tau: float


# ---------------------------------------------------------------------------
# problem setup

@dataclass
class Problem:
    objective: est.Objective
    n: int | None
    template: dist.DistributionSpec
    prior: dist.TruncatedDistribution | None = None


def draw_targets(config: ExperimentConfig) -> est.Objective:
    """The K fixed targets, drawn from the target distribution with the run's seed."""
    target = config.target_spec
    source = NoiseSource(config.seed, TARGET_STREAM)
    return est.Objective(dist.sample(target, source, config.K))


def build_problem(config: ExperimentConfig, estimator: str) -> Problem:
    template = config.initial_model_spec()
    n = config.truncation_level()
    prior = dist.truncate(template, n) if estimator == "gengs-implicit" else None
    return Problem(draw_targets(config), n, template, prior)


class _SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, u, g):
        return u - self.lr * g


class _Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, u, g):
        if self.m is None:
            self.m, self.v = np.zeros_like(g), np.zeros_like(g)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return u - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _optimizer(config):
    return _Adam(config.lr) if config.optimizer == "adam" else _SGD(config.lr)


# ---------------------------------------------------------------------------
# estimator adaptors: everything the loop needs for one estimator at state u

class _Explicit:
    """Estimators that move the model's natural parameters."""

    def __init__(self, name, problem, config):
        self.name, self.problem, self.config = name, problem, config

    def initial_state(self):
        return unc.to_unconstrained(self.problem.template)

    def spec(self, u):
        return unc.from_unconstrained(self.problem.template, u)

    def loss(self, u):
        return est.enumerated_loss(self.problem.objective, self.spec(u), self.problem.n)

    def param_estimate(self, u):
        return tuple(float(x) for x in dist.learnable(self.spec(u)))

    def exact(self, u):
        return est.exact_gradient(self.problem.objective, self.spec(u), self.problem.n).grad

    def natural_grad(self, u, source, tau, baseline=None):
        obj, n, spec = self.problem.objective, self.problem.n, self.spec(u)
        if self.name == "gengs":
            return est.gengs_explicit(obj, spec, n, tau, source).grad
        if self.name == "st-gengs":
            return est.st_gengs(obj, spec, n, tau, source).grad
        if self.name == "gengs-rb":
            return est.gengs_rb(obj, spec, n, tau, source).grad
        if self.name == "reinforce":
            return est.reinforce(obj, spec, source, baseline).grad
        if self.name == "exact":
            return est.exact_gradient(obj, spec, n).grad
        raise ConfigError(f"unknown estimator {self.name!r}")

    def step_grad(self, u, grad):
        return unc.pullback(self.problem.template, u, grad)


class _Implicit:
    """GenGS on free logits over the truncated support, regularized toward a prior."""

    def __init__(self, name, problem, config):
        self.problem, self.config = problem, config

    def initial_state(self):
        return np.zeros(self.problem.n)

    def _q(self, u):
        e = np.exp(u - u.max())
        return e / e.sum()

    def loss(self, u):
        return float(np.dot(self._q(u), self.problem.objective.outcome_table(self.problem.prior.c)))

    def param_estimate(self, u):
        return (float(np.dot(self._q(u), self.problem.prior.c)),)

    def exact(self, u):
        return est.implicit_enumerated(self.problem.objective, u, self.problem.prior, self.config.kl_weight)[1]

    def natural_grad(self, u, source, tau, baseline=None):
        return est.gengs_implicit(self.problem.objective, u, self.problem.prior, tau,
                                  self.config.kl_weight, source).grad

    def step_grad(self, u, grad):
        return grad


def _adaptor(name, problem, config):
    return (_Implicit if name == "gengs-implicit" else _Explicit)(name, problem, config)


# ---------------------------------------------------------------------------
# runs

def _run_replicate(config: ExperimentConfig, problem: Problem, name: str, r: int):
    adaptor = _adaptor(name, problem, config)
    schedule = config.schedule
    optimizer = _optimizer(config)
    source = NoiseSource(config.seed + r, TRAIN_STREAM)
    baseline = est.RunningMeanBaseline() if name == "reinforce" and config.baseline else None
    deterministic = name == "exact"
    u = adaptor.initial_state()
    records = []
    for step in range(config.steps):
        tau = schedule(step)
        grad_var = bias_norm = None
        if step % config.cadence == 0 or step == config.steps - 1:
            state = u.copy()

            def invoke(seed, state=state, tau=tau):
                probe = NoiseSource(seed, PROBE_STREAM + step)
                b = copy.copy(baseline)
                return est.GradEstimate(adaptor.natural_grad(state, probe, tau, b), 0.0, 1, seed)

            repeats = 2 if deterministic else config.moment_repeats
            m = est.estimate_moments(invoke, repeats, adaptor.exact(state),
                                     base_seed=config.seed + r * config.moment_repeats)
            grad_var, bias_norm = m.total_variance, m.bias_norm
        records.append(TrajectoryRecord(step, r, adaptor.loss(u), grad_var, bias_norm,
                                        adaptor.param_estimate(u), tau))
        g = adaptor.natural_grad(u, source, tau, baseline)
        u = optimizer.step(u, adaptor.step_grad(u, g))
    return records, u, adaptor


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def trajectory_csv(records: list[TrajectoryRecord]) -> str:
    n_params = len(records[0].params) if records else 1
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "replicate", "loss", "grad_var", "grad_bias_norm",
                     *[f"param_{i}" for i in range(n_params)], "tau"])
    for rec in records:
        writer.writerow([rec.step, rec.replicate, _fmt(rec.loss), _fmt(rec.grad_var),
                         _fmt(rec.grad_bias_norm), *map(_fmt, rec.params), _fmt(rec.tau)])
    return buf.getvalue()


def summary_path(out: str | Path) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".summary.json")


def run_synthetic(config: ExperimentConfig, write: bool = True, estimator: str | None = None) -> dict:
    """Run one estimator; returns ``{"records": [...], "summary": {...}}``.

    With ``write`` the trajectory CSV goes to ``config.out`` and the summary next to it.
    """
    name = estimator or config.estimator
    config.validate()
    from .config import check_estimator
    check_estimator(name, config.initial_model_spec())
    started = time.perf_counter()
    problem = build_problem(config, name)
    records, finals = [], []
    for r in range(config.replicates):
        recs, u, adaptor = _run_replicate(config, problem, name, r)
        records.extend(recs)
        finals.append((adaptor.param_estimate(u), adaptor.loss(u)))
    grid = grid_search_optimum(config, problem)
    final_params = np.mean([f[0] for f in finals], axis=0)
    names = ["mean"] if name == "gengs-implicit" else dist.learnable_names(problem.template)
    grid_params = np.atleast_1d(dist.mean(grid["spec"])) if name == "gengs-implicit" else grid["params"]
    summary = {f"config.{k}": v for k, v in config.to_dict().items()}
    summary.update({
        "estimator": name,
        "trunc_level": problem.n,
        "targets": problem.objective.targets.tolist(),
        "final_loss": float(np.mean([f[1] for f in finals])),
        "grid_loss": grid["loss"],
        "grid_gap": float(np.linalg.norm(final_params - grid_params)),
    })
    for i, pname in enumerate(names):
        summary[f"final.{pname}"] = float(final_params[i])
        summary[f"final.{pname}.replicates"] = [float(f[0][i]) for f in finals]
        summary[f"grid.{pname}"] = float(grid_params[i])
    summary["wall_clock_seconds"] = time.perf_counter() - started
    if write:
        out = Path(config.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(trajectory_csv(records))
        summary_path(out).write_text(json.dumps(summary, indent=2) + "\n")
    return {"records": records, "summary": summary}


# ---------------------------------------------------------------------------
# comparison

def cumulative_average(values) -> np.ndarray:
    """Running mean; NaN entries are skipped (the last average carries forward)."""
    values = np.asarray(values, dtype=np.float64)
    out = np.full(len(values), np.nan)
    total, count = 0.0, 0
    for i, v in enumerate(values):
        if not np.isnan(v):
            total += v
            count += 1
        if count:
            out[i] = total / count
    return out


def _per_step_mean(records, field, steps):
    out = np.full(steps, np.nan)
    for s in range(steps):
        vals = [getattr(r, field) for r in records if r.step == s and getattr(r, field) is not None]
        if vals:
            out[s] = float(np.mean(vals))
    return out


def _labels(names):
    seen, out = {}, []
    for n in names:
        seen[n] = seen.get(n, 0) + 1
        out.append(n if seen[n] == 1 else f"{n}#{seen[n]}")
    return out


def compare_estimators(config: ExperimentConfig, write: bool = True) -> dict:
    """Run every estimator in ``config.estimators`` on identical targets and seeds.

    Writes one trajectory per estimator plus ``<stem>.comparison.csv`` holding
    cumulative-average smoothed loss, variance and bias columns, and a text table.
    """
    if len(config.estimators) < 2:
        raise ConfigError("compare needs at least two estimators")
    config.validate()
    out = Path(config.out)
    stem = out.with_suffix("") if out.suffix == ".csv" else out
    labels = _labels(config.estimators)
    runs = {}
    for label, name in zip(labels, config.estimators):
        cfg = dataclasses.replace(config, estimator=name, estimators=(), out=str(stem) + f".{label}.csv")
        runs[label] = run_synthetic(cfg, write=write)
    columns = {"step": np.arange(config.steps)}
    for label, run in runs.items():
        for field in ("loss", "grad_var", "grad_bias_norm"):
            columns[f"{label}_{field}"] = cumulative_average(_per_step_mean(run["records"], field, config.steps))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(columns))
    for i in range(config.steps):
        writer.writerow([i] + [("" if np.isnan(col[i]) else repr(float(col[i])))
                               for key, col in columns.items() if key != "step"])
    table = _summary_table(runs, columns, config.steps)
    if write:
        Path(str(stem) + ".comparison.csv").write_text(buf.getvalue())
        Path(str(stem) + ".comparison.txt").write_text(table)
    return {"runs": runs, "comparison_csv": buf.getvalue(), "table": table}


def _summary_table(runs, columns, steps) -> str:
    header = f"{'estimator':<16}{'loss':>14}{'grad_var':>14}{'bias_norm':>14}{'grid_gap':>12}"
    lines = [header, "-" * len(header)]
    last = steps - 1
    for label, run in runs.items():
        vals = [columns[f"{label}_{f}"][last] for f in ("loss", "grad_var", "grad_bias_norm")]
        lines.append(f"{label:<16}" + "".join(f"{v:>14.6g}" for v in vals)
                     + f"{run['summary']['grid_gap']:>12.4g}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# ground truth by brute force

def _bounds(template: dist.DistributionSpec, n: int | None):
    f = template.family
    prob = (1e-4, 1 - 1e-4)
    if f is dist.Family.POISSON:
        return [(1e-3, float(max(n - 1, 1)))]
    if f is dist.Family.NEGATIVE_BINOMIAL:
        return [(1e-3, 100.0), prob]
    if f in (dist.Family.CATEGORICAL, dist.Family.MULTINOMIAL):
        if len(template.probs) != 3 and len(template.probs) != 2:
            raise ConfigError("grid search covers one- or two-dimensional parameter spaces only")
        return [prob] * (len(template.probs) - 1)
    return [prob]


def grid_search_optimum(config: ExperimentConfig, problem: Problem | None = None) -> dict:
    """Brute-force minimizer of the enumerated objective over the model's parameters.

    A coarse grid is refined around its best point until the spacing reaches
    ``config.grid_resolution``.  Returns ``{"params", "loss", "spec"}``.
    """
    if problem is None:
        problem = build_problem(config, config.estimator)
    template, n, objective = problem.template, problem.n, problem.objective
    simplex = template.family in (dist.Family.CATEGORICAL, dist.Family.MULTINOMIAL)
    bounds = np.array(_bounds(template, n))
    lo, hi = bounds[:, 0].copy(), bounds[:, 1].copy()
    points = 201 if len(bounds) == 1 else 41

    def theta_of(x):
        return np.append(x, 1.0 - x.sum()) if simplex else x

    def loss(x):
        theta = theta_of(x)
        if simplex and theta[-1] < 1e-4:
            return np.inf
        try:
            spec = dist.with_learnable(template, theta)
        except ParameterDomainError:
            return np.inf
        return est.enumerated_loss(objective, spec, n)

    while True:
        axes = [np.linspace(a, b, points) for a, b in zip(lo, hi)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
        values = np.array([loss(x) for x in mesh])
        best = mesh[int(np.argmin(values))]
        spacing = (hi - lo) / (points - 1)
        if np.all(spacing <= config.grid_resolution):
            break
        lo = np.maximum(best - 2 * spacing, bounds[:, 0])
        hi = np.minimum(best + 2 * spacing, bounds[:, 1])
    theta = theta_of(best)
    return {"params": theta, "loss": float(values.min()), "spec": dist.with_learnable(template, theta)}
