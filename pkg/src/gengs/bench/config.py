"""Experiment configuration.

A config file is a flat JSON object whose keys mirror the CLI flags (dashes
become underscores).  Flags given on the command line override file values.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .. import distributions as dist
from ..errors import ConfigError
from ..relaxation import TemperatureSchedule

ESTIMATORS = ("gengs", "gengs-implicit", "gengs-rb", "st-gengs", "reinforce", "exact")
OPTIMIZERS = ("sgd", "adam")

# estimators that only handle univariate (truncatable) outcomes
_UNIVARIATE_ONLY = {"gengs-implicit", "gengs-rb"}


@dataclass
class ExperimentConfig:
    dist: str = "poisson:20"
    model_family: str | None = None
    K: int = 1
    estimator: str = "gengs"
    estimators: tuple = ()
    trunc: int | None = None
    tail_eps: float = 1e-6
    tau0: float = 1.0
    tau_min: float = 0.1
    tau_decay: float = 0.0
    optimizer: str = "sgd"
    lr: float = 0.01
    steps: int = 1000
    replicates: int = 1
    seed: int = 0
    out: str = "trajectory.csv"
    baseline: bool = False
    kl_weight: float = 0.01
    cadence: int = 50
    moment_repeats: int = 256
    grid_resolution: float = 1e-3

    def __post_init__(self):
        if isinstance(self.estimators, str):
            self.estimators = tuple(e.strip() for e in self.estimators.split(",") if e.strip())
        else:
            self.estimators = tuple(self.estimators)

    # derived ---------------------------------------------------------------

    @property
    def target_spec(self) -> dist.DistributionSpec:
        return dist.parse_spec(self.dist)

    @property
    def schedule(self) -> TemperatureSchedule:
        return TemperatureSchedule(self.tau0, self.tau_min, self.tau_decay)

    def initial_model_spec(self) -> dist.DistributionSpec:
        """Model family at its default starting point: rates/shapes 1.0, probabilities 0.5,
        probability vectors uniform; integer counts are copied from the target."""
        target = self.target_spec
        family = dist.Family(self.model_family) if self.model_family else target.family
        if family is not target.family and family in (dist.Family.BINOMIAL, dist.Family.MULTINOMIAL):
            raise ConfigError(f"{family.value} models need a {family.value} target to fix the trial count")
        if family is dist.Family.POISSON:
            return dist.poisson(1.0)
        if family is dist.Family.BINOMIAL:
            return dist.binomial(target.params[0], 0.5)
        if family is dist.Family.GEOMETRIC:
            return dist.geometric(0.5)
        if family is dist.Family.BERNOULLI:
            return dist.bernoulli(0.5)
        if family is dist.Family.NEGATIVE_BINOMIAL:
            return dist.negative_binomial(1.0, 0.5)
        d = len(target.probs) if target.family in (dist.Family.CATEGORICAL, dist.Family.MULTINOMIAL) else 2
        uniform = [1.0 / d] * d
        if family is dist.Family.MULTINOMIAL:
            return dist.multinomial(target.params[0], uniform)
        return dist.categorical(uniform)

    def truncation_level(self) -> int | None:
        """Fixed truncation level for the run (None for multinomial outcomes)."""
        target = self.target_spec
        if target.multivariate:
            return None
        if self.trunc is not None:
            return int(self.trunc)
        return dist.suggest_truncation(target, self.tail_eps)

    def validate(self):
        if self.steps < 1:
            raise ConfigError(f"steps must be at least 1, got {self.steps}")
        if self.replicates < 1:
            raise ConfigError(f"replicates must be at least 1, got {self.replicates}")
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.K < 0:
            raise ConfigError(f"K must be non-negative, got {self.K}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; choose from {OPTIMIZERS}")
        if self.cadence < 1 or self.moment_repeats < 2:
            raise ConfigError("cadence must be >= 1 and moment_repeats >= 2")
        if self.trunc is not None and self.trunc < 2:
            raise ConfigError(f"truncation level must be at least 2, got {self.trunc}")
        if not math.isfinite(self.tail_eps) or not 0 < self.tail_eps < 1:
            raise ConfigError(f"tail_eps must lie in (0, 1), got {self.tail_eps}")
        try:
            self.schedule
            target = self.target_spec
            model = self.initial_model_spec()
        except ValueError as err:
            raise ConfigError(str(err)) from err
        for name in self.estimators or (self.estimator,):
            check_estimator(name, model)
        if target.multivariate != model.multivariate:
            raise ConfigError("target and model must both be univariate or both multinomial")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["estimators"] = ",".join(self.estimators)
        return out


def check_estimator(name: str, model: dist.DistributionSpec):
    if name not in ESTIMATORS:
        raise ConfigError(f"unknown estimator {name!r}; choose from {', '.join(ESTIMATORS)}")
    if name in _UNIVARIATE_ONLY and model.multivariate:
        raise ConfigError(f"{name} needs a univariate truncatable model, not {model.family.value}")
    if name == "reinforce" and not has_exact_sampler(model):
        raise ConfigError(f"reinforce needs an exact sampler for {model.family.value}")


def has_exact_sampler(spec: dist.DistributionSpec) -> bool:
    # every zoo family samples by inverse CDF (multinomial per trial)
    return spec.family in dist.Family


def load_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    """Read a JSON config file (optional) and apply non-None overrides on top."""
    values = {}
    if path is not None:
        with open(path) as fh:
            values = json.load(fh)
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return ExperimentConfig(**values)
