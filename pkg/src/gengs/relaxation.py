"""Gumbel-Max selection, Gumbel-Softmax relaxation and the outcome transform.

A truncated distribution is a categorical over outcomes ``c``.  Gumbel-Max
picks a category, the transform ``dot(x, c)`` maps the (relaxed) one-hot back
to an outcome value, and replacing the argmax with a tempered softmax makes the
whole draw differentiable in the probabilities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .distributions import PI_FLOOR, TruncatedDistribution
from .errors import DomainError


def _log_probs(pi) -> np.ndarray:
    pi = np.asarray(pi, dtype=np.float64)
    if np.any(pi <= 0.0):
        raise DomainError("probability vector has zero entries; floor it before taking logs")
    return np.log(pi)


def floor_pi(pi, floor: float = PI_FLOOR) -> np.ndarray:
    return np.maximum(np.asarray(pi, dtype=np.float64), floor)


def _check_noise(n, noise):
    if len(noise) != n:
        raise ValueError(f"noise has length {len(noise)}, expected {n}")


def gumbel_max(pi, noise):
    """Return ``(one_hot, index)`` for ``argmax(log pi + g)``."""
    log_pi = _log_probs(pi)
    _check_noise(len(log_pi), noise)
    k = int(np.argmax(log_pi + noise))
    one_hot = np.zeros(len(log_pi))
    one_hot[k] = 1.0
    return one_hot, k


def gumbel_softmax_logits(log_pi: ad.Var, noise, tau: float) -> ad.Var:
    """Relaxed one-hot from log-probabilities already on a tape."""
    _check_noise(len(log_pi), noise)
    return ad.softmax_with_temperature(ad.add(log_pi, np.asarray(noise)), tau)


def gumbel_softmax(pi, noise, tau: float, tape: ad.Tape | None = None) -> ad.Var:
    """``softmax((log pi + g) / tau)``.

    ``pi`` is either a probability Var (gradients flow back through it) or a
    plain array, which is registered on ``tape`` as a leaf.
    """
    if isinstance(pi, ad.Var):
        if np.any(pi.value <= 0.0):
            raise DomainError("probability vector has zero entries; floor it before taking logs")
        log_pi = ad.log(pi)
    else:
        if tape is None:
            tape = ad.Tape()
        log_pi = tape.variable(_log_probs(pi))
    return gumbel_softmax_logits(log_pi, noise, tau)


def transform(x, c):
    """Map a (relaxed) one-hot to an outcome value: ``sum(x * c)``."""
    c = np.asarray(c, dtype=np.float64)
    if len(x) != len(c):
        raise ValueError(f"length mismatch: x has {len(x)} entries, c has {len(c)}")
    if isinstance(x, ad.Var):
        return ad.dot(x, c)
    return float(np.dot(np.asarray(x, dtype=np.float64), c))


@dataclass
class RelaxedSample:
    simplex: ad.Var
    value: ad.Var
    tau: float
    noise: np.ndarray
    c: np.ndarray

    @property
    def index(self) -> int:
        return int(np.argmax(self.simplex.value))


def gengs_from_log_pi(log_pi: ad.Var, c, noise, tau: float) -> RelaxedSample:
    c = np.asarray(c, dtype=np.float64)
    simplex = gumbel_softmax_logits(log_pi, noise, tau)
    return RelaxedSample(simplex, transform(simplex, c), tau, np.asarray(noise), c)


def gengs_sample(td: TruncatedDistribution, noise, tau: float, tape: ad.Tape | None = None) -> RelaxedSample:
    """Relaxed draw from a truncated distribution (probabilities floored before the log)."""
    if tape is None:
        tape = ad.Tape()
    log_pi = tape.variable(np.log(floor_pi(td.pi)))
    return gengs_from_log_pi(log_pi, td.c, noise, tau)


def straight_through(sample: RelaxedSample) -> RelaxedSample:
    """Discretize the forward pass to ``c[argmax]``; gradients follow the relaxed simplex."""
    hard = np.zeros(len(sample.c))
    hard[sample.index] = 1.0
    simplex = ad.straight_through(hard, sample.simplex)
    return RelaxedSample(simplex, transform(simplex, sample.c), sample.tau, sample.noise, sample.c)


def multinomial_relax(m: int, p, noise, tau: float, tape: ad.Tape | None = None) -> ad.Var:
    """Relaxed multinomial counts: the sum of ``m`` Gumbel-Softmax draws on ``p``.

    ``noise`` has shape ``(m, len(p))``, one Gumbel row per trial.
    """
    if m < 1:
        raise ValueError(f"trial count must be positive, got {m}")
    noise = np.asarray(noise, dtype=np.float64).reshape(m, -1)
    if isinstance(p, ad.Var):
        log_p = ad.log(p)
    else:
        if tape is None:
            tape = ad.Tape()
        log_p = tape.variable(_log_probs(p))
    counts = gumbel_softmax_logits(log_p, noise[0], tau)
    for row in noise[1:]:
        counts = ad.add(counts, gumbel_softmax_logits(log_p, row, tau))
    return counts


@dataclass(frozen=True)
class TemperatureSchedule:
    """Exponential decay ``max(tau_min, tau0 * exp(-decay_rate * step))``."""

    tau0: float = 1.0
    tau_min: float = 0.1
    decay_rate: float = 0.0

    def __post_init__(self):
        if self.tau_min <= 0:
            raise ValueError(f"tau_min must be positive, got {self.tau_min}")
        if self.tau0 < self.tau_min:
            raise ValueError(f"tau0={self.tau0} lies below the floor tau_min={self.tau_min}")
        if self.decay_rate < 0:
            raise ValueError(f"decay_rate must be non-negative, got {self.decay_rate}")

    def __call__(self, step: int) -> float:
        return temperature(self, step)

    @classmethod
    def constant(cls, tau: float) -> "TemperatureSchedule":
        return cls(tau, tau, 0.0)


def temperature(schedule: TemperatureSchedule, step: int) -> float:
    if step < 0:
        raise ValueError(f"step must be non-negative, got {step}")
    return max(schedule.tau_min, schedule.tau0 * math.exp(-schedule.decay_rate * step))
