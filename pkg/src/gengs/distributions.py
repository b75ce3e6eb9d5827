"""Discrete distributions, their truncations, and differentiable log-PMFs.

PMFs are evaluated in log space from log-gamma terms and only exponentiated at
the end.  A truncation maps a distribution onto a finite categorical: each
kept outcome keeps its mass and the discarded tail is folded into the boundary
category, so the result still sums to one.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import digamma, gammaln, xlogy

from . import autodiff as ad
from .errors import NotTruncatableError, ParameterDomainError, TailTooHeavyError

PI_FLOOR = 1e-30
_SIMPLEX_TOL = 1e-9
_TAIL_EXHAUSTED = 1e-12


class Family(enum.Enum):
    POISSON = "poisson"
    BINOMIAL = "binomial"
    GEOMETRIC = "geometric"
    NEGATIVE_BINOMIAL = "negbin"
    BERNOULLI = "bernoulli"
    CATEGORICAL = "categorical"
    MULTINOMIAL = "multinomial"


class Truncatability(enum.IntEnum):
    NOT_TRUNCATABLE = 0
    ONE_SIDED = 1
    TWO_SIDED = 2


_ALIASES = {
    "pois": Family.POISSON,
    "binom": Family.BINOMIAL,
    "geom": Family.GEOMETRIC,
    "negative_binomial": Family.NEGATIVE_BINOMIAL,
    "nbinom": Family.NEGATIVE_BINOMIAL,
    "bern": Family.BERNOULLI,
    "cat": Family.CATEGORICAL,
    "multi": Family.MULTINOMIAL,
}


def _check_prob(p, name="p"):
    if not 0.0 < p < 1.0:
        raise ParameterDomainError(f"{name} must lie in (0, 1), got {p}")


def _check_simplex(probs):
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or len(probs) < 1:
        raise ParameterDomainError("probability vector must be a non-empty 1-D sequence")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > _SIMPLEX_TOL:
        raise ParameterDomainError(f"probability vector must lie on the simplex, got {probs.tolist()}")


def _check_count(n, name):
    if n != int(n) or n < 1:
        raise ParameterDomainError(f"{name} must be a positive integer, got {n}")


@dataclass(frozen=True)
class DistributionSpec:
    """A distribution family plus its parameters.

    Parameter layouts: ``(lam,)`` Poisson, ``(n, p)`` Binomial, ``(p,)``
    Geometric/Bernoulli, ``(r, p)`` NegativeBinomial, ``(p_0, ..., p_d)``
    Categorical, ``(m, p_0, ..., p_d)`` Multinomial.  Geometric and negative
    binomial count failures before the r-th success with success probability p.
    """

    family: Family
    params: tuple

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(x) for x in self.params))
        _validate(self.family, self.params)

    def __str__(self):
        return f"{self.family.value}:" + ",".join(f"{x:g}" for x in self.params)

    @property
    def probs(self) -> np.ndarray:
        if self.family is Family.CATEGORICAL:
            return np.array(self.params)
        if self.family is Family.MULTINOMIAL:
            return np.array(self.params[1:])
        raise AttributeError(f"{self.family.value} has no probability vector")

    @property
    def multivariate(self) -> bool:
        return self.family is Family.MULTINOMIAL


def _validate(family: Family, params: tuple):
    arity = {
        Family.POISSON: 1, Family.BINOMIAL: 2, Family.GEOMETRIC: 1,
        Family.NEGATIVE_BINOMIAL: 2, Family.BERNOULLI: 1,
    }
    if family in arity and len(params) != arity[family]:
        raise ParameterDomainError(f"{family.value} takes {arity[family]} parameter(s), got {len(params)}")
    if any(not math.isfinite(x) for x in params):
        raise ParameterDomainError(f"non-finite parameter in {params}")
    if family is Family.POISSON:
        if params[0] <= 0:
            raise ParameterDomainError(f"Poisson rate must be positive, got {params[0]}")
    elif family is Family.BINOMIAL:
        _check_count(params[0], "binomial trial count")
        _check_prob(params[1])
    elif family in (Family.GEOMETRIC, Family.BERNOULLI):
        _check_prob(params[0])
    elif family is Family.NEGATIVE_BINOMIAL:
        if params[0] <= 0:
            raise ParameterDomainError(f"negative binomial r must be positive, got {params[0]}")
        _check_prob(params[1])
    elif family is Family.CATEGORICAL:
        _check_simplex(params)
    elif family is Family.MULTINOMIAL:
        if len(params) < 2:
            raise ParameterDomainError("multinomial needs a trial count and a probability vector")
        _check_count(params[0], "multinomial trial count")
        _check_simplex(params[1:])


def poisson(lam) -> DistributionSpec:
    return DistributionSpec(Family.POISSON, (lam,))


def binomial(n, p) -> DistributionSpec:
    return DistributionSpec(Family.BINOMIAL, (n, p))


def geometric(p) -> DistributionSpec:
    return DistributionSpec(Family.GEOMETRIC, (p,))


def negative_binomial(r, p) -> DistributionSpec:
    return DistributionSpec(Family.NEGATIVE_BINOMIAL, (r, p))


def bernoulli(p) -> DistributionSpec:
    return DistributionSpec(Family.BERNOULLI, (p,))


def categorical(probs) -> DistributionSpec:
    return DistributionSpec(Family.CATEGORICAL, tuple(probs))


def multinomial(m, probs) -> DistributionSpec:
    return DistributionSpec(Family.MULTINOMIAL, (m, *probs))


def parse_spec(text: str) -> DistributionSpec:
    """Parse ``family:param,param,...`` such as ``poisson:20`` or ``negbin:3,0.4``.

    Vector parameters may be bracketed: ``multinomial:3,[0.7,0.2,0.1]``.
    """
    name, _, rest = text.strip().partition(":")
    name = name.strip().lower()
    try:
        family = _ALIASES.get(name) or Family(name)
    except ValueError:
        raise ParameterDomainError(f"unknown distribution family {name!r}") from None
    values = [float(tok) for tok in rest.replace("[", "").replace("]", "").split(",") if tok.strip()]
    return DistributionSpec(family, tuple(values))


# ---------------------------------------------------------------------------
# learnable parameters

def learnable(spec: DistributionSpec) -> np.ndarray:
    """The continuous parameters an optimizer may move (integer counts are fixed)."""
    f, p = spec.family, spec.params
    if f in (Family.BINOMIAL,):
        return np.array(p[1:])
    if f is Family.MULTINOMIAL:
        return np.array(p[1:])
    return np.array(p)


def learnable_names(spec: DistributionSpec) -> list[str]:
    f = spec.family
    if f is Family.POISSON:
        return ["lam"]
    if f is Family.NEGATIVE_BINOMIAL:
        return ["r", "p"]
    if f in (Family.CATEGORICAL, Family.MULTINOMIAL):
        return [f"p{i}" for i in range(len(spec.probs))]
    return ["p"]


def with_learnable(spec: DistributionSpec, values) -> DistributionSpec:
    values = tuple(float(v) for v in np.atleast_1d(values))
    if spec.family in (Family.BINOMIAL, Family.MULTINOMIAL):
        return DistributionSpec(spec.family, (spec.params[0], *values))
    return DistributionSpec(spec.family, values)


def register_params(spec: DistributionSpec, tape: ad.Tape) -> list[ad.Var]:
    """Put the learnable parameters on ``tape``; probability vectors become one vector Var."""
    if spec.family in (Family.CATEGORICAL, Family.MULTINOMIAL):
        return [tape.variable(spec.probs)]
    return [tape.variable(x) for x in learnable(spec)]


def flatten_adjoints(params: Sequence[ad.Var]) -> np.ndarray:
    return np.concatenate([np.atleast_1d(v.adjoint) for v in params])


# ---------------------------------------------------------------------------
# PMFs and moments

def support_max(spec: DistributionSpec) -> int | None:
    """Largest support point, or None for an unbounded support."""
    f = spec.family
    if f is Family.BINOMIAL:
        return int(spec.params[0])
    if f is Family.BERNOULLI:
        return 1
    if f is Family.CATEGORICAL:
        return len(spec.params) - 1
    return None


def log_pmf(spec: DistributionSpec, k):
    """Vectorized log-PMF of a univariate spec; ``-inf`` outside the support."""
    if spec.multivariate:
        return _multinomial_log_pmf(spec, k)
    k = np.asarray(k)
    kf = k.astype(np.float64)
    smax = support_max(spec)
    inside = (k >= 0) & (k == np.floor(kf))
    if smax is not None:
        inside &= k <= smax
    kc = np.where(inside, kf, 0.0)
    f, prm = spec.family, spec.params
    with np.errstate(divide="ignore"):
        if f is Family.POISSON:
            lam = prm[0]
            out = xlogy(kc, lam) - lam - gammaln(kc + 1)
        elif f is Family.BINOMIAL:
            n, p = prm
            out = gammaln(n + 1) - gammaln(kc + 1) - gammaln(n - kc + 1) + kc * np.log(p) + (n - kc) * np.log1p(-p)
        elif f is Family.GEOMETRIC:
            p = prm[0]
            out = np.log(p) + kc * np.log1p(-p)
        elif f is Family.NEGATIVE_BINOMIAL:
            r, p = prm
            out = gammaln(kc + r) - gammaln(r) - gammaln(kc + 1) + r * np.log(p) + kc * np.log1p(-p)
        elif f is Family.BERNOULLI:
            p = prm[0]
            out = np.where(kc == 1, np.log(p), np.log1p(-p))
        elif f is Family.CATEGORICAL:
            out = np.log(np.asarray(prm))[kc.astype(int)]
        else:  # pragma: no cover - enum is exhaustive
            raise ValueError(f.value)
    return np.where(inside, out, -np.inf)


def _multinomial_log_pmf(spec, x):
    m, probs = spec.params[0], spec.probs
    x = np.asarray(x, dtype=np.float64)
    valid = np.all(x >= 0, axis=-1) & (x.sum(axis=-1) == m)
    out = gammaln(m + 1) - gammaln(x + 1).sum(axis=-1) + xlogy(x, probs).sum(axis=-1)
    return np.where(valid, out, -np.inf)


def pmf(spec: DistributionSpec, k):
    out = np.exp(log_pmf(spec, k))
    return float(out) if np.ndim(out) == 0 else out


def mean(spec: DistributionSpec):
    f, p = spec.family, spec.params
    if f is Family.POISSON:
        return p[0]
    if f is Family.BINOMIAL:
        return p[0] * p[1]
    if f is Family.GEOMETRIC:
        return (1 - p[0]) / p[0]
    if f is Family.NEGATIVE_BINOMIAL:
        return p[0] * (1 - p[1]) / p[1]
    if f is Family.BERNOULLI:
        return p[0]
    if f is Family.CATEGORICAL:
        return float(np.dot(np.arange(len(p)), p))
    return p[0] * spec.probs


def variance(spec: DistributionSpec):
    """Variance (``math.inf`` would flag an infinite one; no zoo family has it)."""
    f, p = spec.family, spec.params
    if f is Family.POISSON:
        return p[0]
    if f is Family.BINOMIAL:
        return p[0] * p[1] * (1 - p[1])
    if f is Family.GEOMETRIC:
        return (1 - p[0]) / p[0] ** 2
    if f is Family.NEGATIVE_BINOMIAL:
        return p[0] * (1 - p[1]) / p[1] ** 2
    if f is Family.BERNOULLI:
        return p[0] * (1 - p[0])
    if f is Family.CATEGORICAL:
        k = np.arange(len(p))
        return float(np.dot(k * k, p) - mean(spec) ** 2)
    probs = spec.probs
    return p[0] * probs * (1 - probs)


def truncatability(spec: DistributionSpec) -> Truncatability:
    """One-sided needs a finite mean; two-sided additionally a finite variance."""
    if not np.all(np.isfinite(mean(spec))):
        return Truncatability.NOT_TRUNCATABLE
    if not np.all(np.isfinite(variance(spec))):
        return Truncatability.ONE_SIDED
    return Truncatability.TWO_SIDED


def right_tail(spec: DistributionSpec, k: int) -> float:
    """``P(X >= k)`` without the cancellation error of ``1 - cdf``."""
    if k <= 0:
        return 1.0
    smax = support_max(spec)
    if smax is not None and k > smax:
        return 0.0
    f, p = spec.family, spec.params
    if f is Family.POISSON:
        return float(stats.poisson.sf(k - 1, p[0]))
    if f is Family.BINOMIAL:
        return float(stats.binom.sf(k - 1, int(p[0]), p[1]))
    if f is Family.GEOMETRIC:
        return float((1 - p[0]) ** k)
    if f is Family.NEGATIVE_BINOMIAL:
        return float(stats.nbinom.sf(k - 1, p[0], p[1]))
    if f is Family.BERNOULLI:
        return p[0]
    if f is Family.CATEGORICAL:
        return float(np.sum(p[k:]))
    raise NotTruncatableError("multinomial outcomes are vectors; tails are per-coordinate")


# ---------------------------------------------------------------------------
# truncation

def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TruncatedDistribution:
    """Categorical view of a truncated distribution: probabilities ``pi`` on outcomes ``c``."""

    pi: np.ndarray
    c: np.ndarray
    trunc_lo: int
    trunc_hi: int
    source: DistributionSpec | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "pi", _frozen(self.pi))
        object.__setattr__(self, "c", _frozen(self.c))
        if self.pi.shape != self.c.shape:
            raise ValueError("pi and c must have equal length")

    def __len__(self):
        return len(self.pi)

    @property
    def mean(self) -> float:
        return float(np.dot(self.pi, self.c))

    def same_support(self, other: "TruncatedDistribution") -> bool:
        return (self.trunc_lo, self.trunc_hi) == (other.trunc_lo, other.trunc_hi) and np.array_equal(self.c, other.c)


def _require_univariate(spec):
    if spec.multivariate:
        raise NotTruncatableError(
            "multinomial outcomes are count vectors; relax them per trial with multinomial_relax")


def truncate(spec: DistributionSpec, n: int) -> TruncatedDistribution:
    """Keep outcomes ``0..n-2`` and fold ``P(X >= n-1)`` into outcome ``n-1``."""
    if n < 2:
        raise ValueError(f"truncation level must be at least 2, got {n}")
    _require_univariate(spec)
    if truncatability(spec) < Truncatability.ONE_SIDED:
        raise NotTruncatableError(f"{spec} has no finite mean")
    head = pmf(spec, np.arange(n - 1))
    return TruncatedDistribution(np.append(head, right_tail(spec, n - 1)), np.arange(n), 0, n - 1, spec)


def truncate_two_sided(spec: DistributionSpec, lo: int, hi: int) -> TruncatedDistribution:
    """Keep outcomes ``lo..hi``; ``P(X < lo)`` goes to ``lo`` and ``P(X > hi)`` to ``hi``."""
    if lo >= hi:
        raise ValueError(f"need lo < hi, got lo={lo}, hi={hi}")
    if lo < 0:
        raise ValueError(f"lower bound must be a support point, got {lo}")
    _require_univariate(spec)
    if truncatability(spec) < Truncatability.TWO_SIDED:
        raise NotTruncatableError(f"{spec} needs a finite mean and variance for two-sided truncation")
    left = pmf(spec, np.arange(lo + 1)).sum()
    interior = pmf(spec, np.arange(lo + 1, hi))
    right = right_tail(spec, hi)
    pi = np.concatenate([[left], interior, [right]])
    return TruncatedDistribution(pi, np.arange(lo, hi + 1), lo, hi, spec)


def suggest_truncation(spec: DistributionSpec, epsilon: float, max_n: int = 1000) -> int:
    """Smallest ``n <= max_n`` whose discarded mass ``P(X >= n)`` is below ``epsilon``.

    The discarded mass is exactly ``tv_distance(spec, truncate(spec, n))``.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    _require_univariate(spec)
    hi = max_n
    if right_tail(spec, hi) >= epsilon:
        raise TailTooHeavyError(
            f"{spec}: tail mass {right_tail(spec, hi):.3g} at n={max_n} exceeds {epsilon:g}")
    if right_tail(spec, 2) < epsilon:
        return 2
    lo = 2  # invariant: tail(lo) >= epsilon > tail(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if right_tail(spec, mid) < epsilon:
            hi = mid
        else:
            lo = mid
    return hi


def _enumerate_pmf(spec: DistributionSpec, at_least: int) -> np.ndarray:
    """PMF on ``0..K`` with K past ``at_least`` and past tail exhaustion."""
    smax = support_max(spec)
    if smax is not None:
        return pmf(spec, np.arange(smax + 1))
    size = max(at_least + 1, 64)
    while True:
        p = pmf(spec, np.arange(size))
        if p.sum() > 1.0 - _TAIL_EXHAUSTED:
            return p
        size *= 2


def tv_distance(spec: DistributionSpec, truncated: TruncatedDistribution) -> float:
    orig = _enumerate_pmf(spec, int(truncated.c[-1]))
    trunc = np.zeros_like(orig)
    idx = truncated.c.astype(int)
    inside = idx < len(orig)
    trunc[idx[inside]] = truncated.pi[inside]
    residual = max(1.0 - orig.sum(), 0.0) + truncated.pi[~inside].sum()
    return float(min(0.5 * (np.abs(orig - trunc).sum() + residual), 1.0))


# ---------------------------------------------------------------------------
# differentiable log-PMF

def log_pmf_on_tape(spec: DistributionSpec, k, tape: ad.Tape, params: Sequence[ad.Var] | None = None) -> ad.Var:
    """Log-PMF at ``k`` (int or int array) as a tape expression of the learnable parameters.

    ``params`` come from :func:`register_params`; fresh ones are registered when omitted.
    For a multinomial, ``k`` is a count vector.
    """
    if params is None:
        params = register_params(spec, tape)
    f = spec.family
    if f is Family.MULTINOMIAL:
        x = np.asarray(k, dtype=np.float64)
        if x.sum() != spec.params[0] or np.any(x < 0):
            raise ValueError(f"{x.tolist()} is not a multinomial outcome of {spec}")
        const = gammaln(spec.params[0] + 1) - gammaln(x + 1).sum()
        nz = np.flatnonzero(x)
        return ad.add(ad.dot(ad.log(ad.take(params[0], nz)), x[nz]), const)

    k = np.asarray(k)
    smax = support_max(spec)
    if np.any(k < 0) or (smax is not None and np.any(k > smax)):
        raise ValueError(f"{k.tolist()} lies outside the support of {spec}")
    kf = k.astype(np.float64)
    if f is Family.POISSON:
        (lam,) = params
        return ad.sub(ad.mul(ad.log(lam), kf), ad.add(lam, gammaln(kf + 1)))
    if f is Family.BINOMIAL:
        n = spec.params[0]
        (p,) = params
        const = gammaln(n + 1) - gammaln(kf + 1) - gammaln(n - kf + 1)
        return ad.add(ad.add(ad.mul(ad.log(p), kf), ad.mul(ad.log(ad.sub(1.0, p)), n - kf)), const)
    if f is Family.GEOMETRIC:
        (p,) = params
        return ad.add(ad.mul(ad.log(ad.sub(1.0, p)), kf), ad.log(p))
    if f is Family.NEGATIVE_BINOMIAL:
        r, p = params
        log_coef = ad.sub(ad.lgamma(ad.add(r, kf)), ad.add(ad.lgamma(r), gammaln(kf + 1)))
        return ad.add(log_coef, ad.add(ad.mul(ad.log(p), r), ad.mul(ad.log(ad.sub(1.0, p)), kf)))
    if f is Family.BERNOULLI:
        (p,) = params
        return ad.add(ad.mul(ad.log(p), kf), ad.mul(ad.log(ad.sub(1.0, p)), 1.0 - kf))
    if f is Family.CATEGORICAL:
        return ad.log(ad.take(params[0], k.astype(int)))
    raise ad.UnsupportedOperationError(f"no differentiable log-PMF for {f.value}")


def _tail_series_end(spec: DistributionSpec, start: int, mass: float, max_terms: int = 20_000) -> int | None:
    """End (exclusive) of a range from ``start`` holding all but ``1e-17`` of the tail ``mass``.

    None when that would take more than ``max_terms`` terms.
    """
    smax = support_max(spec)
    if smax is not None and smax + 1 - start <= max_terms:
        return smax + 1
    target = 1e-17 * mass
    hi = start + max_terms
    if right_tail(spec, hi) >= target:
        return None
    lo = start
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if right_tail(spec, mid) < target:
            hi = mid
        else:
            lo = mid
    return hi


def _log_tail_on_tape(spec: DistributionSpec, start: int, params: Sequence[ad.Var]) -> ad.Var:
    """``log P(X >= start)`` on the tape, floored at ``log(PI_FLOOR)``.

    A small tail is summed term by term; ``1 - sum(head)`` would lose it to cancellation.
    """
    tape = params[0].tape
    log_floor = math.log(PI_FLOOR)
    mass = right_tail(spec, start)
    if mass < PI_FLOOR:
        return tape._push(log_floor)
    end = _tail_series_end(spec, start, mass) if mass < 0.5 else None
    if end is None:
        head = log_pmf_on_tape(spec, np.arange(start), tape, params)
        return ad.log(ad.clip_min(ad.sub(1.0, ad.sum(ad.exp(head))), PI_FLOOR))
    terms = log_pmf_on_tape(spec, np.arange(start, end), tape, params)
    shift = float(terms.value.max())
    log_mass = ad.add(ad.log(ad.sum(ad.exp(ad.sub(terms, shift)))), shift)
    return ad.clip_min(log_mass, log_floor)


def truncated_log_pi_on_tape(spec: DistributionSpec, n: int, params: Sequence[ad.Var]) -> ad.Var:
    """``log pi`` of ``truncate(spec, n)`` on the tape, entries floored at ``PI_FLOOR``."""
    _require_univariate(spec)
    smax = support_max(spec)
    n_live = n - 1 if smax is None else min(n - 1, smax + 1)
    log_floor = math.log(PI_FLOOR)
    head = ad.clip_min(log_pmf_on_tape(spec, np.arange(n_live), params[0].tape, params), log_floor)
    tail = _log_tail_on_tape(spec, n - 1, params)
    pad = np.full(n - 1 - n_live, log_floor)
    parts = [head, pad, tail] if len(pad) else [head, tail]
    return ad.concat(parts)


# ---------------------------------------------------------------------------
# closed-form scores and exact sampling

def score(spec: DistributionSpec, k) -> np.ndarray:
    """Gradient of ``log pmf(k)`` w.r.t. the learnable parameters, one row per sample."""
    f, prm = spec.family, spec.params
    k = np.asarray(k, dtype=np.float64)
    if f is Family.POISSON:
        return (k / prm[0] - 1.0)[..., None]
    if f is Family.BINOMIAL:
        n, p = prm
        return (k / p - (n - k) / (1 - p))[..., None]
    if f is Family.GEOMETRIC:
        p = prm[0]
        return (1.0 / p - k / (1 - p))[..., None]
    if f is Family.NEGATIVE_BINOMIAL:
        r, p = prm
        return np.stack([digamma(k + r) - digamma(r) + np.log(p), r / p - k / (1 - p)], axis=-1)
    if f is Family.BERNOULLI:
        p = prm[0]
        return (k / p - (1 - k) / (1 - p))[..., None]
    probs = spec.probs
    if f is Family.CATEGORICAL:
        return np.eye(len(probs))[k.astype(int)] / probs
    return k / probs


@lru_cache(maxsize=256)
def _cdf_table(spec: DistributionSpec) -> np.ndarray:
    if spec.family is Family.CATEGORICAL:
        return np.cumsum(spec.probs)
    if spec.family is Family.MULTINOMIAL:
        return np.cumsum(spec.probs)
    smax = support_max(spec)
    if smax is not None:
        return np.cumsum(pmf(spec, np.arange(smax + 1)))
    size = 64
    while True:
        cdf = np.cumsum(pmf(spec, np.arange(size)))
        if cdf[-1] > 1.0 - 1e-14:
            return cdf
        size *= 2


def _ppf_fallback(spec, u):
    f, p = spec.family, spec.params
    if f is Family.POISSON:
        return stats.poisson.ppf(u, p[0])
    if f is Family.GEOMETRIC:
        return stats.geom.ppf(u, p[0]) - 1
    if f is Family.NEGATIVE_BINOMIAL:
        return stats.nbinom.ppf(u, p[0], p[1])
    return np.full_like(u, support_max(spec))


def inverse_cdf(spec: DistributionSpec, u: np.ndarray) -> np.ndarray:
    """Smallest k with ``cdf(k) >= u`` for univariate specs."""
    cdf = _cdf_table(spec)
    k = np.searchsorted(cdf, u, side="left").astype(np.float64)
    beyond = k >= len(cdf)
    if np.any(beyond):
        k[beyond] = _ppf_fallback(spec, u[beyond])
    return k


def sample(spec: DistributionSpec, source, size: int) -> np.ndarray:
    """Exact draws by inverse CDF; multinomials return a ``(size, d)`` count array."""
    if spec.multivariate:
        m, d = int(spec.params[0]), len(spec.probs)
        u = source.uniforms((size, m))
        cats = np.minimum(np.searchsorted(_cdf_table(spec), u, side="left"), d - 1)
        return np.stack([(cats == j).sum(axis=1) for j in range(d)], axis=1).astype(np.float64)
    return inverse_cdf(spec, source.uniforms(size))


# ---------------------------------------------------------------------------
# outcome enumeration

def compositions(m: int, d: int) -> np.ndarray:
    """All count vectors of length ``d`` summing to ``m``."""
    rows = []
    for bars in itertools.combinations(range(m + d - 1), d - 1):
        edges = (-1, *bars, m + d - 1)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(d)])
    return np.array(rows, dtype=np.float64)


def support_table(spec: DistributionSpec, n: int | None = None):
    """``(values, probs)`` over the enumerable support: the truncation for univariate
    specs, every count vector for a multinomial."""
    if spec.multivariate:
        values = compositions(int(spec.params[0]), len(spec.probs))
        return values, np.exp(log_pmf(spec, values))
    if n is None:
        smax = support_max(spec)
        if smax is None:
            raise ValueError(f"{spec} has unbounded support; give a truncation level")
        n = smax + 1
    td = truncate(spec, n)
    return td.c, td.pi
