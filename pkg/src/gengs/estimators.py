"""Gradient estimators for ``d/dθ E_{z ~ D(θ)}[f(z)]``.

Pathwise (GenGS) estimators build the truncated ``log pi(θ)`` on a fresh tape,
draw relaxed samples with Gumbel noise and backpropagate the objective.  The
score-function (REINFORCE) estimator uses exact discrete draws.  The exact
estimator enumerates the truncated support and serves as the oracle.

All gradients are with respect to the natural learnable parameters of the distribution
(see :func:`gengs.distributions.learnable`); an optimizer working on an
unconstrained parameterization applies the chain rule itself.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import distributions as dist
from .distributions import DistributionSpec, Family, TruncatedDistribution
from .divergence import kl_from_logits_on_tape
from .randomness import NoiseSource
from .relaxation import gengs_from_log_pi, multinomial_relax, straight_through

FD_STEP = 1e-6


def squared_error(z, t):
    """``(z - t)^2`` summed over the outcome's coordinates.

    Works on floats, arrays with a leading batch axis, and tape Vars.
    """
    d = z - t
    if isinstance(d, ad.Var):
        return ad.sum(ad.mul(d, d)) if d.shape else ad.mul(d, d)
    d = np.asarray(d, dtype=np.float64)
    return (d * d).sum(axis=-1) if np.ndim(t) else d * d


@dataclass
class Objective:
    """Separable loss ``sum_i term(z_i, t_i)`` over K latent dimensions.

    ``targets`` has shape ``(K,)`` for scalar outcomes or ``(K, d)`` for vector
    outcomes.  ``term`` must accept tape Vars and broadcast over a leading batch
    axis of numpy outcomes.
    """

    targets: np.ndarray
    term: Callable = squared_error

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=np.float64)

    @property
    def K(self) -> int:
        return len(self.targets)

    def evaluate(self, z) -> float:
        z = np.asarray(z, dtype=np.float64)
        return float(sum(np.sum(self.term(z[i], t)) for i, t in enumerate(self.targets)))

    def evaluate_on_tape(self, zs):
        total = 0.0
        for z, t in zip(zs, self.targets):
            total = total + self.term(z, t)
        return total

    def outcome_table(self, values) -> np.ndarray:
        """``sum_i term(v, t_i)`` for each enumerated outcome ``v`` (rows of ``values``)."""
        values = np.asarray(values, dtype=np.float64)
        out = np.zeros(len(values))
        for t in self.targets:
            out += np.broadcast_to(self.term(values, t), out.shape)
        return out


@dataclass
class GradEstimate:
    grad: np.ndarray
    loss_value: float
    sample_count: int
    seed: int | None = None

    def __post_init__(self):
        self.grad = np.atleast_1d(np.asarray(self.grad, dtype=np.float64))
        if not np.all(np.isfinite(self.grad)):
            raise FloatingPointError(f"non-finite gradient estimate {self.grad}")


def tangent(spec: DistributionSpec | None, grad) -> np.ndarray:
    """Project gradients w.r.t. a probability vector onto the simplex's tangent space.

    Moving along ``(1, ..., 1)`` leaves the simplex, so that component of an
    ambient gradient is arbitrary; dropping it makes estimators comparable.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if spec is not None and spec.family in (Family.CATEGORICAL, Family.MULTINOMIAL):
        return grad - grad.mean(axis=-1, keepdims=True)
    return grad


def _finish(tape, loss, params, sample_count, seed, spec=None) -> GradEstimate:
    if isinstance(loss, ad.Var):
        tape.backward(loss)
        grad = dist.flatten_adjoints(params)
        value = float(loss.value)
    else:  # objective did not depend on the sample
        grad = np.zeros(sum(np.size(p.value) for p in params))
        value = float(loss)
    return GradEstimate(tangent(spec, grad), value, sample_count, seed)


# ---------------------------------------------------------------------------
# exact oracle

def enumerated_loss(objective: Objective, spec: DistributionSpec, n: int | None) -> float:
    """``sum_k pi_k f(c_k)`` over the truncated support, summed over latent dimensions."""
    values, probs = dist.support_table(spec, n)
    return float(np.dot(probs, objective.outcome_table(values)))


def poisson_truncated_pmf_grad(lam: float, n: int) -> np.ndarray:
    """``d pi / d lam`` for ``truncate(Poisson(lam), n)``.

    ``d pmf(k)/d lam = pmf(k-1) - pmf(k)``; the folded last entry is minus the rest.
    """
    head = dist.pmf(dist.poisson(lam), np.arange(n - 1))
    d = head.copy()
    d[1:] = head[:-1] - head[1:]
    d[0] = -head[0]
    return np.append(d, -d.sum())


def _unchecked(spec: DistributionSpec, values) -> DistributionSpec:
    """Spec with perturbed learnable values, skipping simplex validation."""
    values = tuple(float(v) for v in values)
    params = (spec.params[0], *values) if spec.family in (Family.BINOMIAL, Family.MULTINOMIAL) else values
    out = object.__new__(DistributionSpec)
    object.__setattr__(out, "family", spec.family)
    object.__setattr__(out, "params", params)
    return out


def truncated_pmf_jacobian(spec: DistributionSpec, n: int | None, step: float = FD_STEP) -> np.ndarray:
    """``d pi / d theta`` with shape ``(len(pi), n_params)`` by central differences."""
    theta = dist.learnable(spec)
    cols = []
    for j in range(len(theta)):
        up, down = theta.copy(), theta.copy()
        up[j] += step
        down[j] -= step
        _, p_up = dist.support_table(_unchecked(spec, up), n)
        _, p_down = dist.support_table(_unchecked(spec, down), n)
        cols.append((p_up - p_down) / (2 * step))
    return np.stack(cols, axis=1)


def exact_gradient(objective: Objective, spec: DistributionSpec, n: int | None) -> GradEstimate:
    """Enumerated gradient of the truncated expectation.

    Closed form for Poisson; central differences on ``pi`` otherwise.
    """
    values, probs = dist.support_table(spec, n)
    table = objective.outcome_table(values)
    if spec.family is Family.POISSON:
        jac = poisson_truncated_pmf_grad(spec.params[0], len(probs))[:, None]
    else:
        jac = truncated_pmf_jacobian(spec, n)
    return GradEstimate(tangent(spec, table @ jac), float(np.dot(probs, table)), 0)


# ---------------------------------------------------------------------------
# pathwise estimators

def _relaxed_values(spec, n, tau, source, params, straight):
    """One relaxed outcome per latent dimension, as tape Vars."""
    if spec.family is Family.MULTINOMIAL:
        m, d = int(spec.params[0]), len(spec.probs)

        log_p = ad.log(params[0])
        categories = np.arange(d, dtype=np.float64)

        def draw():
            noise = source.gumbel((m, d))
            if not straight:
                return multinomial_relax(m, params[0], noise, tau)
            total = None
            for row in noise:
                hard = straight_through(gengs_from_log_pi(log_p, categories, row, tau)).simplex
                total = hard if total is None else ad.add(total, hard)
            return total

        return draw
    log_pi = dist.truncated_log_pi_on_tape(spec, n, params)
    c = np.arange(n, dtype=np.float64)

    def draw():
        sample = gengs_from_log_pi(log_pi, c, source.gumbel(n), tau)
        return straight_through(sample).value if straight else sample.value

    return draw


def _pathwise(objective, spec, n, tau, source, tape, straight) -> GradEstimate:
    tape = tape if tape is not None else ad.Tape()
    params = dist.register_params(spec, tape)
    draw = _relaxed_values(spec, n, tau, source, params, straight)
    zs = [draw() for _ in range(objective.K)]
    loss = objective.evaluate_on_tape(zs)
    return _finish(tape, loss, params, objective.K, source.seed, spec)


def gengs_explicit(objective: Objective, spec: DistributionSpec, n: int, tau: float,
                   noise_source: NoiseSource, tape: ad.Tape | None = None) -> GradEstimate:
    """Single-sample GenGS gradient through ``pi(theta)`` of the truncated distribution."""
    return _pathwise(objective, spec, n, tau, noise_source, tape, straight=False)


def st_gengs(objective: Objective, spec: DistributionSpec, n: int, tau: float,
             noise_source: NoiseSource, tape: ad.Tape | None = None) -> GradEstimate:
    """Straight-through GenGS: discrete forward values, relaxed backward path."""
    return _pathwise(objective, spec, n, tau, noise_source, tape, straight=True)


def gengs_rb(objective: Objective, spec: DistributionSpec, n: int, tau: float,
             noise_source: NoiseSource, tape: ad.Tape | None = None) -> GradEstimate:
    """GenGS with the most probable category summed out exactly.

    Per latent dimension, with ``k*`` the argmax of ``pi`` and ``z'`` a GenGS draw
    restricted to the other categories (renormalized), the surrogate
    ``pi_k* f(c_k*) + (1 - pi_k*) f(z')`` is differentiated on the tape.
    """
    if spec.multivariate:
        raise ValueError("gengs_rb needs a univariate truncatable distribution")
    tape = tape if tape is not None else ad.Tape()
    params = dist.register_params(spec, tape)
    log_pi = dist.truncated_log_pi_on_tape(spec, n, params)
    c = np.arange(n, dtype=np.float64)
    top = int(np.argmax(log_pi.value))
    rest = np.delete(np.arange(n), top)
    pi_top = ad.exp(ad.take(log_pi, top))
    weight_rest = ad.clip_min(ad.sub(1.0, pi_top), dist.PI_FLOOR)
    log_pi_rest = ad.sub(ad.take(log_pi, rest), ad.log(weight_rest))
    loss = 0.0
    for t in objective.targets:
        z_rest = gengs_from_log_pi(log_pi_rest, c[rest], noise_source.gumbel(n - 1), tau).value
        exact_part = ad.mul(pi_top, float(np.sum(objective.term(c[top], t))))
        loss = loss + exact_part + ad.mul(weight_rest, objective.term(z_rest, t))
    return _finish(tape, loss, params, objective.K, noise_source.seed, spec)


def gengs_implicit(objective: Objective, logits, prior: TruncatedDistribution, tau: float,
                   kl_weight: float, noise_source: NoiseSource,
                   tape: ad.Tape | None = None) -> GradEstimate:
    """GenGS on free categorical logits over ``prior.c`` with a KL pull toward ``prior.pi``.

    Returns the gradient with respect to the logits.
    """
    if not isinstance(logits, ad.Var):
        tape = tape if tape is not None else ad.Tape()
        logits = tape.variable(logits)
    tape = logits.tape
    if len(logits) != len(prior):
        raise ValueError(f"{len(logits)} logits for a prior with {len(prior)} categories")
    log_q = ad.log_softmax(logits)
    zs = [gengs_from_log_pi(log_q, prior.c, noise_source.gumbel(len(prior)), tau).value
          for _ in range(objective.K)]
    loss = objective.evaluate_on_tape(zs)
    if kl_weight:
        loss = loss + ad.mul(kl_from_logits_on_tape(logits, prior.pi), float(kl_weight))
    return _finish(tape, loss, [logits], objective.K, noise_source.seed)


def implicit_enumerated(objective: Objective, logits, prior: TruncatedDistribution,
                        kl_weight: float) -> tuple[float, np.ndarray]:
    """Exact loss and logits-gradient of the implicit objective (no sampling)."""
    tape = ad.Tape()
    lv = tape.variable(logits)
    q = ad.exp(ad.log_softmax(lv))
    loss = ad.dot(q, objective.outcome_table(prior.c))
    if kl_weight:
        loss = loss + ad.mul(kl_from_logits_on_tape(lv, prior.pi), float(kl_weight))
    tape.backward(loss)
    return float(loss.value), lv.adjoint.copy()


# ---------------------------------------------------------------------------
# score function

@dataclass
class RunningMeanBaseline:
    """Exponential moving average of past losses (the first loss seeds it)."""

    decay: float = 0.9
    value: float = 0.0
    count: int = 0

    def update(self, loss: float):
        self.value = loss if self.count == 0 else self.decay * self.value + (1 - self.decay) * loss
        self.count += 1


def _exact_draws(spec, source, size, K):
    draws = dist.sample(spec, source, size * K)
    return draws.reshape(size, K, -1) if spec.multivariate else draws.reshape(size, K)


def reinforce_batch(objective: Objective, spec: DistributionSpec, noise_source: NoiseSource,
                    size: int) -> tuple[np.ndarray, np.ndarray]:
    """``size`` independent no-baseline estimates; returns ``(losses, grads)``.

    Consumes the noise stream exactly as ``size`` sequential :func:`reinforce` calls.
    """
    draws = _exact_draws(spec, noise_source, size, objective.K)
    losses = np.zeros(size)
    for i, t in enumerate(objective.targets):
        losses += np.broadcast_to(objective.term(draws[:, i], t), (size,))
    scores = tangent(spec, dist.score(spec, draws).sum(axis=1))
    return losses, losses[:, None] * scores


def reinforce(objective: Objective, spec: DistributionSpec, noise_source: NoiseSource,
              baseline: RunningMeanBaseline | None = None) -> GradEstimate:
    """``(f(z) - b) * grad log p(z)`` with exact draws ``z``; ``b`` is 0 without a baseline."""
    draws = _exact_draws(spec, noise_source, 1, objective.K)[0]
    loss = objective.evaluate(draws)
    b = baseline.value if baseline is not None else 0.0
    grad = (loss - b) * tangent(spec, dist.score(spec, draws).sum(axis=0))
    if baseline is not None:
        baseline.update(loss)
    return GradEstimate(grad, loss, objective.K, noise_source.seed)


# ---------------------------------------------------------------------------
# Monte-Carlo moments

@dataclass
class Moments:
    mean: np.ndarray
    variance: np.ndarray
    bias: np.ndarray | None
    repeats: int

    @property
    def total_variance(self) -> float:
        return float(np.sum(self.variance))

    @property
    def bias_norm(self) -> float:
        return float(np.linalg.norm(self.bias)) if self.bias is not None else float("nan")


def estimate_moments(invoke: Callable[[int], GradEstimate], repeats: int,
                     exact: np.ndarray | GradEstimate | None = None, base_seed: int = 0) -> Moments:
    """Mean, unbiased elementwise variance and bias of ``repeats`` estimator calls.

    Replicate ``j`` is invoked with seed ``base_seed + j``.
    """
    if repeats < 2:
        raise ValueError(f"need at least two repeats, got {repeats}")
    grads = np.array([invoke(base_seed + j).grad for j in range(repeats)])
    mean = grads.mean(axis=0)
    var = grads.var(axis=0, ddof=1)
    if isinstance(exact, GradEstimate):
        exact = exact.grad
    bias = None if exact is None else mean - np.asarray(exact, dtype=np.float64)
    return Moments(mean, var, bias, repeats)
