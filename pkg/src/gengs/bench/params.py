"""Unconstrained parameterizations used by the optimizers.

Positive parameters go through softplus, probabilities through the logistic
function and probability vectors through softmax.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit, logit, softmax

from .. import distributions as dist
from ..distributions import Family


def _softplus(x):
    return np.logaddexp(0.0, x)


def _softplus_inv(y):
    return y + np.log(-np.expm1(-y))


def _kinds(spec: dist.DistributionSpec) -> list[str]:
    f = spec.family
    if f is Family.POISSON:
        return ["positive"]
    if f is Family.NEGATIVE_BINOMIAL:
        return ["positive", "probability"]
    if f in (Family.CATEGORICAL, Family.MULTINOMIAL):
        return ["simplex"]
    return ["probability"]


def to_unconstrained(spec: dist.DistributionSpec) -> np.ndarray:
    theta = dist.learnable(spec)
    kinds = _kinds(spec)
    if kinds == ["simplex"]:
        logits = np.log(theta)
        return logits - logits.mean()
    return np.array([_softplus_inv(x) if k == "positive" else logit(x) for x, k in zip(theta, kinds)])


def natural(template: dist.DistributionSpec, u: np.ndarray) -> np.ndarray:
    kinds = _kinds(template)
    if kinds == ["simplex"]:
        return softmax(u)
    return np.array([_softplus(x) if k == "positive" else expit(x) for x, k in zip(u, kinds)])


def from_unconstrained(template: dist.DistributionSpec, u: np.ndarray) -> dist.DistributionSpec:
    theta = natural(template, u)
    if _kinds(template) == ["simplex"]:
        theta = np.maximum(theta, 1e-300)
        theta = theta / theta.sum()
    else:
        # keep probabilities strictly inside (0, 1) after float rounding
        theta = np.array([np.clip(x, 1e-15, 1 - 1e-15) if k == "probability" else max(x, 1e-300)
                          for x, k in zip(theta, _kinds(template))])
    return dist.with_learnable(template, theta)


def pullback(template: dist.DistributionSpec, u: np.ndarray, grad_natural: np.ndarray) -> np.ndarray:
    """Chain rule: gradient w.r.t. ``u`` from a gradient w.r.t. the natural parameters."""
    kinds = _kinds(template)
    if kinds == ["simplex"]:
        p = softmax(u)
        return p * (grad_natural - np.dot(p, grad_natural))
    # d softplus = sigmoid; d expit = s (1 - s)
    jac = np.array([expit(x) if k == "positive" else expit(x) * (1 - expit(x)) for x, k in zip(u, kinds)])
    return jac * grad_natural
