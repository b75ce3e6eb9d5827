"""KL divergence between truncated distributions, in nats.

Truncations with a shared support are categoricals over the same outcomes, so
their KL is the categorical KL of the probability vectors.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .distributions import PI_FLOOR, TruncatedDistribution
from .errors import InfiniteDivergenceError


def kl_categorical(q, p) -> float:
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if q.shape != p.shape:
        raise ValueError(f"length mismatch: {q.shape} vs {p.shape}")
    support = q > 0
    if np.any(p[support] <= 0):
        raise InfiniteDivergenceError("q has mass where p has none")
    kl = np.sum(q[support] * (np.log(q[support]) - np.log(p[support])))
    return float(max(kl, 0.0))


def kl_truncated(q: TruncatedDistribution, p: TruncatedDistribution) -> float:
    if not q.same_support(p):
        raise ValueError("truncations must share their support (trunc_lo, trunc_hi and c)")
    return kl_categorical(q.pi, p.pi)


def kl_from_logits_on_tape(logits: ad.Var, p) -> ad.Var:
    """``KL(softmax(logits) || p)`` as a tape expression; ``p`` is floored before the log."""
    log_p = np.log(np.maximum(np.asarray(p, dtype=np.float64), PI_FLOOR))
    if len(log_p) != len(logits):
        raise ValueError(f"length mismatch: {len(logits)} logits vs {len(log_p)} prior entries")
    log_q = ad.log_softmax(logits)
    return ad.dot(ad.exp(log_q), ad.sub(log_q, log_p))
