"""Generalized Gumbel-Softmax gradient estimators for truncatable discrete distributions."""

__version__ = "0.1.0"
