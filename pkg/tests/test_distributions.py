import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from gengs import autodiff as ad
from gengs import distributions as dist
from gengs.distributions import Truncatability
from gengs.errors import (
    NotTruncatableError, ParameterDomainError, TailTooHeavyError, UnsupportedOperationError,
)
from gengs.randomness import NoiseSource

ZOO = [
    dist.poisson(2.0),
    dist.binomial(20, 0.3),
    dist.geometric(0.5),
    dist.negative_binomial(3.0, 0.4),
    dist.bernoulli(0.3),
    dist.categorical([0.7, 0.2, 0.1]),
]


def brute_tail(spec, n):
    """P(X >= n) by summing the PMF far past n."""
    k = np.arange(n, n + 5000)
    return float(np.sum(np.exp(dist.log_pmf(spec, k))))


# -- construction ---------------------------------------------------------------

@pytest.mark.parametrize("bad", [
    lambda: dist.poisson(0.0),
    lambda: dist.poisson(-1.0),
    lambda: dist.binomial(-1, 0.5),
    lambda: dist.binomial(2.5, 0.5),
    lambda: dist.geometric(0.0),
    lambda: dist.negative_binomial(0.0, 0.5),
    lambda: dist.bernoulli(1.5),
    lambda: dist.categorical([0.5, 0.6]),
    lambda: dist.multinomial(0, [0.5, 0.5]),
])
def test_invalid_parameters_rejected(bad):
    with pytest.raises(ParameterDomainError):
        bad()


def test_parse_spec():
    assert dist.parse_spec("poisson:20") == dist.poisson(20.0)
    assert dist.parse_spec("negbin:3,0.4") == dist.negative_binomial(3.0, 0.4)
    assert dist.parse_spec("multinomial:3,[0.7,0.2,0.1]") == dist.multinomial(3, [0.7, 0.2, 0.1])
    with pytest.raises(ParameterDomainError):
        dist.parse_spec("zipf:2")


# -- pmf and moments --------------------------------------------------------------

def test_pmf_examples():
    assert dist.pmf(dist.poisson(2.0), 0) == pytest.approx(math.exp(-2))
    assert dist.pmf(dist.geometric(0.5), 0) == pytest.approx(0.5)
    assert dist.pmf(dist.binomial(20, 0.3), 21) == 0.0
    assert dist.pmf(dist.poisson(2.0), -1) == 0.0


@pytest.mark.parametrize("spec, frozen", [
    (dist.poisson(3.5), stats.poisson(3.5)),
    (dist.binomial(20, 0.3), stats.binom(20, 0.3)),
    (dist.geometric(0.25), stats.nbinom(1, 0.25)),
    (dist.negative_binomial(3.0, 0.4), stats.nbinom(3.0, 0.4)),
    (dist.bernoulli(0.3), stats.bernoulli(0.3)),
])
def test_pmf_matches_scipy(spec, frozen):
    k = np.arange(40)
    assert np.allclose(dist.pmf(spec, k), frozen.pmf(k), rtol=1e-10, atol=1e-300)


def test_multinomial_pmf_sums_to_one():
    spec = dist.multinomial(3, [0.7, 0.2, 0.1])
    values, probs = dist.support_table(spec)
    assert len(values) == 10
    assert probs.sum() == pytest.approx(1.0)
    assert dist.pmf(spec, [3, 0, 0]) == pytest.approx(0.343)


@pytest.mark.parametrize("spec, m", [
    (dist.poisson(7.0), 7.0),
    (dist.binomial(20, 0.3), 6.0),
    (dist.geometric(0.25), 3.0),
    (dist.negative_binomial(3.0, 0.4), 4.5),
])
def test_means(spec, m):
    assert dist.mean(spec) == pytest.approx(m)


def test_variance_of_poisson():
    assert dist.variance(dist.poisson(7.0)) == pytest.approx(7.0)


# -- truncatability ----------------------------------------------------------------

def test_truncatability_classes():
    assert dist.truncatability(dist.poisson(2.0)) is Truncatability.TWO_SIDED
    assert dist.truncatability(dist.negative_binomial(3.0, 0.4)) >= Truncatability.ONE_SIDED
    assert dist.truncatability(dist.categorical([0.7, 0.2, 0.1])) is Truncatability.TWO_SIDED


def test_multinomial_cannot_be_truncated():
    with pytest.raises(NotTruncatableError):
        dist.truncate(dist.multinomial(3, [0.7, 0.2, 0.1]), 4)


# -- truncation -------------------------------------------------------------------

def test_truncate_poisson():
    td = dist.truncate(dist.poisson(2.0), 5)
    assert np.allclose(td.pi, [0.1353, 0.2707, 0.2707, 0.1804, 0.1429], atol=1e-4)
    assert np.array_equal(td.c, np.arange(5))
    assert td.pi.sum() == pytest.approx(1.0)


def test_truncate_covering_finite_support_is_identity():
    td = dist.truncate(dist.binomial(3, 0.5), 4)
    assert np.allclose(td.pi, [0.125, 0.375, 0.375, 0.125])


def test_truncate_categorical_is_identity():
    probs = [0.7, 0.2, 0.1]
    assert np.allclose(dist.truncate(dist.categorical(probs), 3).pi, probs)


def test_truncate_rejects_small_n():
    with pytest.raises(ValueError):
        dist.truncate(dist.poisson(2.0), 1)


def test_truncated_arrays_are_read_only():
    td = dist.truncate(dist.poisson(2.0), 5)
    with pytest.raises(ValueError):
        td.pi[0] = 1.0


def test_two_sided_binomial():
    td = dist.truncate_two_sided(dist.binomial(4, 0.5), 1, 3)
    assert np.allclose(td.pi, [0.3125, 0.375, 0.3125])
    assert np.array_equal(td.c, [1, 2, 3])


def test_two_sided_with_zero_lower_bound_matches_one_sided():
    spec = dist.poisson(2.0)
    a, b = dist.truncate_two_sided(spec, 0, 9), dist.truncate(spec, 10)
    assert np.allclose(a.pi, b.pi) and np.array_equal(a.c, b.c)


def test_two_sided_poisson_100_bounds():
    # PMF values at both cut points are negligible, so the folded tails are small
    spec = dist.poisson(100.0)
    td = dist.truncate_two_sided(spec, 50, 150)
    assert dist.pmf(spec, 50) < 1e-6 and dist.pmf(spec, 150) < 1e-6
    assert td.pi[0] < 1e-6
    assert td.pi[-1] < 2e-6
    assert td.c[0] == 50 and td.c[-1] == 150


def test_two_sided_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        dist.truncate_two_sided(dist.poisson(2.0), 3, 3)


# -- suggest_truncation / tv ------------------------------------------------------

def test_suggest_truncation_geometric():
    assert dist.suggest_truncation(dist.geometric(0.5), 2.0 ** -10) == 11


def test_suggest_truncation_poisson_is_minimal():
    spec = dist.poisson(7.0)
    n = dist.suggest_truncation(spec, 1e-6)
    assert brute_tail(spec, n) < 1e-6 <= brute_tail(spec, n - 1)


def test_suggest_truncation_binomial_bounded_by_support():
    assert dist.suggest_truncation(dist.binomial(20, 0.3), 1e-12) <= 22
    with pytest.raises(ValueError):
        dist.suggest_truncation(dist.binomial(20, 0.3), 0.0)


def test_suggest_truncation_heavy_tail():
    with pytest.raises(TailTooHeavyError):
        dist.suggest_truncation(dist.geometric(1e-4), 1e-6, max_n=1000)


def test_tv_zero_when_support_covered():
    assert dist.tv_distance(dist.binomial(3, 0.5), dist.truncate(dist.binomial(3, 0.5), 4)) == pytest.approx(0.0, abs=1e-15)


def test_tv_decreases_for_poisson_7():
    spec = dist.poisson(7.0)
    tvs = [dist.tv_distance(spec, dist.truncate(spec, n)) for n in (10, 20, 30)]
    assert tvs[0] > tvs[1] > tvs[2]
    assert tvs[2] < 1e-6


def test_tv_equals_discarded_mass():
    spec = dist.poisson(7.0)
    for n in (5, 10, 15):
        assert dist.tv_distance(spec, dist.truncate(spec, n)) == pytest.approx(brute_tail(spec, n), rel=1e-8)


# -- tape log-pmf -----------------------------------------------------------------

def _tape_grad(spec, k):
    tape = ad.Tape()
    params = dist.register_params(spec, tape)
    tape.backward(dist.log_pmf_on_tape(spec, k, tape, params))
    return dist.flatten_adjoints(params)


def test_poisson_tape_score():
    assert _tape_grad(dist.poisson(2.0), 2)[0] == pytest.approx(0.0, abs=1e-12)
    assert _tape_grad(dist.poisson(2.0), 5)[0] == pytest.approx(1.5)


@pytest.mark.parametrize("spec, k", [
    (dist.geometric(0.5), 3),
    (dist.negative_binomial(3.0, 0.4), 6),
    (dist.binomial(20, 0.3), 4),
    (dist.bernoulli(0.3), 1),
])
def test_tape_log_pmf_matches_finite_differences(spec, k):
    theta = dist.learnable(spec)
    h = 1e-6
    fd = []
    for i in range(len(theta)):
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        fd.append((dist.log_pmf(dist.with_learnable(spec, up), k)
                   - dist.log_pmf(dist.with_learnable(spec, dn), k)) / (2 * h))
    assert np.allclose(_tape_grad(spec, k), fd, rtol=1e-6)


def test_tape_value_matches_numpy():
    for spec in ZOO:
        tape = ad.Tape()
        assert float(dist.log_pmf_on_tape(spec, 1, tape).value) == pytest.approx(dist.log_pmf(spec, 1))


def test_closed_form_score_matches_tape():
    for spec in ZOO[:5]:
        assert np.allclose(dist.score(spec, 3 if spec.family is not dist.Family.BERNOULLI else 1),
                           _tape_grad(spec, 3 if spec.family is not dist.Family.BERNOULLI else 1))


def test_tape_log_pmf_rejects_non_integer_power():
    tape = ad.Tape()
    x = tape.variable(2.0)
    with pytest.raises(UnsupportedOperationError):
        x ** 3


# -- sampling ----------------------------------------------------------------------

@pytest.mark.parametrize("spec", ZOO)
def test_sample_frequencies_match_pmf(spec):
    draws = dist.sample(spec, NoiseSource(11), 50_000)
    k = np.arange(int(draws.max()) + 1)
    freq = np.bincount(draws.astype(int), minlength=len(k)) / len(draws)
    assert 0.5 * np.abs(freq - dist.pmf(spec, k)).sum() < 0.015


def test_multinomial_samples_sum_to_m():
    draws = dist.sample(dist.multinomial(3, [0.7, 0.2, 0.1]), NoiseSource(0), 1000)
    assert draws.shape == (1000, 3)
    assert np.all(draws.sum(axis=1) == 3)


# -- properties --------------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 60.0), st.integers(2, 120))
def test_truncated_poisson_is_a_distribution(lam, n):
    td = dist.truncate(dist.poisson(lam), n)
    assert np.all(td.pi >= 0)
    assert td.pi.sum() == pytest.approx(1.0, abs=1e-12)
    assert len(td) == n


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.2, 10.0), st.integers(2, 60))
def test_truncation_preserves_head(p, r, n):
    spec = dist.negative_binomial(r, p)
    td = dist.truncate(spec, n)
    assert np.allclose(td.pi[:-1], dist.pmf(spec, np.arange(n - 1)))
    assert td.pi[-1] == pytest.approx(dist.right_tail(spec, n - 1), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 30.0), st.integers(3, 60))
def test_tv_monotone_in_truncation_level(lam, n):
    spec = dist.poisson(lam)
    assert dist.tv_distance(spec, dist.truncate(spec, n + 1)) <= dist.tv_distance(spec, dist.truncate(spec, n)) + 1e-15
