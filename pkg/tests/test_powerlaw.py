import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsdecoder.errors import DomainError
from qsdecoder.powerlaw import (
    PowerLawSpec,
    ProductPowerLaw,
    continuous_h,
    harmonic_number,
    pmf,
    sample,
    subset_exponent_estimate,
    subset_exponent_exhaustive,
)


def exact_harmonic(R, k):
    return sum(Fraction(1, i**k) for i in range(1, R + 1))


@pytest.mark.parametrize("R, k, expected", [(1, 5.0, 1.0), (2, 1.0, 1.5)])
def test_harmonic_number_small_cases(R, k, expected):
    assert harmonic_number(R, k) == expected


def test_harmonic_number_matches_exact_rational():
    assert harmonic_number(3, 2.0) == pytest.approx(float(exact_harmonic(3, 2)), rel=1e-15)
    assert float(exact_harmonic(3, 2)) == pytest.approx(49 / 36, rel=1e-15)


def test_harmonic_number_at_zero_is_exactly_R():
    for R in range(1, 200):
        assert harmonic_number(R, 0.0) == R


def test_harmonic_number_small_k_keeps_digits():
    # fsum against a rational reference at integer exponent 1
    assert harmonic_number(100, 1.0) == pytest.approx(float(exact_harmonic(100, 1)), rel=1e-15)


@pytest.mark.parametrize("R, k, expected", [(5, 0.0, 4.0), (2, 2.0, 0.5), (10, 1.0, math.log(10))])
def test_continuous_h_cases(R, k, expected):
    assert continuous_h(R, k) == pytest.approx(expected, rel=1e-14)


def test_continuous_h_is_continuous_across_k_one():
    for R in (2, 10, 100):
        below = continuous_h(R, 1 - 1e-10)
        above = continuous_h(R, 1 + 1e-10)
        assert below == pytest.approx(math.log(R), rel=1e-9)
        assert above == pytest.approx(math.log(R), rel=1e-9)
        # just outside the series branch the closed form still agrees
        assert continuous_h(R, 1 + 2e-9) == pytest.approx(math.log(R), rel=1e-8)


@pytest.mark.parametrize("R", [2, 3, 7, 20, 50, 100])
@pytest.mark.parametrize("k", [0.1, 0.5, 1.0, 1.7, 2.91, 5.0])
def test_integral_sandwich(R, k):
    # r^-k is decreasing, so the sum over 1..R dominates the integral over [1, R+1]
    assert continuous_h(R, k) < continuous_h(R + 1, k) < harmonic_number(R, k) < 1 + continuous_h(R, k)


@given(st.integers(2, 100), st.floats(0, 8), st.floats(0, 8))
def test_harmonic_number_nonincreasing_in_k(R, k1, k2):
    lo, hi = sorted((k1, k2))
    assert harmonic_number(R, hi) <= harmonic_number(R, lo)


@given(st.integers(1, 300), st.floats(0, 10))
def test_pmf_sums_to_one(R, k):
    assert abs(math.fsum(PowerLawSpec(R, k).probabilities) - 1) <= 1e-12


def test_pmf_examples():
    assert pmf(PowerLawSpec(1, 3), 1) == 1.0
    assert pmf(PowerLawSpec(2, 1), 2) == pytest.approx(1 / 3, rel=1e-15)
    assert pmf(PowerLawSpec(3, 2), 1) == pytest.approx(36 / 49, rel=1e-15)


@pytest.mark.parametrize("r", [0, 4, -1])
def test_pmf_rejects_out_of_range_rank(r):
    with pytest.raises(DomainError):
        pmf(PowerLawSpec(3, 2), r)


@pytest.mark.parametrize("R, k", [(0, 1.0), (3, -0.1), (3, math.nan)])
def test_spec_rejects_invalid(R, k):
    with pytest.raises(DomainError):
        PowerLawSpec(R, k)


def test_sample_degenerate_and_deterministic():
    assert sample(PowerLawSpec(1, 2.0), 3, 5) == [1, 1, 1, 1, 1]
    spec = PowerLawSpec(30, 3.03)
    assert sample(spec, 7, 100) == sample(spec, 7, 100)
    assert sample(spec, 7, 0) == []


def test_sample_frequencies():
    spec = PowerLawSpec(30, 3.03)
    draws = np.array(sample(spec, 7, 10**5))
    assert abs(np.mean(draws == 1) - pmf(spec, 1)) <= 0.01
    assert draws.min() >= 1 and draws.max() <= 30
    uniform = np.array(sample(PowerLawSpec(2, 0.0), 11, 10**4))
    assert 0.48 <= np.mean(uniform == 1) <= 0.52


def test_product_pmf_factorizes():
    prod = ProductPowerLaw(PowerLawSpec(3, 2.0), 2)
    assert prod.pmf((1, 1)) == pytest.approx((36 / 49) ** 2, rel=1e-14)
    assert prod.pmf((2, 3)) == pytest.approx((1 / 4) * (1 / 9) * (36 / 49) ** 2, rel=1e-14)
    assert prod.log_pmf((1,) * 2) == pytest.approx(-2 * math.log(49 / 36), rel=1e-14)


@pytest.mark.parametrize("R, k, n", [(2, 1.0, 10), (3, 2.0, 6), (5, 0.5, 4), (10, 3.03, 3)])
def test_product_pmf_sums_to_one(R, k, n):
    prod = ProductPowerLaw(PowerLawSpec(R, k), n)
    total = math.fsum(p for _, p in prod.enumerate())
    assert total == pytest.approx(1.0, abs=1e-12)


def test_subset_full_set_returns_generator_exponent():
    spec = PowerLawSpec(30, 3.03)
    assert subset_exponent_estimate(spec, 30, 0, 1) == pytest.approx(3.03, abs=0.01)


def test_subset_single_rank_has_no_slope():
    assert subset_exponent_estimate(PowerLawSpec(30, 3.03), 1, 0, 10) == 0.0


def test_subset_rejects_oversize():
    with pytest.raises(DomainError):
        subset_exponent_estimate(PowerLawSpec(5, 2.0), 6, 0, 10)


def test_subset_three_of_thirty_is_flatter():
    value = subset_exponent_estimate(PowerLawSpec(30, 3.03), 3, 0, 10**4)
    assert 0 < value < 3.03


@pytest.mark.parametrize("R, k, size", [(6, 2.0, 3), (8, 3.03, 4), (10, 1.5, 5), (10, 3.03, 3)])
def test_subset_estimate_matches_exhaustive_average(R, k, size):
    spec = PowerLawSpec(R, k)
    assert subset_exponent_estimate(spec, size, 1, 4 * 10**4) == pytest.approx(
        subset_exponent_exhaustive(spec, size), abs=0.03
    )


@pytest.mark.parametrize("k", [2.0, 3.03, 4.0])
@pytest.mark.parametrize("size", [3, 5, 10, 20])
def test_subset_estimate_stays_below_generator(k, size):
    assert subset_exponent_estimate(PowerLawSpec(30, k), size, 2, 10**3) < k + 0.05


@pytest.mark.xfail(strict=True, reason="sorting small subsets steepens the profile when k is near 1; see README")
def test_subset_estimate_below_generator_near_unit_exponent():
    assert subset_exponent_estimate(PowerLawSpec(30, 1.0), 3, 2, 10**3) < 1.0 + 0.05


@pytest.mark.xfail(strict=True, reason="averaged-profile fit gives about 2.59 for five of thirty ranks; see README")
def test_subset_five_of_thirty_near_quoted_value():
    value = subset_exponent_estimate(PowerLawSpec(30, 3.03), 5, 0, 10**4)
    assert value == pytest.approx(2.91, abs=0.05)
