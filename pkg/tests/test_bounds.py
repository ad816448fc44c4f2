import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from open_averaging.bounds import (
    BoundMethod,
    QuadratureError,
    general_bound,
    ping_age_distribution,
    ping_bound,
    relaxed_bound,
)
from open_averaging.core import AgeDistribution, SystemParams

GRID_N = [2, 3, 5, 10, 50]
GRID_L = [0.01, 0.1, 1, 10, 100]


def test_ping_age_distribution_examples():
    d = ping_age_distribution(SystemParams(2, 1.0, 1.0))
    assert d.cdf(math.log(2)) == pytest.approx(0.5, abs=1e-15)
    assert d.cdf(0.0) == 0.0
    assert ping_age_distribution(SystemParams(11, 1.0, 0.1)).pdf(0.0) == pytest.approx(1.0)


def test_ping_age_distribution_without_communication():
    d = ping_age_distribution(SystemParams(5, 1.0, 0.0))
    assert d.mass_at_infinity == 1.0
    assert d.cdf(1e6) == 0.0


def test_general_bound_point_masses():
    p = SystemParams(10, 1.0, 1.0)
    assert general_bound(p, AgeDistribution.point_mass(0.0)).value == 0.0
    assert general_bound(p, AgeDistribution.point_mass(math.inf)).value == pytest.approx(0.09, abs=1e-15)


def test_general_bound_ping_anchor():
    # mpmath quadrature of (1/4) int 2 e^{-2t} (1 - e^{-2t}) dt gives 1/8.
    p = SystemParams(2, 1.0, 2.0)
    res = general_bound(p, ping_age_distribution(p))
    assert res.method is BoundMethod.GENERIC_QUADRATURE
    assert res.value == pytest.approx(0.125, rel=1e-8)


def test_general_bound_without_pdf_uses_survival():
    p = SystemParams(10, 1.0, 1.0)
    exp = ping_age_distribution(p)
    cdf_only = AgeDistribution(cdf=exp.cdf, tail_cutoff=exp.tail_cutoff)
    assert general_bound(p, cdf_only).value == pytest.approx(ping_bound(p).value, rel=1e-8)


def test_general_bound_partial_infinite_mass():
    # Mixture: half the time no information, half an exponential age.
    p = SystemParams(4, 0.5, 1.0)
    rate = 2.0
    mix = AgeDistribution(
        cdf=lambda s: 0.5 * -np.expm1(-rate * np.asarray(s)),
        pdf=lambda s: 0.5 * rate * np.exp(-rate * np.asarray(s)),
        tail_cutoff=25.0,
        mass_at_infinity=0.5,
    )
    beta = 2 * p.lambda_r
    expected = p.ceiling * (0.5 + 0.5 * beta / (rate + beta))
    assert general_bound(p, mix).value == pytest.approx(expected, rel=1e-8)


def test_general_bound_reports_failure():
    p = SystemParams(10, 1.0, 1.0)
    exp = ping_age_distribution(p)
    # Cutting the integral far too early leaves a tail larger than the tolerance.
    short = AgeDistribution(cdf=exp.cdf, pdf=exp.pdf, tail_cutoff=0.1)
    with pytest.raises(QuadratureError) as info:
        general_bound(p, short)
    assert info.value.estimate > 0 and info.value.error > 0


def test_general_bound_no_replacement():
    p = SystemParams(10, 0.0, 1.0)
    assert general_bound(p, ping_age_distribution(p)).value == 0.0
    assert general_bound(p, AgeDistribution.point_mass(math.inf)).value == pytest.approx(0.09)


def test_ping_bound_examples():
    assert ping_bound(SystemParams(2, 1.0, 2.0)).value == pytest.approx(0.125, abs=1e-15)
    assert ping_bound(SystemParams(10, 1.0, 0.0)).value == pytest.approx(0.09, abs=1e-15)
    assert ping_bound(SystemParams.from_ratio(10, 100)).value == pytest.approx(
        1.99556541019955654e-4, rel=1e-14)


def test_ping_bound_no_replacement_limits():
    with pytest.warns(RuntimeWarning):
        res = ping_bound(SystemParams(10, 0.0, 1.0))
    assert res.value == 0.0 and res.warning
    with pytest.raises(ValueError, match="indeterminate"):
        ping_bound(SystemParams(10, 0.0, 0.0))


@pytest.mark.parametrize("n", GRID_N)
@pytest.mark.parametrize("ratio", GRID_L)
def test_quadrature_matches_ping_closed_form(n, ratio):
    p = SystemParams.from_ratio(n, ratio)
    quad = general_bound(p, ping_age_distribution(p)).value
    closed = ping_bound(p).value
    assert abs(quad - closed) / closed < 1e-6


@pytest.mark.parametrize("c", [0.5, 2, 10])
@pytest.mark.parametrize("n", [2, 7, 40])
def test_ping_depends_on_ratio_only(n, c):
    base = ping_bound(SystemParams(n, 0.3, 1.1)).value
    assert ping_bound(SystemParams(n, 0.3 * c, 1.1 * c)).value == pytest.approx(base, rel=1e-14)


def test_ping_limits():
    p0 = SystemParams.from_ratio(10, 1e-12)
    assert ping_bound(p0).value == pytest.approx(p0.ceiling, rel=1e-9)
    assert ping_bound(SystemParams.from_ratio(10, 1e12)).value < 1e-12


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(2, 60),
    ratio=st.floats(1e-3, 1e3),
    rates=st.tuples(st.floats(0.05, 50.0), st.floats(0.05, 50.0)),
)
def test_cdf_dominance_monotonicity(n, ratio, rates):
    fast, slow = max(rates), min(rates)
    p = SystemParams.from_ratio(n, ratio)
    b_fast = general_bound(p, AgeDistribution.exponential(fast)).value
    b_slow = general_bound(p, AgeDistribution.exponential(slow)).value
    assert b_fast <= b_slow * (1 + 1e-9)


@pytest.mark.parametrize("n", [2, 3, 5, 10, 50, 200])
@pytest.mark.parametrize("ratio", [0.0] + GRID_L)
def test_bounds_within_ceiling(n, ratio):
    p = SystemParams.from_ratio(n, ratio)
    for fn in (ping_bound, relaxed_bound):
        v = fn(p).value
        assert 0.0 <= v <= p.ceiling + 1e-15


def test_relaxed_examples():
    for ratio in (0.1, 1.0, 37.0):
        p = SystemParams.from_ratio(2, ratio)
        assert relaxed_bound(p).value == ping_bound(p).value
        p3 = SystemParams.from_ratio(3, ratio)
        assert relaxed_bound(p3).value == pytest.approx(ping_bound(p3).value, rel=1e-15)
    assert relaxed_bound(SystemParams.from_ratio(10, 0.0)).value == pytest.approx(0.09, abs=1e-15)
    # 0.09 / 46 * (1 + ln(81/11) / 2), evaluated with mpmath at 40 digits.
    assert relaxed_bound(SystemParams.from_ratio(10, 10.0)).value == pytest.approx(
        3.909672275746371086e-3, rel=1e-13)


def test_relaxed_without_replacement():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert relaxed_bound(SystemParams(5, 0.0, 1.0)).value == 0.0
