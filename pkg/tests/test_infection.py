import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from open_averaging.bounds import general_bound, ping_age_distribution, ping_bound, relaxed_bound
from open_averaging.core import SystemParams
from open_averaging.infection import (
    InfectionChain,
    bidiagonal_resolvent_apply,
    forward_substitute_bidiagonal,
    infection_age_cdf,
    infection_bound_algebraic,
    infection_bound_matrix,
    solve_pk,
    spreading_sum,
)

GRID_N = [2, 3, 5, 10, 50, 200]
GRID_L = [0.01, 0.1, 1, 10, 100]


def rational_resolvent(n, lambda_c, beta):
    """w^T A (beta I - A)^{-1} e_1 by exact Gauss-Jordan on the dense matrix."""
    a = [[Fraction(0)] * n for _ in range(n)]
    for i in range(1, n + 1):
        a[i - 1][i - 1] = -i * (n - i) * lambda_c
        if i < n:
            a[i][i - 1] = i * (n - i) * lambda_c
    m = [[(beta if r == c else 0) - a[r][c] for c in range(n)] + [Fraction(int(r == 0))]
         for r in range(n)]
    for c in range(n):
        for r in range(n):
            if r != c and m[r][c]:
                f = m[r][c] / m[c][c]
                m[r] = [u - f * v for u, v in zip(m[r], m[c])]
    x = [m[r][n] / m[r][r] for r in range(n)]
    return sum(Fraction(k, n - 1) * (beta * x[k] - (k == 0)) for k in range(n))


def test_chain_structure():
    chain = InfectionChain(6, 0.7)
    a = chain.matrix()
    np.testing.assert_allclose(a.sum(axis=0), 0.0, atol=1e-14)
    assert np.all(a[:, -1] == 0)
    w = chain.weights
    assert w[0] == 0 and w[-1] == 1 and np.all(np.diff(w) > 0)
    p = np.random.default_rng(0).random(6)
    np.testing.assert_allclose(chain.apply(p), a @ p)


def test_solve_pk_examples():
    chain = InfectionChain(7, 1.3)
    np.testing.assert_array_equal(solve_pk(chain, 0.0), np.eye(7)[0])
    np.testing.assert_allclose(solve_pk(InfectionChain(2, 1.0), math.log(2)), [0.5, 0.5], atol=1e-12)
    for n in (2, 5, 30):
        assert solve_pk(InfectionChain(n, 0.4), 50 / 0.4)[-1] >= 1 - 1e-8


@pytest.mark.parametrize("n", [3, 6, 12])
def test_solve_pk_against_matrix_exponential(n):
    chain = InfectionChain(n, 0.9)
    s = np.array([0.05, 0.3, 1.0, 2.5])
    got = solve_pk(chain, s)
    for row, t in zip(got, s):
        np.testing.assert_allclose(row, scipy.linalg.expm(chain.matrix() * t)[:, 0], atol=1e-11)


@pytest.mark.parametrize("n", [2, 10, 50])
def test_probability_conservation(n):
    chain = InfectionChain(n, 1.0)
    s = np.geomspace(1e-4, 20.0, 100)
    p = solve_pk(chain, s)
    assert np.max(np.abs(p.sum(axis=1) - 1)) <= 1e-9
    assert p.min() >= -1e-12


def test_infection_cdf_examples():
    age = infection_age_cdf(InfectionChain(8, 0.5))
    assert age.cdf(0.0) == 0.0
    assert age.cdf(200.0) == pytest.approx(1.0, abs=1e-12)
    two = infection_age_cdf(InfectionChain(2, 1.0))
    s = np.linspace(0, 5, 11)
    np.testing.assert_allclose(two.cdf(s), -np.expm1(-s), atol=1e-12)


def test_infection_pdf_is_derivative_of_cdf():
    age = infection_age_cdf(InfectionChain(9, 0.8))
    s = np.linspace(0.05, 2.0, 9)
    h = 1e-5
    numeric = (age.cdf(s + h) - age.cdf(s - h)) / (2 * h)
    np.testing.assert_allclose(age.pdf(s), numeric, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(age.cdf(s) + age.survival(s), 1.0, atol=1e-12)


def test_infection_cdf_without_communication():
    age = infection_age_cdf(InfectionChain(5, 0.0))
    assert age.mass_at_infinity == 1.0


def test_resolvent_examples():
    assert bidiagonal_resolvent_apply(InfectionChain(2, 1.0), 2.0) == pytest.approx(1 / 3, abs=1e-15)
    assert bidiagonal_resolvent_apply(InfectionChain(10, 1.0), 1e15) < 1e-12
    assert bidiagonal_resolvent_apply(InfectionChain(10, 0.0), 2.0) == 0.0
    with pytest.raises(ValueError, match="resolvent undefined"):
        bidiagonal_resolvent_apply(InfectionChain(3, 1.0), 0.0)


@pytest.mark.parametrize("n,lambda_c,beta", [(3, Fraction(1), Fraction(2)), (5, Fraction(3, 2), Fraction(1)),
                                              (8, Fraction(1, 7), Fraction(5, 3))])
def test_resolvent_matches_exact_dense_solve(n, lambda_c, beta):
    exact = rational_resolvent(n, lambda_c, beta)
    got = bidiagonal_resolvent_apply(InfectionChain(n, float(lambda_c)), float(beta))
    assert got == pytest.approx(float(exact), rel=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0.5, 10.0), min_size=n, max_size=n),
    st.lists(st.floats(-5.0, 5.0), min_size=n - 1, max_size=n - 1),
    st.lists(st.floats(-5.0, 5.0), min_size=n, max_size=n),
)))
def test_forward_substitution_matches_dense(data):
    diag, sub, rhs = (np.array(v) for v in data)
    m = np.diag(diag) + (np.diag(sub, -1) if sub.size else 0)
    x = forward_substitute_bidiagonal(diag, sub, rhs)
    np.testing.assert_allclose(m @ x, rhs, atol=1e-9 * max(1.0, np.abs(x).max()))


def test_matrix_bound_examples():
    assert infection_bound_matrix(SystemParams(2, 1.0, 2.0)).value == pytest.approx(0.125, abs=1e-15)
    assert infection_bound_matrix(SystemParams(10, 1.0, 0.0)).value == pytest.approx(0.09, abs=1e-15)
    assert infection_bound_matrix(SystemParams(3, 1.0, 1.0)).value == pytest.approx(5 / 36, abs=1e-15)


def test_algebraic_bound_examples():
    assert spreading_sum(2, 4.0) == pytest.approx(2.0, abs=1e-15)
    assert infection_bound_algebraic(SystemParams.from_ratio(2, 4.0)).value == pytest.approx(1 / 12, abs=1e-15)
    assert spreading_sum(3, 1.0) == pytest.approx(0.75, abs=1e-15)
    assert infection_bound_algebraic(SystemParams.from_ratio(3, 1.0)).value == pytest.approx(5 / 36, abs=1e-15)
    for n in (2, 7, 50):
        assert spreading_sum(n, 0.0) == 0.0
        p = SystemParams.from_ratio(n, 0.0)
        assert infection_bound_algebraic(p).value == pytest.approx(p.ceiling, abs=1e-15)


def test_exact_rational_bound_n5():
    # lambda_c = 3/2, lambda_r = 1/2: exact rational value 2651/61250.
    p = SystemParams(5, 0.5, 1.5)
    assert infection_bound_matrix(p).value == pytest.approx(2651 / 61250, rel=1e-14)
    assert infection_bound_algebraic(p).value == pytest.approx(2651 / 61250, rel=1e-14)


@pytest.mark.parametrize("n", GRID_N)
@pytest.mark.parametrize("ratio", GRID_L)
def test_matrix_and_algebraic_agree(n, ratio):
    p = SystemParams.from_ratio(n, ratio)
    m = infection_bound_matrix(p).value
    a = infection_bound_algebraic(p).value
    assert abs(m - a) / m < 1e-10


def test_complement_identity():
    # Columns of A sum to 0, so 1 - w^T A (bI - A)^{-1} e_1 = b (1 - w)^T (bI - A)^{-1} e_1.
    from open_averaging.infection import _resolvent_column

    for n, lam, beta in [(4, 0.3, 2.0), (30, 5.0, 0.7)]:
        chain = InfectionChain(n, lam)
        x = _resolvent_column(chain, beta)
        lhs = 1 - bidiagonal_resolvent_apply(chain, beta)
        assert lhs == pytest.approx(beta * (1 - chain.weights) @ x, rel=1e-12)


@pytest.mark.parametrize("n", [2, 3, 5, 10])
@pytest.mark.parametrize("ratio", [0.1, 10])
def test_quadrature_matches_matrix_bound(n, ratio):
    p = SystemParams.from_ratio(n, ratio)
    quad = general_bound(p, infection_age_cdf(InfectionChain.from_params(p))).value
    closed = infection_bound_matrix(p).value
    assert abs(quad - closed) / closed < 1e-6


@pytest.mark.parametrize("n", GRID_N)
@pytest.mark.parametrize("ratio", GRID_L)
def test_bound_ordering(n, ratio):
    p = SystemParams.from_ratio(n, ratio)
    ping = ping_bound(p).value
    relaxed = relaxed_bound(p).value
    inf = infection_bound_matrix(p).value
    assert ping <= relaxed + 1e-12
    assert relaxed <= inf + 1e-12
    assert inf <= p.ceiling + 1e-12
    if n == 2:
        assert inf == pytest.approx(ping, abs=1e-12)


@pytest.mark.parametrize("n", [2, 3, 10, 50])
def test_infection_cdf_dominated_by_ping(n):
    p = SystemParams.from_ratio(n, 1.0)
    s = np.geomspace(1e-4, 50.0, 200)
    f_inf = infection_age_cdf(InfectionChain.from_params(p)).cdf(s)
    f_ping = ping_age_distribution(p).cdf(s)
    assert np.all(f_inf <= f_ping + 1e-12)
