import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.special import eval_hermite, gammaln

from qho_kam.errors import DomainError, QuadratureError
from qho_kam.hermite import (
    build_basis,
    eigenvalue,
    hermite_derivatives,
    hermite_functions,
    ladder_apply,
    weighted_norm,
    weighted_norm_ratio,
)


def reference_h(i, x):
    # h_i = H_{i-1}(x) exp(-x^2/2) / sqrt(2^{i-1} (i-1)! sqrt(pi))
    n = i - 1
    lognorm = 0.5 * (n * math.log(2.0) + gammaln(n + 1) + 0.5 * math.log(math.pi))
    return eval_hermite(n, x) * np.exp(-x * x / 2 - lognorm)


def test_eigenvalues():
    assert eigenvalue(1) == 1
    assert eigenvalue(3) == 5
    with pytest.raises(DomainError):
        eigenvalue(0)


def test_values_match_physicists_polynomials():
    x = np.linspace(-6, 6, 37)
    H = hermite_functions(x, 20)
    for i in range(1, 21):
        ref = reference_h(i, x)
        assert np.max(np.abs(H[:, i - 1] - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


def test_first_functions_closed_form():
    x = np.array([-1.3, 0.0, 0.7, 2.5])
    H = hermite_functions(x, 2)
    g = np.exp(-x**2 / 2) / np.pi**0.25
    assert np.allclose(H[:, 0], g, rtol=0, atol=1e-15)
    assert np.allclose(H[:, 1], math.sqrt(2) * x * g, rtol=0, atol=1e-15)


def test_large_arguments_stay_finite():
    x = np.array([0.0, 10.0, 30.0, 45.0])
    H = hermite_functions(x, 600)
    assert np.all(np.isfinite(H))
    # far outside the classical region of h_1 everything underflows to 0
    assert H[3, 0] == 0.0
    # inside the classical region of h_600 (|x| < sqrt(1199)) values are O(0.1)
    assert 1e-3 < np.abs(H[1, -1]) < 1.0
    assert 1e-3 < np.max(np.abs(H[:, -1])) < 1.0


def test_derivative_relation():
    x = np.linspace(-5, 5, 41)
    H = hermite_functions(x, 12)
    dH = hermite_derivatives(x, H)
    h = 1e-6
    fd = (hermite_functions(x + h, 12) - hermite_functions(x - h, 12)) / (2 * h)
    assert np.max(np.abs(dH - fd)) < 1e-8


def test_ladder_apply():
    assert ladder_apply(1, "T") == (0.0, None)
    c, t = ladder_apply(3, "T")
    assert t == 2 and c == pytest.approx(2.0)
    c, t = ladder_apply(3, "Tdagger")
    assert t == 4 and c == pytest.approx(math.sqrt(6.0))
    with pytest.raises(DomainError):
        ladder_apply(1, "X")


def test_small_basis_gram():
    b = build_basis(4, 40)
    assert b.gram_deviation() <= 1e-12


def test_position_matrix_element():
    b = build_basis(8, 32)
    X = b.project(b.quad_nodes)
    assert X[0, 1] == pytest.approx(math.sqrt(0.5), abs=1e-14)
    assert X[0, 0] == pytest.approx(0.0, abs=1e-14)


def test_underresolved_quadrature_raises():
    with pytest.raises(QuadratureError, match="underresolved"):
        build_basis(10, 20)


def test_identities_moderate_size(basis32):
    assert basis32.gram_deviation() < 1e-12
    assert basis32.ladder_residual() < 1e-12
    assert basis32.eigen_residual() < 1e-10
    assert basis32.position_residual() < 1e-12


def test_quadrature_rule_shape(basis32):
    x, w = basis32.quad_nodes, basis32.quad_weights
    assert np.all(np.diff(x) > 0)
    assert np.allclose(x, -x[::-1], atol=1e-13)
    assert np.all(w > 0)


def test_weighted_norm_delta_zero():
    b = build_basis(16, 64)
    for i in (1, 5, 16):
        assert weighted_norm(b, i, 0.0) == pytest.approx(1.0, abs=1e-12)


def test_weighted_norm_closed_form():
    b = build_basis(4, 16)
    # int (1+|x|)^2 h_1^2 = 1 + 2 E|x| + E x^2 = 3/2 + 2/sqrt(pi)
    assert weighted_norm(b, 1, 1.0) ** 2 == pytest.approx(1.5 + 2 / math.sqrt(math.pi), rel=1e-13)


def test_weighted_norm_against_adaptive_quadrature():
    b = build_basis(16, 64)
    for i, d in [(3, 0.5), (9, 0.25), (16, 1.0)]:
        f = lambda x: (1 + abs(x)) ** (2 * d) * reference_h(i, np.array([x]))[0] ** 2
        val, _ = integrate.quad(f, 0, 40, limit=400, epsabs=1e-14, epsrel=1e-13)
        assert weighted_norm(b, i, d) == pytest.approx(math.sqrt(2 * val), rel=1e-10)


def test_weighted_norm_out_of_range():
    b = build_basis(4, 16)
    with pytest.raises(DomainError):
        weighted_norm(b, 5, 0.5)


@settings(max_examples=25, deadline=None)
@given(i=st.integers(1, 16), d1=st.floats(0, 1), d2=st.floats(0, 1))
def test_weighted_norm_monotone_in_delta(i, d1, d2):
    b = _B16
    lo, hi = sorted((d1, d2))
    assert weighted_norm(b, i, lo) <= weighted_norm(b, i, hi) * (1 + 1e-12)


def test_weighted_norm_ratio_first():
    b = build_basis(4, 16)
    assert weighted_norm_ratio(b, 1, 1.0) == pytest.approx(math.sqrt(1.5 + 2 / math.sqrt(math.pi)), rel=1e-13)


_B16 = build_basis(16, 64)
