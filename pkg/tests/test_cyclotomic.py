from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from MODRED.base.Cyclotomic import (
    RingElement,
    RingParams,
    conjugate,
    exact_norm,
    field_norm,
    galois_automorphism,
    galois_embed,
    log_embedding,
    log_norm,
    ring_inverse,
    ring_mul,
    ring_pow,
    trace,
)
from MODRED.base.utils import RingParameterException, ZeroElementException

K4 = RingParams(4)
small_coeffs = st.lists(st.integers(min_value=-5, max_value=5), min_size=K4.n, max_size=K4.n)


def element(coeffs, params=K4):
    return RingElement(tuple(coeffs), params)


class TestRingParams:
    def test_degree_and_orbit_size(self):
        params = RingParams(5)
        assert params.n == 16
        assert params.conductor == 32
        assert params.orbit_size == 8
        assert list(params.residues[:3]) == [1, 3, 5]

    @pytest.mark.parametrize("k", [0, 1, 2, 3.0, "4"])
    def test_rejects_invalid_k(self, k):
        with pytest.raises(RingParameterException):
            RingParams(k)


@pytest.mark.parametrize("k", [4, 7, 9])
def test_trace_orthogonality_of_power_basis(k):
    params = RingParams(k)
    n = params.n
    embedded = np.array([galois_embed(RingElement.monomial(params, a)).values for a in range(n)])
    gram = embedded @ embedded.conj().T
    assert np.allclose(gram, n * np.eye(n), rtol=1e-6, atol=1e-6 * n)


def test_zeta_to_the_n_is_minus_one():
    assert RingElement.monomial(K4, K4.n) == RingElement.scalar(K4, -1)
    assert RingElement.monomial(K4, 2 * K4.n + 3) == RingElement.monomial(K4, 3)


@given(small_coeffs, small_coeffs)
@settings(max_examples=50, deadline=None)
def test_product_is_pointwise_under_embedding(a, b):
    x, y = element(a), element(b)
    lhs = galois_embed(x * y).values
    rhs = galois_embed(x).values * galois_embed(y).values
    assert np.allclose(lhs, rhs, atol=1e-8)


@given(small_coeffs)
@settings(max_examples=50, deadline=None)
def test_inverse_is_exact(a):
    x = element(a)
    assume(not x.is_zero())
    assert x * ring_inverse(x) == RingElement.one(K4)


@given(small_coeffs, small_coeffs)
@settings(max_examples=30, deadline=None)
def test_norm_is_multiplicative_and_matches_embeddings(a, b):
    x, y = element(a), element(b)
    assume(not x.is_zero() and not y.is_zero())
    assert exact_norm(x * y) == exact_norm(x) * exact_norm(y)
    assert field_norm(x) == pytest.approx(abs(float(exact_norm(x))), rel=1e-8)


@given(small_coeffs)
@settings(max_examples=30, deadline=None)
def test_conjugate_and_automorphisms(a):
    x = element(a)
    embedded = galois_embed(x)
    assert np.allclose(galois_embed(conjugate(x)).values, embedded.values.conj(), atol=1e-9)
    for r in (3, 5, 7, 13):
        assert galois_embed(galois_automorphism(x, r)).value_at(1) == pytest.approx(embedded.value_at(r), abs=1e-9)


@given(small_coeffs)
@settings(max_examples=30, deadline=None)
def test_trace_is_sum_of_embeddings(a):
    x = element(a)
    assert float(trace(x)) == pytest.approx(galois_embed(x).values.sum().real, abs=1e-8)


def test_high_precision_embedding_agrees_with_double():
    x = element([3, -1, 0, 2, 5, 0, -4, 1])
    assert np.allclose(galois_embed(x, 128).values, galois_embed(x).values, atol=1e-10)
    with pytest.raises(ValueError):
        galois_embed(x, 32)


def test_log_norm_of_unit_is_zero():
    # 1 + zeta + zeta^2 is a cyclotomic unit
    unit = element([1, 1, 1, 0, 0, 0, 0, 0])
    assert abs(exact_norm(unit)) == 1
    assert log_norm(unit) == pytest.approx(0.0, abs=1e-10)


def test_high_precision_logs_keep_small_embeddings():
    unit = element([1, 1, 1, 0, 0, 0, 0, 0])
    power = ring_pow(unit, 20)
    assert abs(exact_norm(power)) == 1
    assert log_norm(power, 200) == pytest.approx(0.0, abs=1e-9)
    assert field_norm(power, 200) == pytest.approx(1.0, rel=1e-9)
    assert np.allclose(log_embedding(power, 200), 20 * log_embedding(unit), atol=1e-9)


def test_product_with_zero_and_huge_coefficients():
    huge = RingElement.scalar(RingParams(3), 2**70)
    zero = RingElement.zero(RingParams(3))
    assert ring_mul(zero, huge).is_zero()
    assert ring_mul(huge, zero).is_zero()
    x = RingElement((2**63, 0, 1, 0), RingParams(3))
    assert ring_mul(x, RingElement.one(RingParams(3))) == x
    assert ring_mul(x, huge).coeffs == (2**133, 0, 2**70, 0)


def test_zero_element_errors():
    zero = RingElement.zero(K4)
    with pytest.raises(ZeroElementException):
        log_embedding(zero)
    with pytest.raises(ZeroElementException):
        ring_inverse(zero)
    assert field_norm(zero) == 0.0


def test_mixed_rings_are_rejected():
    with pytest.raises(RingParameterException):
        RingElement.one(K4) + RingElement.one(RingParams(5))
    with pytest.raises(RingParameterException):
        RingElement((1, 2, 3), K4)


def test_rational_coefficients_and_json():
    x = RingElement((Fraction(1, 2), Fraction(-3, 4)) + (0,) * 6, K4)
    assert not x.is_integral()
    assert x.denominator() == 4
    payload = x.to_json()
    assert payload["coeffs"][:2] == ["1/2", "-3/4"]
    assert RingElement.from_json(payload) == x
