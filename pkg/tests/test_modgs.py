import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from MODRED.base.Cyclotomic import RingElement, RingParams, galois_embed
from MODRED.base.ModuleGS import (
    ModuleVector,
    balance_constant,
    balance_constant_numeric,
    basis_from_json,
    basis_to_json,
    covolume,
    embedding_matrix,
    gs_coordinates,
    k_determinant,
    k_gram_matrix,
    k_gram_schmidt,
    k_inner,
    log_covolume,
    log_line_covolume,
    mu_residual_inf,
    size_reduce,
)
from MODRED.base.SplitNTT import find_split_primes
from MODRED.base.utils import RankDeficiencyException
from MODRED.harness.Sampling import cbd_basis

K4 = RingParams(4)


def triangular_basis(params=K4):
    zeta = RingElement.monomial(params, 1)
    one, zero = RingElement.one(params), RingElement.zero(params)
    return [ModuleVector((one, zero)), ModuleVector((zeta, one))]


@given(st.integers(min_value=0, max_value=10**6), st.integers(min_value=2, max_value=3))
@settings(max_examples=15, deadline=None)
def test_gram_schmidt_is_exact(seed, d):
    basis = cbd_basis(K4, d, 2, seed, 0)
    data = k_gram_schmidt(basis)
    for j in range(d):
        for i in range(j):
            assert k_inner(data.gs[j], data.gs[i]).is_zero()
    product = RingElement.one(K4)
    for B in data.gram_diag:
        product = product * B
    assert k_determinant(k_gram_matrix(basis)) == product


def test_gs_coordinates_rebuild_gs_vectors():
    basis = cbd_basis(RingParams(5), 3, 2, 11, 0)
    data = k_gram_schmidt(basis)
    nu = gs_coordinates(data)
    for i in range(3):
        rebuilt = basis[0].scale(nu[i][0]) + basis[1].scale(nu[i][1]) + basis[2].scale(nu[i][2])
        assert rebuilt == data.gs[i]


def test_dependent_basis_is_rejected():
    b1 = cbd_basis(K4, 2, 2, 3, 0)[0]
    b2 = b1.scale(RingElement.monomial(K4, 3))
    with pytest.raises(RankDeficiencyException):
        k_gram_schmidt([b1, b2])


class TestSizeReduction:
    @pytest.fixture(scope="class")
    def data(self):
        return k_gram_schmidt(cbd_basis(K4, 3, 2, 2025, 5))

    def test_coordinate_rounding(self, data):
        reduced = size_reduce(data, "coordinate")
        assert reduced.gram_diag == data.gram_diag
        assert not reduced.conditioning_only
        for j in range(3):
            for i in range(j):
                assert all(abs(c) <= 0.5 for c in reduced.mu[j][i].coeffs)
        assert mu_residual_inf(reduced) <= K4.n / 2

    def test_crt_rounding(self, data):
        crt = find_split_primes(K4.n, K4.n // 2)
        reduced = size_reduce(data, "crt", crt)
        assert reduced.conditioning_only
        assert reduced.gram_diag == data.gram_diag
        assert mu_residual_inf(reduced) <= min(1.0, K4.n / (2 * crt.P)) + 1e-9

    def test_restricted_crt_rounding_stays_in_the_module(self, data):
        reduced = size_reduce(data, "crt", restrict_to_ring=True)
        assert not reduced.conditioning_only
        assert all(e.is_integral() for b in reduced.basis for e in b.entries)

    def test_unknown_mode(self, data):
        with pytest.raises(ValueError):
            size_reduce(data, "lll")


def test_covolume_of_standard_basis():
    basis = [ModuleVector.unit(K4, 2, i) for i in range(2)]
    data = k_gram_schmidt(basis)
    assert log_covolume(data) == pytest.approx(0.5 * 2 * 8 * math.log(8))
    assert covolume(data) == pytest.approx(8.0 ** 8)
    assert balance_constant(data) == pytest.approx(1.0)


def test_line_covolumes_multiply_to_covolume():
    data = k_gram_schmidt(triangular_basis())
    total = sum(log_line_covolume(1, B) for B in data.gram_diag)
    assert total == pytest.approx(log_covolume(data), rel=1e-6)


def test_covolume_matches_embedding_determinant():
    basis = cbd_basis(RingParams(3), 2, 2, 9, 0)
    data = k_gram_schmidt(basis)
    B = embedding_matrix(basis)
    assert B.shape == (8, 16)
    sign, logdet = np.linalg.slogdet(B @ B.T)
    assert sign > 0
    assert 0.5 * logdet == pytest.approx(log_covolume(data), rel=1e-9)


@given(st.integers(min_value=0, max_value=10**6))
@settings(max_examples=10, deadline=None)
def test_balance_constant_float_path_agrees(seed):
    params = RingParams(5)
    basis = cbd_basis(params, 3, 2, seed, 0)
    coeffs = np.array([[[int(c) for c in e.coeffs] for e in b.entries] for b in basis])
    exact = balance_constant(k_gram_schmidt(basis))
    assert exact >= 1.0
    assert balance_constant_numeric(coeffs) == pytest.approx(exact, rel=1e-8)


def test_module_vector_norm_and_json():
    basis = triangular_basis()
    assert basis[1].norm2() == pytest.approx(math.sqrt(2 * K4.n))
    assert np.allclose(basis[1].embed()[: K4.n], galois_embed(RingElement.monomial(K4, 1)).values)
    assert basis_from_json(basis_to_json(basis)) == basis
    with pytest.raises(ValueError):
        basis_from_json({"k": 4, "d": 2, "vectors": [basis_to_json(basis)["vectors"][0]]})
