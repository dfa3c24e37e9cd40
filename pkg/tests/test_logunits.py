import math

import numpy as np
import pytest

from MODRED.ALGO.SignOptimization import SignProblem, solve_exhaustive, tower_greedy
from MODRED.base.Cyclotomic import RingElement, RingParams, exact_norm, galois_embed, log_embedding
from MODRED.base.LogUnits import (
    canonical_torsion,
    cdpr_decode,
    cyclotomic_unit,
    cyclotomic_unit_inverse,
    error_matrix,
    fold,
    log_sine,
    orbit_table,
    short_generator,
    tower_level,
    unit_log_basis,
)
from MODRED.base.utils import RingParameterException

K4 = RingParams(4)


class TestOrbitGeometry:
    def test_orbit_representatives(self):
        assert orbit_table(4).reps.tolist() == [1, 5, 7, 3]
        assert orbit_table(5).reps.tolist() == [1, 5, 7, 3, 15, 11, 9, 13]

    @pytest.mark.parametrize("k", [4, 6, 10])
    def test_log_sine_sum(self, k):
        assert log_sine(k).z.sum() == pytest.approx(0.5 * math.log(2), abs=1e-12)

    def test_tower_levels(self):
        assert tower_level(0, 5) == 2
        assert tower_level(4, 5) == 3
        assert tower_level(2, 5) == 4
        assert [tower_level(p, 5) for p in (1, 3, 5, 7)] == [5, 5, 5, 5]

    @pytest.mark.parametrize("offset", [0, 1])
    def test_error_matrix_entries(self, offset):
        z = log_sine(5).z
        E = error_matrix(5, offset)
        assert E.M.shape == (8, 7)
        for c in range(E.N_s):
            p = c + offset
            for i in range(E.G):
                assert E.M[i, c] == pytest.approx(0.5 * (z[(i - p) % 8] - z[i]), abs=1e-12)

    def test_error_matrix_needs_k4(self):
        with pytest.raises(RingParameterException):
            error_matrix(3)
        with pytest.raises(ValueError):
            error_matrix(5, 2)


class TestUnits:
    @pytest.mark.parametrize("k", [4, 5])
    def test_unit_inverses_are_exact(self, k):
        params = RingParams(k)
        for a in orbit_table(k).reps[1:]:
            unit = cyclotomic_unit(params, int(a))
            assert unit * cyclotomic_unit_inverse(params, int(a)) == RingElement.one(params)
            assert abs(exact_norm(unit)) == 1

    @pytest.mark.parametrize("k", [3, 4, 5, 6, 7])
    def test_unit_log_basis_has_full_rank(self, k):
        basis = unit_log_basis(k)
        G = orbit_table(k).size
        assert basis.rows.shape == (G - 1, G)
        assert basis.rank == G - 1
        assert np.allclose(basis.rows.sum(axis=1), 0.0, atol=1e-10)
        assert basis.regulator > 0

    def test_folded_unit_rows_follow_log_sine(self):
        z = log_sine(5).z
        basis = unit_log_basis(5)
        for r in range(basis.rows.shape[0]):
            p = r + 1
            expected = [2 * (z[(i + p) % 8] - z[i]) for i in range(8)]
            assert np.allclose(basis.rows[r], expected, atol=1e-10)

    def test_fold_sums_conjugate_pairs(self):
        x = RingElement((3, 1, 0, -2, 1, 0, 0, 1), K4)
        folded = fold(log_embedding(x), 4)
        assert folded.sum() == pytest.approx(math.log(abs(float(exact_norm(x)))), rel=1e-10)

    def test_invalid_unit_index(self):
        with pytest.raises(RingParameterException):
            cyclotomic_unit(K4, 4)
        with pytest.raises(RingParameterException):
            cyclotomic_unit(K4, 9)


class TestDecode:
    def test_integer_targets_decode_exactly(self):
        basis = unit_log_basis(5)
        rng = np.random.Generator(np.random.Philox(3))
        for _ in range(20):
            e = rng.integers(-4, 5, size=basis.rows.shape[0])
            noise = rng.uniform(-0.01, 0.01, size=basis.rows.shape[1])
            result = cdpr_decode(e @ basis.rows + noise, basis)
            assert np.array_equal(result.exponents, e)
            assert result.residual_inf < 0.1

    def test_half_integer_residual_is_twice_the_discrepancy(self):
        basis = unit_log_basis(5)
        prob = SignProblem.for_k(5)
        e = np.array([2, -1, 0, 3, -2, 1, 0])
        target = (e + 0.5) @ basis.rows
        optimal = solve_exhaustive(prob)
        greedy = tower_greedy(prob)
        with_optimal = cdpr_decode(target, basis, optimal)
        with_greedy = cdpr_decode(target, basis, greedy)
        assert with_optimal.residual_inf == pytest.approx(2 * optimal.discrepancy, abs=1e-8)
        assert with_greedy.residual_inf == pytest.approx(2 * greedy.discrepancy, abs=1e-8)
        assert with_optimal.residual_inf < with_greedy.residual_inf

    def test_target_shape_is_checked(self):
        with pytest.raises(RingParameterException):
            cdpr_decode(np.zeros(3), unit_log_basis(5))


class TestShortGenerator:
    def test_planted_unit_is_stripped(self):
        g = RingElement((8, 1, 0, -1, 0, 0, 1, 0), K4)
        unit = cyclotomic_unit(K4, 3) ** 2 * cyclotomic_unit_inverse(K4, 5) * cyclotomic_unit(K4, 7)
        result = short_generator(g * unit)
        assert result.status == "ok"
        assert abs(exact_norm(result.element)) == abs(exact_norm(g))
        assert galois_embed(result.element).norm2() == pytest.approx(galois_embed(g).norm2(), rel=1e-9)
        assert result.inf_norm_after <= result.inf_norm_before

    def test_balanced_input_is_kept_up_to_torsion(self):
        one = RingElement.one(K4)
        result = short_generator(one)
        assert result.element == one
        assert not np.any(result.unit_exponents)

    def test_twist_shortens_the_scaled_line(self):
        unit = cyclotomic_unit(K4, 3) * cyclotomic_unit(K4, 7)
        twist = log_embedding(unit)
        result = short_generator(RingElement.one(K4), twist=twist)
        scaled = galois_embed(result.element * unit).norm2()
        assert scaled == pytest.approx(math.sqrt(K4.n), rel=1e-9)

    def test_zero_generator_is_rejected(self):
        with pytest.raises(ValueError):
            short_generator(RingElement.zero(K4))


def test_canonical_torsion_ignores_roots_of_unity():
    x = RingElement((2, -1, 0, 3, 0, 0, 1, 0), K4)
    rotated = -(x * RingElement.monomial(K4, 5))
    assert canonical_torsion(rotated) == canonical_torsion(x)
    assert canonical_torsion(canonical_torsion(x)) == canonical_torsion(x)
