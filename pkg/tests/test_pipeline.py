import json
import math
from fractions import Fraction

import pytest

from MODRED.ALGO.ModuleReduction import ReductionOptions, reduce_module, verify_membership
from MODRED.base.Config import DEFAULTS
from MODRED.base.Cyclotomic import RingElement, RingParams, galois_embed
from MODRED.base.ModuleGS import ModuleVector
from MODRED.base.utils import RankDeficiencyException
from MODRED.harness.Enumeration import module_lambda1
from MODRED.harness.Sampling import cbd_basis, planted_basis, trial_rng

K4 = RingParams(4)


def test_standard_basis_is_already_reduced():
    basis = [ModuleVector.unit(K4, 2, i) for i in range(2)]
    report = reduce_module(basis)
    assert report.output_index == 0
    assert report.output_vector == basis[0]
    assert report.output_norm == pytest.approx(math.sqrt(K4.n))
    assert report.C == pytest.approx(1.0)
    assert report.hermite_factor == pytest.approx(1 / math.sqrt(2 * K4.n))
    assert report.bound_rhs == pytest.approx(report.output_norm)
    assert report.passed and report.bound_ok
    assert all(line.status == "ok" and line.nm_root == 1 for line in report.per_line)


@pytest.mark.parametrize("trial", range(6))
def test_reports_on_cbd_bases_pass_every_check(trial):
    report = reduce_module(cbd_basis(K4, 2, 2, 2025, trial))
    assert report.membership_ok
    assert report.power_mean_ok
    assert report.bound_ok
    assert report.C >= 1.0 - 1e-12
    assert report.output_norm == min(line.candidate_norm for line in report.per_line)
    assert report.signs["method"] == "milp"
    assert report.signs["discrepancy"] == pytest.approx(0.4407, abs=5e-4)


@pytest.mark.parametrize("trial", range(2))
def test_cbd_bases_at_k5(trial):
    report = reduce_module(cbd_basis(RingParams(5), 2, 2, 2025, trial))
    assert report.k == 5 and report.n == 16
    assert report.membership_ok and report.power_mean_ok and report.bound_ok
    assert report.signs["discrepancy"] == pytest.approx(0.4407, abs=5e-4)
    assert report.output_norm == min(line.candidate_norm for line in report.per_line)


def test_planted_units_are_removed():
    unscrambled = 0
    for trial in range(10):
        basis, shorts = planted_basis(K4, 2, trial_rng(7, trial))
        report = reduce_module(basis)
        assert report.membership_ok
        if report.output_norm <= max(galois_embed(g).norm2() for g in shorts) * (1 + 1e-9):
            unscrambled += 1
    assert unscrambled >= 8


@pytest.mark.parametrize("trial", range(3))
def test_output_is_never_shorter_than_lambda1(trial):
    basis = cbd_basis(RingParams(3), 2, 2, 11, trial)
    report = reduce_module(basis)
    assert report.signs["method"] == "none"
    assert report.output_norm >= module_lambda1(basis).length - 1e-9
    assert report.power_mean_ok


@pytest.mark.parametrize(
    "options",
    [
        ReductionOptions(size_reduce_mode="coord"),
        ReductionOptions(size_reduce_mode="crt"),
        ReductionOptions(size_reduce_mode="crt", crt_mode="restricted"),
        ReductionOptions(signs="greedy"),
        ReductionOptions(signs="none"),
    ],
)
def test_pipeline_variants(options):
    report = reduce_module(cbd_basis(K4, 3, 2, 99, 0), options)
    assert report.passed
    assert report.size_reduction["mode"] == options.size_reduce_mode
    if options.size_reduce_mode != "off":
        assert report.size_reduction["mu_residual_after"] is not None
    if options.size_reduce_mode == "crt":
        assert report.size_reduction["primes"]["P"] >= K4.n // 2
        assert report.size_reduction["conditioning_only"] == (options.crt_mode == "conditioning")


def test_report_serializes_to_json():
    report = reduce_module(cbd_basis(K4, 2, 2, 1, 0))
    payload = json.loads(json.dumps(report.to_dict()))
    assert payload["k"] == 4 and payload["n"] == 8
    assert set(payload["checks"]) == {"membership", "power_mean", "bound"}
    assert len(payload["per_line"]) == 2


def test_dependent_basis_is_rejected():
    b = cbd_basis(K4, 2, 2, 5, 0)[0]
    with pytest.raises(RankDeficiencyException):
        reduce_module([b, b.scale(RingElement.scalar(K4, 3))])


class TestMembership:
    @pytest.fixture(scope="class")
    def basis(self):
        return cbd_basis(K4, 2, 2, 42, 0)

    def test_ring_combinations_are_members(self, basis):
        zeta = RingElement.monomial(K4, 3)
        v = basis[0].scale(zeta) + basis[1].scale(RingElement.scalar(K4, -2))
        assert verify_membership(basis[0], basis)
        assert verify_membership(v, basis)

    def test_fractional_combinations_are_not(self, basis):
        assert not verify_membership(basis[0].scale(RingElement.scalar(K4, Fraction(1, 2))), basis)

    def test_rank_mismatch(self, basis):
        assert not verify_membership(ModuleVector.unit(K4, 3, 0), basis)


class TestOptions:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"size_reduce_mode": "lll"},
            {"crt_mode": "exact"},
            {"signs": "random"},
            {"precision": 32},
        ],
    )
    def test_invalid_options(self, kwargs):
        with pytest.raises(ValueError):
            ReductionOptions(**kwargs)

    def test_from_config_with_overrides(self):
        options = ReductionOptions.from_config(DEFAULTS, signs="greedy", size_reduce_mode=None)
        assert options.signs == "greedy"
        assert options.size_reduce_mode == "off"
        assert options.node_budget == DEFAULTS["signopt.bnb_node_budget"]
