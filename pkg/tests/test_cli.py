import json

import numpy as np
import pytest

from MODRED.base.Cyclotomic import RingParams
from MODRED.base.LogUnits import error_matrix
from MODRED.base.ModuleGS import basis_to_json
from MODRED.base.utils import ObjectOperation
from MODRED.cli.CommandLine import EXIT_INVALID, EXIT_OK, build_parser, run, selftest_checks
from MODRED.harness.Sampling import cbd_basis


def run_json(capsys, *argv):
    code = run(list(argv))
    return code, json.loads(capsys.readouterr().out)


def test_every_subcommand_accepts_the_common_flags():
    parser = build_parser()
    for command in ("selftest", "security", "table1", "table2", "soundness"):
        args = parser.parse_args([command, "--output", "csv", "--seed", "3", "--trials", "2"])
        assert args.output == "csv" and args.seed == 3 and args.trials == 2


def test_signopt_exhaustive(capsys):
    code, payload = run_json(capsys, "signopt", "--k", "5", "--method", "exhaustive")
    assert code == EXIT_OK
    assert payload["discrepancy"] == pytest.approx(0.4407, abs=5e-4)
    assert payload["N_s"] == 7
    assert sum(payload["s"]) in (-1, 1)
    assert payload["status"] == "optimal"


def test_signopt_lp_reports_only_a_bound(capsys):
    code, payload = run_json(capsys, "signopt", "--k", "5", "--method", "lp", "--lp-balance", "disjunction")
    assert code == EXIT_OK
    assert payload["discrepancy"] is None and payload["s"] is None
    assert payload["status"] == "bound-only"
    assert 0.0 <= payload["lower_bound"] <= 0.4407 + 5e-4


def test_signopt_matrix_export(capsys, tmp_path):
    path = tmp_path / "matrix.csv"
    units = tmp_path / "units.csv"
    assert run(["signopt", "--k", "5", "--matrix-out", str(path), "--units-out", str(units)]) == EXIT_OK
    capsys.readouterr()
    assert path.read_text().splitlines()[:2] == ["k,|G|,N_s", "5,8,7"]
    frame = ObjectOperation.load_csv(str(path), skiprows=2)
    assert frame.shape == (8, 7)
    assert np.allclose(frame.to_numpy(), error_matrix(5).M)
    assert ObjectOperation.load_csv(str(units)).shape == (7, 9)


def test_primes(capsys):
    code, payload = run_json(capsys, "primes", "--n", "8", "--target", "1000000")
    assert code == EXIT_OK
    assert payload["p_list"][:3] == [17, 97, 113]
    code, payload = run_json(capsys, "primes", "--n", "256", "--paper-compat")
    assert payload["p_list"] == [12289]
    assert payload["searched"]["p_list"] == [7681]
    code, payload = run_json(capsys, "primes", "--n", "256")
    assert payload["p_list"] == [7681]
    assert payload["compat"] == {"p_list": [12289], "P": 12289}
    code, payload = run_json(capsys, "primes", "--n", "4096")
    assert payload["compat"] is None


def test_reduce_round_trip(capsys, tmp_path):
    path = tmp_path / "basis.json"
    ObjectOperation.save_json(basis_to_json(cbd_basis(RingParams(4), 2, 2, 4, 0)), str(path))
    code, payload = run_json(capsys, "reduce", "--input", str(path), "--size-reduce", "coord")
    assert code == EXIT_OK
    assert payload["checks"]["membership"] and payload["checks"]["power_mean"]
    assert payload["size_reduction"]["mode"] == "coord"


def test_security_csv(capsys):
    assert run(["security", "--output", "csv"]) == EXIT_OK
    header, row = capsys.readouterr().out.strip().splitlines()
    assert "log2_gap" in header.split(",")
    assert len(row.split(",")) == len(header.split(","))


def test_table2_to_file(capsys, tmp_path):
    path = tmp_path / "table2.csv"
    assert run(["table2", "--k", "4", "--no-timing", "--output", "csv", "--out", str(path)]) == EXIT_OK
    frame = ObjectOperation.load_csv(str(path))
    assert "Time (s)" not in frame.columns
    assert frame["MILP delta*"].tolist() == [0.4407]


def test_selftest(capsys):
    code, payload = run_json(capsys, "selftest")
    assert code == EXIT_OK
    assert payload["passed"]
    assert all(selftest_checks(1).values())


class TestInvalidInput:
    def test_unknown_flag(self, capsys):
        assert run(["signopt", "--k", "5", "--colour", "red"]) == EXIT_INVALID

    def test_missing_subcommand(self, capsys):
        assert run([]) == EXIT_INVALID

    def test_missing_input_file(self, capsys, tmp_path):
        assert run(["reduce", "--input", str(tmp_path / "absent.json")]) == EXIT_INVALID

    def test_malformed_basis(self, capsys, tmp_path):
        path = tmp_path / "basis.json"
        path.write_text(json.dumps({"k": 4, "d": 2, "vectors": []}))
        assert run(["reduce", "--input", str(path)]) == EXIT_INVALID

    def test_small_k(self, capsys):
        assert run(["signopt", "--k", "3"]) == EXIT_INVALID

    def test_bad_config(self, capsys, tmp_path):
        path = tmp_path / "config.ini"
        path.write_text("[cyclotomic]\nprecision_bits = many\n")
        assert run(["selftest", "--config", str(path)]) == EXIT_INVALID
