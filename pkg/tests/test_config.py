import math

import pandas as pd
import pytest

from MODRED.base.Config import DEFAULTS, PRECISION_ENV_VAR, load_config
from MODRED.base.utils import ConfigException, ObjectOperation


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv(PRECISION_ENV_VAR, raising=False)


def write_ini(tmp_path, text):
    path = tmp_path / "config.ini"
    path.write_text(text)
    return str(path)


class TestLoadConfig:
    def test_missing_file_gives_defaults(self, tmp_path):
        assert load_config(str(tmp_path / "none.ini")) == DEFAULTS

    def test_typed_values(self, tmp_path):
        path = write_ini(
            tmp_path,
            "[signopt]\nlocal_search_schedule = 4, inf\nbnb_node_budget = 50\n"
            "[harness]\ntable1_k = 6, 8\n[pipeline]\nsigns = greedy\n[logunits]\ntie_window = 0.1\n",
        )
        config = load_config(path)
        assert config["signopt.local_search_schedule"] == (4.0, math.inf)
        assert config["signopt.bnb_node_budget"] == 50
        assert config["harness.table1_k"] == (6, 8)
        assert config["pipeline.signs"] == "greedy"
        assert config["logunits.tie_window"] == 0.1
        assert config["harness.seed"] == DEFAULTS["harness.seed"]

    def test_environment_overrides_precision(self, tmp_path, monkeypatch):
        monkeypatch.setenv(PRECISION_ENV_VAR, "128")
        assert load_config(str(tmp_path / "none.ini"))["cyclotomic.precision_bits"] == 128
        monkeypatch.setenv(PRECISION_ENV_VAR, "lots")
        with pytest.raises(ConfigException):
            load_config(str(tmp_path / "none.ini"))

    @pytest.mark.parametrize(
        "text",
        [
            "[cyclotomic]\nprecision_bits = 32\n",
            "[logunits]\ncolumn_offset = 2\n",
            "[harness]\ntrials = ten\n",
        ],
    )
    def test_invalid_values(self, tmp_path, text):
        with pytest.raises(ConfigException):
            load_config(write_ini(tmp_path, text))


class TestObjectOperation:
    def test_json_round_trip(self, tmp_path):
        path = str(tmp_path / "doc.json")
        ObjectOperation.save_json({"k": 4, "coeffs": ["1/2", "3"]}, path)
        assert ObjectOperation.load_json(path) == {"k": 4, "coeffs": ["1/2", "3"]}

    def test_json_errors(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ObjectOperation.load_json(str(tmp_path / "absent.json"))
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ValueError):
            ObjectOperation.load_json(str(bad))

    def test_csv_with_header_line(self, tmp_path):
        path = str(tmp_path / "table.csv")
        frame = pd.DataFrame({"k": [4, 5], "mean C": [1.5, 1.25]})
        ObjectOperation.save_csv(frame, path, header_line="# balance")
        pd.testing.assert_frame_equal(ObjectOperation.load_csv(path, skiprows=1), frame)
