"""
Configuration loading.

All tunables live in ``config.ini`` at the repository root. ``load_config`` returns a
flat dict keyed ``"<section>.<option>"`` with typed values; a missing file or option
falls back to ``DEFAULTS``.
"""

import configparser
import logging
import math
import os

from MODRED.base.utils import ConfigException

logger = logging.getLogger(__name__)

PRECISION_ENV_VAR = "MODRED_PRECISION_BITS"

DEFAULTS = {
    "cyclotomic.precision_bits": 53,
    "splitntt.paper_compat_prime": 12289,
    "splitntt.max_coefficient_bits": 64,
    "logunits.column_offset": 1,
    "logunits.tie_window": 0.25,
    "logunits.polish_max_iter": 200,
    "logunits.polish_pair_limit": 32,
    "signopt.exhaustive_limit": 20,
    "signopt.greedy_level_enum_limit": 0,
    "signopt.local_search_schedule": (2.0, 8.0, 32.0, math.inf),
    "signopt.local_search_restarts": 4,
    "signopt.local_search_max_iter": 2000,
    "signopt.bnb_node_budget": 20000,
    "signopt.optimality_tol": 1e-6,
    "pipeline.size_reduce": "off",
    "pipeline.crt_mode": "conditioning",
    "pipeline.signs": "milp",
    "harness.trials": 1000,
    "harness.seed": 2025,
    "harness.d": 4,
    "harness.eta": 2,
    "harness.table1_k": (6, 7, 8, 9, 10),
    "harness.table2_k": (4, 5, 6, 7, 8, 9, 10),
    "harness.probe_retries": 100,
    "harness.svp_max_dim": 20,
    "logging.level": "INFO",
}


def _parse_float_list(raw: str) -> tuple:
    values = []
    for token in raw.split(","):
        token = token.strip().lower()
        values.append(math.inf if token in ("inf", "infinity") else float(token))
    return tuple(values)


def _parse_int_list(raw: str) -> tuple:
    return tuple(int(token) for token in raw.split(",") if token.strip())


def _convert(key: str, raw: str):
    default = DEFAULTS[key]
    if key == "signopt.local_search_schedule":
        return _parse_float_list(raw)
    if isinstance(default, tuple):
        return _parse_int_list(raw)
    if isinstance(default, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


def load_config(path: str | None = None) -> dict:
    """
    Read ``config.ini`` and return the typed configuration dict.

    Args:
        path (str, optional): Path of the ini file. Defaults to ``config.ini`` in the working directory.

    Returns:
        dict: Every key of ``DEFAULTS`` with its configured or default value.

    Raises:
        ConfigException: If a value cannot be converted to the expected type.
    """
    parser = configparser.ConfigParser()
    read = parser.read(path or "config.ini")
    if not read:
        logger.info(f"No configuration file at {path or 'config.ini'}, using defaults")

    config = dict(DEFAULTS)
    for key in DEFAULTS:
        section, option = key.split(".", 1)
        if parser.has_option(section, option):
            raw = parser[section][option]
            try:
                config[key] = _convert(key, raw)
            except ValueError as e:
                logger.error(f"Invalid value {raw!r} for [{section}] {option}: {e}")
                raise ConfigException(f"Invalid value {raw!r} for [{section}] {option}") from e

    env_precision = os.environ.get(PRECISION_ENV_VAR)
    if env_precision:
        try:
            config["cyclotomic.precision_bits"] = int(env_precision)
        except ValueError as e:
            raise ConfigException(f"Invalid {PRECISION_ENV_VAR}={env_precision!r}") from e

    if config["cyclotomic.precision_bits"] < 53:
        raise ConfigException("precision_bits must be at least 53")
    if config["logunits.column_offset"] not in (0, 1):
        raise ConfigException("column_offset must be 0 or 1")
    return config
