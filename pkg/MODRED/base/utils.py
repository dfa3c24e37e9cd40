"""
Shared exceptions and persistence helpers.

Classes:
    - ModRedException and its subclasses: the error types raised across the package.
    - ObjectOperation: JSON and CSV persistence for bases, reports and tables.
"""

import json
import logging
from typing import Any

import pandas as pd

logger = logging.getLogger(__name__)


class ModRedException(Exception):
    """Base class for every error raised by the toolkit."""


class RingParameterException(ModRedException, ValueError):
    """Invalid ring parameters or operands drawn from different rings."""


class ZeroElementException(ModRedException, ValueError):
    """A log, inverse or norm-log was requested for the zero element."""


class RankDeficiencyException(ModRedException, ValueError):
    """A basis is K-linearly dependent, or a unit basis is singular."""


class RangeOverflowException(ModRedException, ValueError):
    """A coefficient exceeded the configured CRT numerator bound."""


class BudgetExceededException(ModRedException):
    """An enumeration or dimension budget was exceeded."""


class SolverException(ModRedException):
    """The LP relaxation failed or reported infeasibility."""


class ConfigException(ModRedException, ValueError):
    """Malformed configuration value."""


class ObjectOperation:
    """
    Utility class for saving and loading toolkit objects to/from disk.

    JSON is used for bases and reports, CSV (through pandas) for tables.
    """

    @staticmethod
    def save_json(obj: Any, filename: str) -> None:
        """
        Save a JSON-serializable object to disk.

        Args:
            obj (Any): The object to save. Objects exposing ``to_dict`` are converted first.
            filename (str): The file path to save the object.
        """
        if hasattr(obj, "to_dict"):
            obj = obj.to_dict()
        try:
            with open(filename, "w") as f:
                json.dump(obj, f, indent=2)
        except Exception as e:
            logger.error(f"Failed to save object to {filename}: {e}")
            raise

    @staticmethod
    def load_json(filename: str) -> Any:
        """
        Load a JSON document from disk.

        Args:
            filename (str): The file path to load the object from.

        Returns:
            Any: The decoded JSON document.

        Raises:
            FileNotFoundError: If the file does not exist.
            ValueError: If the file is not valid JSON.
        """
        try:
            with open(filename, "r") as f:
                return json.load(f)
        except FileNotFoundError:
            logger.error(f"File {filename} not found.")
            raise FileNotFoundError(f"File {filename} not found")
        except json.JSONDecodeError as e:
            logger.error(f"File {filename} is not valid JSON: {e}")
            raise ValueError(f"File {filename} is not valid JSON: {e}") from e

    @staticmethod
    def save_csv(
        frame: pd.DataFrame, filename: str, header_line: str | None = None
    ) -> None:
        """
        Write a DataFrame as CSV, optionally preceded by a free-form header line.

        Args:
            frame (pd.DataFrame): Table to write.
            filename (str): Destination path.
            header_line (str, optional): Lines written before the table.
        """
        try:
            with open(filename, "w", newline="") as f:
                if header_line is not None:
                    f.write(header_line + "\n")
                frame.to_csv(f, index=False)
        except Exception as e:
            logger.error(f"Failed to save table to {filename}: {e}")
            raise

    @staticmethod
    def load_csv(filename: str, skiprows: int = 0) -> pd.DataFrame:
        """
        Read a CSV table written by ``save_csv``.

        Args:
            filename (str): Source path.
            skiprows (int): Lines of the free-form header to skip before the table header.

        Returns:
            pd.DataFrame: The table.
        """
        try:
            return pd.read_csv(filename, skiprows=skiprows)
        except FileNotFoundError:
            logger.error(f"File {filename} not found.")
            raise
