"""
File formats: CSV tables, JSON records and the one-line permutation text.

Floats are written with 17 significant digits so every double survives a
round trip.
"""

import csv
import json
import os
from typing import Any, Iterable, List, Optional, Sequence, TextIO

from loguru import logger

from mallows_avoid.domains.core import Permutation

FLOAT_DIGITS = 17


def format_value(value: Any, digits: int = FLOAT_DIGITS) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format(value, f".{digits}g")
    if hasattr(value, "item"):
        return format_value(value.item(), digits)
    return str(value)


def ensure_dir(path: str) -> str:
    path = os.path.expanduser(path)
    os.makedirs(path, exist_ok=True)
    return path


class CsvSink:
    """Row-at-a-time CSV writer for streamed output."""

    def __init__(self, path: str, header: Sequence[str], digits: int = FLOAT_DIGITS):
        self.path = path
        self.digits = digits
        self._file: Optional[TextIO] = open(path, "w", newline="")
        self._writer = csv.writer(self._file, lineterminator="\n")
        self._writer.writerow(header)
        self.rows = 0

    def write(self, row: Sequence[Any]) -> None:
        self._writer.writerow([format_value(v, self.digits) for v in row])
        self.rows += 1

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None
            logger.debug(f"Wrote {self.rows} rows to {self.path}")

    def __enter__(self) -> "CsvSink":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()


def write_csv(
    path: str, header: Sequence[str], rows: Iterable[Sequence[Any]], digits: int = FLOAT_DIGITS
) -> str:
    with CsvSink(path, header, digits) as sink:
        for row in rows:
            sink.write(row)
    return path


def read_csv(path: str) -> List[dict]:
    with open(os.path.expanduser(path), "r", newline="") as f:
        return list(csv.DictReader(f))


def write_json(path: str, data: Any) -> str:
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_json(path: str) -> Any:
    with open(os.path.expanduser(path), "r") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"Error parsing {path}: {e}") from e


def write_permutation_csv(path: str, p: Permutation) -> str:
    """``i,sigma_i`` rows, 1-based."""
    return write_csv(path, ("i", "sigma_i"), enumerate(p.values, start=1))


def read_permutation(path: str) -> Permutation:
    """
    Read a permutation from an ``i,sigma_i`` CSV or a one-line text file.

    Raises:
        ValueError: If the file does not hold a permutation
    """
    path = os.path.expanduser(path)
    with open(path, "r") as f:
        text = f.read()
    first_line = text.strip().splitlines()[0] if text.strip() else ""
    if first_line.replace(" ", "").startswith("i,sigma_i"):
        rows = read_csv(path)
        ordered = sorted(rows, key=lambda row: int(row["i"]))
        if [int(row["i"]) for row in ordered] != list(range(1, len(ordered) + 1)):
            raise ValueError(f"{path}: positions must run 1..n")
        return Permutation.from_array(int(row["sigma_i"]) for row in ordered)
    return Permutation.from_text(text.replace(",", " "))
