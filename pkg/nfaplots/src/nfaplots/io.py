"""Artifact parsing: CSV tables, bare matrix CSVs, and the run manifest."""

from __future__ import annotations

import csv
import json
import warnings
from pathlib import Path

import numpy as np


class ArtifactError(ValueError):
    """An artifact is missing, empty, or lacks a required column."""


def read_table(path: str | Path) -> dict[str, list[str]]:
    """A CSV with a header row, as column name -> list of raw string cells."""
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"artifact not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise ArtifactError(f"{path}: empty CSV")
    header, body = rows[0], rows[1:]
    if not body:
        raise ArtifactError(f"{path}: no data rows")
    table = {name: [] for name in header}
    for row in body:
        if len(row) != len(header):
            raise ArtifactError(
                f"{path}: row with {len(row)} cells under a {len(header)}-column header"
            )
        for name, cell in zip(header, row):
            table[name].append(cell)
    return table


def column(table: dict[str, list[str]], name: str, path: str | Path) -> np.ndarray:
    """One column as float64; blank cells (undefined metrics) become NaN."""
    if name not in table:
        have = ", ".join(table)
        raise ArtifactError(f"{path}: missing column {name!r} (have: {have})")
    return np.array([float(c) if c != "" else np.nan for c in table[name]])


def text_column(table: dict[str, list[str]], name: str, path: str | Path) -> list[str]:
    if name not in table:
        have = ", ".join(table)
        raise ArtifactError(f"{path}: missing column {name!r} (have: {have})")
    return table[name]


def load_matrix(path: str | Path) -> np.ndarray:
    """A bare comma-separated matrix with no header, as written by nfa-lab."""
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"artifact not found: {path}")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # loadtxt warns on empty input
            a = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise ArtifactError(f"{path}: malformed matrix csv ({exc})") from None
    if a.size == 0:
        raise ArtifactError(f"{path}: empty CSV")
    return a


def load_json(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"artifact not found: {path}")
    with open(path) as fh:
        return json.load(fh)
