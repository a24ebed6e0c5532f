"""Reading price or return tables from CSV."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError

MIN_T = 10


@dataclass
class ReturnsTable:
    """``values`` is (rows, S); ``mode`` is ``"prices"`` or ``"log-returns"``."""

    dates: list
    names: list
    values: np.ndarray
    mode: str

    @property
    def S(self) -> int:
        return self.values.shape[1]

    def returns(self) -> np.ndarray:
        """(T, S) log-returns."""
        return compute_log_returns(self.values) if self.mode == "prices" else self.values


def compute_log_returns(prices) -> np.ndarray:
    """y_t = log P_t - log P_{t-1} along axis 0."""
    p = np.asarray(prices, dtype=np.float64)
    if np.any(~(p > 0.0)):
        idx = np.argwhere(~(p > 0.0))[0]
        raise DataError(f"non-positive price at row {int(idx[0])}" +
                        (f", column {int(idx[1])}" if len(idx) > 1 else ""))
    return np.diff(np.log(p), axis=0)


def load_returns_csv(path, mode="log-returns", min_t=MIN_T) -> ReturnsTable:
    """Parse a CSV with a header row of series names and dates in the first column.

    Raises:
        DataError: missing header, ragged rows, blank or non-numeric cells, or
            fewer than ``min_t`` returns.  Row and column numbers in messages
            are 1-based file coordinates.
    """
    if mode not in ("prices", "log-returns"):
        raise DataError(f"unknown mode {mode!r}")
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as e:
        raise DataError(f"cannot read {path}: {e}") from e
    if not rows or len(rows[0]) < 2:
        raise DataError("missing header row with at least one series name")
    header = rows[0]
    try:
        float(header[1])
        numeric = True
    except ValueError:
        numeric = False
    if numeric:
        raise DataError("first row looks numeric; a header row of series names is required")
    names = [h.strip() for h in header[1:]]
    dates, vals = [], []
    for r, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"row {r} has {len(row)} fields, expected {len(header)}")
        dates.append(row[0].strip())
        line = []
        for c, cell in enumerate(row[1:], start=2):
            if not cell.strip():
                raise DataError(f"blank cell at row {r}, column {c}")
            try:
                line.append(float(cell))
            except ValueError:
                raise DataError(f"non-numeric cell {cell!r} at row {r}, column {c}") from None
        vals.append(line)
    values = np.array(vals, dtype=np.float64).reshape(len(vals), len(names))
    if not np.all(np.isfinite(values)):
        raise DataError("non-finite value in table")
    T = len(values) - 1 if mode == "prices" else len(values)
    if T < min_t:
        raise DataError(f"need at least {min_t} returns, got {T}")
    if mode == "prices":
        compute_log_returns(values)
    return ReturnsTable(dates, names, values, mode)


def write_matrix_csv(path, names, matrix, index=None, index_name="t"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(([index_name] if index is not None else []) + list(names))
        for i, row in enumerate(np.atleast_2d(matrix)):
            lead = [str(index[i])] if index is not None else []
            w.writerow(lead + [repr(float(v)) for v in row])
