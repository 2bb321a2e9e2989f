"""Dataset container and CSV ingestion."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionMismatch, MissingColumn, NonNumericCell, ParseError


@dataclass(frozen=True, eq=False)
class Dataset:
    """A response vector and its raw design matrix."""

    X: np.ndarray
    y: np.ndarray
    names: tuple = field(default=None)
    response_name: str = "y"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise DimensionMismatch(f"X has {X.shape[0]} rows but y has {y.size} entries")
        names = self.names
        if names is None:
            names = tuple(f"x{j + 1}" for j in range(X.shape[1]))
        names = tuple(str(s) for s in names)
        if len(names) != X.shape[1]:
            raise DimensionMismatch(f"{len(names)} names for {X.shape[1]} columns")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "names", names)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def rows(self, index):
        index = np.asarray(index)
        return Dataset(self.X[index], self.y[index], self.names, self.response_name)


def load_csv(path, response):
    """Read a numeric CSV with a header row.

    ``response`` is a column name, or an integer index into the header.
    Every other column becomes a predictor, in file order.
    """
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, 1, "empty file") from None
        header = [h.strip() for h in header]
        resp_idx = _resolve_column(header, response)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(line_no, len(row), f"expected {len(header)} fields, got {len(row)}")
            values = []
            for col_no, cell in enumerate(row, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise NonNumericCell(line_no, col_no, cell) from None
                if not math.isfinite(v):
                    raise NonNumericCell(line_no, col_no, cell)
                values.append(v)
            rows.append(values)
    if not rows:
        raise ParseError(2, 1, "no data rows")
    table = np.array(rows)
    keep = [j for j in range(len(header)) if j != resp_idx]
    return Dataset(table[:, keep], table[:, resp_idx], tuple(header[j] for j in keep), header[resp_idx])


def _resolve_column(header, response):
    if isinstance(response, int) or (isinstance(response, str) and response.lstrip("-").isdigit()
                                      and response not in header):
        idx = int(response)
        if not -len(header) <= idx < len(header):
            raise MissingColumn(f"response column index {idx} out of range")
        return idx % len(header)
    if response not in header:
        raise MissingColumn(f"response column {response!r} not in header {header}")
    return header.index(response)


def write_csv(dataset, path):
    """Write a dataset so that :func:`load_csv` reads it back exactly."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([dataset.response_name, *dataset.names])
        for yi, xi in zip(dataset.y, dataset.X):
            writer.writerow([repr(float(yi)), *(repr(float(v)) for v in xi)])
