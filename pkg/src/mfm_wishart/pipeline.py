"""From per-subject multichannel time series to correlation-matrix observations."""

import csv
import re
from pathlib import Path

import numpy as np

from .errors import (ConfigError, DataError, InsufficientLength, NonNumericCell,
                     NonSpdObservation, RaggedSeries, ZeroDiagonal)
from .spd import standardize_to_correlation

_RANGE = re.compile(r"^\s*(\d+)\s*(?:-\s*(\d+))?\s*$")


def parse_channels(selector):
    """``"40-46"`` or ``"1,3,5-7"`` to a list of channel numbers, in order given."""
    out = []
    for part in str(selector).split(","):
        m = _RANGE.match(part)
        if not m:
            raise ConfigError(f"bad channel selector {selector!r}")
        lo = int(m.group(1))
        hi = int(m.group(2)) if m.group(2) else lo
        if hi < lo:
            raise ConfigError(f"descending channel range {part.strip()!r}")
        out.extend(range(lo, hi + 1))
    if len(set(out)) != len(out):
        raise ConfigError(f"channel selector {selector!r} repeats a channel")
    return out


def read_table(path, delimiter=None, skip_header=False):
    """Numeric table with one row per time point.

    The delimiter is sniffed from the first line (comma, tab, semicolon
    or whitespace) unless given.  Rows and columns in error messages are
    1-based as in a text editor.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    start = 1 if skip_header else 0
    body = [(i + 1, ln) for i, ln in enumerate(lines) if i >= start and ln.strip()]
    if not body:
        raise InsufficientLength(f"{path}: no data rows")
    if delimiter is None:
        first = body[0][1]
        delimiter = next((d for d in (",", "\t", ";") if d in first), None)
    rows = []
    for lineno, ln in body:
        cells = ln.split() if delimiter is None else next(csv.reader([ln], delimiter=delimiter))
        vals = []
        for j, cell in enumerate(cells):
            try:
                v = float(cell)
            except ValueError:
                raise NonNumericCell(lineno, j + 1, cell, str(path)) from None
            if not np.isfinite(v):
                raise NonNumericCell(lineno, j + 1, cell, str(path))
            vals.append(v)
        if rows and len(vals) != len(rows[0]):
            raise RaggedSeries(f"{path}: row {lineno} has {len(vals)} columns, "
                               f"expected {len(rows[0])}")
        rows.append(vals)
    return np.asarray(rows)


def sample_correlation(x):
    """Pearson correlation of the columns of ``x`` (rows are time points).

    Computed as the ``1/(T-1)`` centered covariance standardized by its
    diagonal; a constant channel raises ``ZeroDiagonal``.
    """
    x = np.asarray(x, dtype=float)
    flat = np.flatnonzero(np.ptp(x, axis=0) == 0)
    if flat.size:
        # the mean of a constant column need not round to the constant itself
        raise ZeroDiagonal(f"column {int(flat[0])} is constant; correlation undefined")
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (x.shape[0] - 1)
    return standardize_to_correlation(cov)


def connectivity_matrices(tables, channels, length=None, one_based=True, names=None):
    """One correlation matrix per subject over the selected channels.

    Every table is cropped to its first ``length`` rows; by default the
    shortest table's length is used for all.
    """
    if not tables:
        raise DataError("no time-series tables given")
    names = names or [f"subject {i}" for i in range(len(tables))]
    cols = np.asarray(channels) - (1 if one_based else 0)
    if length is None:
        length = min(t.shape[0] for t in tables)
    if length < 2:
        raise InsufficientLength(f"need at least 2 time points, got {length}")
    out = []
    for i, (t, name) in enumerate(zip(tables, names)):
        if t.shape[0] < length:
            raise InsufficientLength(f"{name}: {t.shape[0]} rows, need {length}")
        if cols.min() < 0 or cols.max() >= t.shape[1]:
            raise DataError(f"{name}: channel selection exceeds its {t.shape[1]} columns")
        try:
            r = sample_correlation(t[:length, cols])
        except ZeroDiagonal as exc:
            raise ZeroDiagonal(f"{name}: constant channel; {exc}") from None
        except DataError as exc:
            raise NonSpdObservation(
                i, f"{name}: correlation matrix is singular (collinear channels?); {exc}") from None
        out.append(r.entries)
    return np.stack(out), length


def load_timeseries_dir(directory, pattern="*", delimiter=None, skip_header=False):
    """Read every matching file in ``directory``, sorted by name; returns (tables, names)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"{directory}: not a directory")
    files = sorted(p for p in directory.glob(pattern) if p.is_file())
    if not files:
        raise DataError(f"{directory}: no files match {pattern!r}")
    tables = [read_table(f, delimiter, skip_header) for f in files]
    return tables, [f.stem for f in files]
