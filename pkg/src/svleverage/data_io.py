"""Return-series ingestion and CSV serialization of result objects.

All files are UTF-8 with LF endings. Floats are written with 17 significant
digits so a load/serialize cycle reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

FILTER_COLUMNS = ("t", "loglik_increment", "ess", "h_mean", "rho_mean", "rho_q1", "rho_q3", "eps_mean")
MIF_COLUMNS = ("iteration", "loglik", "mu_h", "phi", "sigma_eta", "rho", "sigma_nu", "f0")
SLICE_COLUMNS = ("param", "value", "loglik", "mc_se", "smoothed")
SE_COLUMNS = ("param", "estimate", "se")


class DataError(DomainError):
    """Input file missing, malformed or empty."""


@dataclass
class ReturnSeries:
    """Observed returns ``y_1..y_T`` with optional date labels."""

    values: np.ndarray
    dates: list | None = None
    demeaned: bool = False
    mean_removed: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 1:
            raise DataError("return series must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(self.values)):
            raise DataError("return series contains non-finite values")
        if self.dates is not None and len(self.dates) != self.values.size:
            raise DataError("dates and values differ in length")

    def __len__(self):
        return self.values.size


def fmt(x) -> str:
    """Render a number with 17 significant digits; ``None`` becomes an empty cell."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.17g}"


def _parse_float(text):
    return float(text) if text != "" else None


def write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else fmt(c) for c in row])


def _read_rows(path):
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: file is empty")
    return rows[0], rows[1:]


# ---------------------------------------------------------------------------
# ingestion


def demean(values):
    """Subtract the sample mean; returns ``(centered, mean)``."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise DataError("cannot demean an empty series")
    m = float(np.mean(values))
    centered = values - m
    # second pass removes the rounding residue of the first
    centered -= np.mean(centered)
    return centered, m


def prices_to_returns(prices, scale=100.0):
    """Log returns ``scale * diff(log p)``."""
    p = np.asarray(prices, dtype=float)
    if p.size < 2:
        raise DomainError("need at least two prices")
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        raise DomainError("prices must be finite and positive")
    return scale * np.diff(np.log(p))


def load_returns(path, value_column="return", date_column="date", kind="return",
                 scale=100.0, demean_values=False, expect_n=None):
    """Read a ``date,return`` (or ``date,price``) CSV into a :class:`ReturnSeries`.

    With ``kind="price"`` the column is converted to log returns times
    ``scale``. ``expect_n`` checks the resulting number of observations.
    """
    header, rows = _read_rows(path)
    header = [h.strip() for h in header]
    if value_column not in header:
        raise DataError(f"{path}: column {value_column!r} not in header {header}")
    vi = header.index(value_column)
    di = header.index(date_column) if date_column in header else None
    values, dates = [], []
    for lineno, row in enumerate(rows, start=2):
        if not row or all(c.strip() == "" for c in row):
            continue
        try:
            v = float(row[vi])
        except (IndexError, ValueError):
            raise DataError(f"{path}: malformed row at line {lineno}") from None
        if not math.isfinite(v):
            raise DataError(f"{path}: malformed row at line {lineno} (non-finite value)")
        values.append(v)
        dates.append(row[di] if di is not None else str(len(values)))
    if not values:
        raise DataError(f"{path}: empty series (no observations)")
    values = np.array(values)
    if kind == "price":
        values = prices_to_returns(values, scale=scale)
        dates = dates[1:]
    elif kind != "return":
        raise DomainError(f"kind must be 'return' or 'price', got {kind!r}")
    mean = 0.0
    if demean_values:
        values, mean = demean(values)
    if expect_n is not None and values.size != int(expect_n):
        raise DataError(f"{path}: expected {expect_n} observations, found {values.size}")
    return ReturnSeries(values=values, dates=dates, demeaned=bool(demean_values), mean_removed=mean)


def write_returns(series, path, extra=None):
    """Write ``date,return`` plus optional extra columns (dict of name -> array)."""
    extra = {k: v for k, v in (extra or {}).items() if v is not None}
    header = ["date", "return", *extra]
    dates = series.dates or [str(i) for i in range(1, len(series) + 1)]
    cols = [np.asarray(v, float) for v in extra.values()]
    rows = ([d, float(y), *(float(c[i]) for c in cols)] for i, (d, y) in enumerate(zip(dates, series.values)))
    write_rows(path, header, rows)


# ---------------------------------------------------------------------------
# result serialization


def serialize(result, path):
    """Write any result object to its CSV schema (dispatch on type)."""
    from .inference import SEReport, SliceResult
    from .iterated_filtering import MifTrace
    from .particle_filter import FilterResult

    if isinstance(result, FilterResult):
        write_filter_result(result, path)
    elif isinstance(result, MifTrace):
        write_mif_trace(result, path)
    elif isinstance(result, SliceResult):
        write_slice_result(result, path)
    elif isinstance(result, SEReport):
        write_se_report(result, path)
    else:
        raise TypeError(f"cannot serialize {type(result).__name__}")


def write_filter_result(res, path):
    cols = [res.per_time[c] for c in FILTER_COLUMNS]
    write_rows(path, FILTER_COLUMNS, zip(*cols))


def load_filter_result(path):
    from .particle_filter import FilterResult

    header, rows = _read_rows(path)
    if tuple(header) != FILTER_COLUMNS:
        raise DataError(f"{path}: not a filter-result file")
    cols = list(zip(*rows)) if rows else [()] * len(FILTER_COLUMNS)
    per_time = {}
    for name, col in zip(FILTER_COLUMNS, cols):
        per_time[name] = np.array([int(c) for c in col], dtype=int) if name == "t" else np.array(col, dtype=float)
    return FilterResult(loglik=math.fsum(per_time["loglik_increment"]), per_time=per_time, seed=None)


def write_mif_trace(trace, path):
    rows = []
    for rec in trace.records:
        vals = [rec.theta.get(n) for n in MIF_COLUMNS[2:]]
        rows.append([rec.m, rec.loglik, *vals])
    write_rows(path, MIF_COLUMNS, rows)


def load_mif_trace(path, variant=None):
    from .iterated_filtering import MifRecord, MifTrace

    header, rows = _read_rows(path)
    if tuple(header) != MIF_COLUMNS:
        raise DataError(f"{path}: not an iterated-filtering trace")
    records = []
    for row in rows:
        theta = {n: _parse_float(c) for n, c in zip(MIF_COLUMNS[2:], row[2:]) if c != ""}
        records.append(MifRecord(m=int(row[0]), theta=theta, loglik=float(row[1])))
    if variant is None:
        variant = "rw" if records and "sigma_nu" in records[0].theta else "fixed"
    return MifTrace(variant=variant, records=records)


def write_slice_result(res, path):
    rows = [[res.param_name, v, e.mean, e.mc_se, s]
            for v, e, s in zip(res.grid, res.loglik_points, res.smoothed)]
    write_rows(path, SLICE_COLUMNS, rows)


def load_slice_result(path):
    from .inference import LoglikEstimate, SliceResult

    header, rows = _read_rows(path)
    if tuple(header) != SLICE_COLUMNS:
        raise DataError(f"{path}: not a slice file")
    name = rows[0][0] if rows else ""
    grid = np.array([float(r[1]) for r in rows])
    pts = [LoglikEstimate(mean=float(r[2]), mc_se=float(r[3]), replicates=0, particles=0) for r in rows]
    return SliceResult(param_name=name, grid=grid, loglik_points=pts,
                       smoothed=np.array([float(r[4]) for r in rows]))


def write_se_report(rep, path):
    rows = [[n, rep.estimate[n], rep.se[n]] for n in rep.names]
    write_rows(path, SE_COLUMNS, rows)


def load_se_report(path):
    from .inference import SEReport

    header, rows = _read_rows(path)
    if tuple(header) != SE_COLUMNS:
        raise DataError(f"{path}: not a standard-error report")
    names = tuple(r[0] for r in rows)
    return SEReport(names=names, estimate={r[0]: float(r[1]) for r in rows},
                    se={r[0]: float(r[2]) for r in rows})
