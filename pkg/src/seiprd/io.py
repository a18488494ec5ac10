"""CSV ingestion and the small file writers used by the harness.

Input series are two-column CSV files with the header ``date,count``,
ISO-8601 dates and non-negative integer counts. Missing days are allowed.
"""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
from pathlib import Path

import numpy as np

from seiprd.errors import FormatError, OrderingError, ValidationError
from seiprd.model_core import date_of, day_of
from seiprd.observation import CountSeries

HEADER = ["date", "count"]


def ingest_csv(path) -> CountSeries:
    """Read a ``date,count`` file into a day-indexed :class:`CountSeries`.

    Rows are numbered from 1 after the header in error messages.
    """
    path = Path(path)
    try:
        handle = path.open(newline="")
    except FileNotFoundError:
        raise FormatError(f"{path}: file not found") from None
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != HEADER:
            raise FormatError(f"{path}: expected header 'date,count', got {header!r}")
        days, counts = [], []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise FormatError(f"{path}: row {row_no}: expected 2 fields, got {len(row)}")
            raw_date, raw_count = (cell.strip() for cell in row)
            try:
                day = day_of(_dt.date.fromisoformat(raw_date))
            except ValueError:
                raise FormatError(f"{path}: row {row_no}: unparseable date {raw_date!r}") from None
            try:
                count = int(raw_count)
            except ValueError:
                raise FormatError(f"{path}: row {row_no}: count {raw_count!r} is not an integer") from None
            if count < 0:
                raise ValidationError(f"{path}: row {row_no}: negative count {count}")
            if days and day <= days[-1]:
                what = "duplicate" if day == days[-1] else "out-of-order"
                raise OrderingError(f"{path}: row {row_no}: {what} date {raw_date}")
            days.append(day)
            counts.append(count)
    return CountSeries(np.array(days, dtype=np.int64), np.array(counts, dtype=np.int64))


def write_series_csv(path, series: CountSeries) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for day, count in zip(series.days.tolist(), series.counts.tolist()):
            w.writerow([date_of(day).isoformat(), count])


def write_rows(path, header, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n")


def fmt(value) -> str:
    """Stable text form of a float for output tables."""
    value = float(value)
    if value != value:
        return "nan"
    return repr(value)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def blob_hash(data: bytes) -> str:
    """Git-style object hash of ``data``."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def series_digest(series: CountSeries) -> str:
    h = hashlib.sha256()
    h.update(series.days.astype("<i8").tobytes())
    h.update(series.counts.astype("<i8").tobytes())
    return h.hexdigest()
