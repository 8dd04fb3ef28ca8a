"""CSV readers and writers with exact, platform-independent number formatting."""
from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cascade import DensityField
from .errors import ParseError, ValidationError

__all__ = ["fmt", "write_rows", "write_density_csv", "read_density_csv", "density_csv_text"]


def fmt(value) -> str:
    """Shortest round-trip decimal for floats; plain text for everything else."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _rows_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.write_text(_rows_text(header, rows), encoding="utf-8")
    return path


def density_csv_text(field: DensityField, first_column="distance") -> str:
    header = [first_column] + [fmt(float(t)) for t in field.times]
    sizes = field.group_sizes
    if sizes is not None:
        header.append("group_size")
    rows = []
    for x, row in zip(field.distances, field.values):
        cells = [x] + [float(v) for v in row]
        if sizes is not None:
            cells.append(int(sizes[x]))
        rows.append(cells)
    return _rows_text(header, rows)


def write_density_csv(path, field: DensityField) -> Path:
    path = Path(path)
    path.write_text(density_csv_text(field), encoding="utf-8")
    return path


def read_density_csv(source, mode="count") -> DensityField:
    """Parse the density layout written by :func:`write_density_csv`."""
    text = Path(source).read_text(encoding="utf-8") if not hasattr(source, "read") else source.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty density file", line=1) from None
    header = [h.strip() for h in header]
    if not header or header[0] != "distance":
        raise ParseError("density header must start with 'distance'", line=1)
    has_sizes = header[-1] == "group_size"
    time_cols = header[1:-1] if has_sizes else header[1:]
    try:
        times = [float(t) for t in time_cols]
    except ValueError as exc:
        raise ParseError(f"bad time in header: {exc}", line=1) from None
    if not times:
        raise ParseError("density file has no time columns", line=1)
    distances, values, sizes = [], [], {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
        try:
            x = int(row[0])
            cells = [float(c) for c in row[1:1 + len(times)]]
            if has_sizes:
                sizes[x] = int(row[-1])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        distances.append(x)
        values.append(cells)
    if not distances:
        raise ValidationError("density file has no rows")
    return DensityField(
        distances=distances, times=times, values=np.array(values), mode=mode,
        group_sizes=sizes if has_sizes else None,
    )
