"""Serialization of experiment reports.

CSV follows RFC 4180 (CRLF line endings, minimal quoting) with floats
written to 17 significant digits so they round-trip exactly.  JSON carries
the echoed experiment configuration, summary and records with sorted keys.
Both are pure functions of the report, so identical reports give identical
bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from .experiments import ExperimentReport

__all__ = ["FORMATS", "format_value", "to_csv", "to_json", "emit", "write_csv_rows"]

FORMATS = ("csv", "json", "svg")


def format_value(value) -> str:
    """CSV text for one cell."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    if value is None:
        return ""
    return str(value)


def write_csv_rows(header, rows) -> str:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def to_csv(report: ExperimentReport) -> str:
    """One record per row under a header; a report without records gives the header only."""
    return write_csv_rows(report.columns, ([rec.get(c) for c in report.columns] for rec in report.records))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def to_json(report: ExperimentReport) -> str:
    payload = {
        "experiment": report.experiment,
        "code_version": report.code_version,
        "spec": report.spec,
        "summary": report.summary,
        "columns": list(report.columns),
        "records": report.records,
    }
    return json.dumps(_jsonable(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"


def emit(report: ExperimentReport, fmt: str, out_dir: str | Path, stem: str | None = None) -> Path:
    """Write ``report`` in format ``fmt`` under ``out_dir`` and return the path."""
    if fmt not in FORMATS:
        raise ValidationError(f"unknown format {fmt!r}; choose from {FORMATS}")
    out_dir = Path(out_dir)
    path = out_dir / f"{stem or report.experiment}.{fmt}"
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            path.write_bytes(to_csv(report).encode("utf-8"))
        elif fmt == "json":
            path.write_bytes(to_json(report).encode("utf-8"))
        else:
            from .plotting import render_svg  # matplotlib is only imported for figures

            path.write_bytes(render_svg(report))
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {fmt} report to {path}: {exc.strerror}") from exc
    return path
