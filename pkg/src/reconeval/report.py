"""Deterministic JSON/CSV serialisation of evaluation reports and the report schema."""

from __future__ import annotations

import csv
import io
import json
import math
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

SIGNIFICANT_DIGITS = 6
BENCH_COLUMNS = ["label", "psnr_db", "ssim_mean", "ssim_std", "lpips", "hd", "wd", "latency_s", "hd_b", "hd_a", "delta_hd"]


def format_float(x: float) -> float | str:
    """Round to 6 significant digits; infinities become the strings 'inf' / '-inf'."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return float(f"{x:.{SIGNIFICANT_DIGITS}g}")


def normalise(obj: Any) -> Any:
    if isinstance(obj, Mapping):
        return {str(k): normalise(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [normalise(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return normalise(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    return obj


def dumps(report: Mapping) -> str:
    return json.dumps(normalise(report), sort_keys=True, indent=2) + "\n"


def write_report(report: Mapping, path: str | Path) -> None:
    Path(path).write_text(dumps(report))


def report_schema() -> dict:
    return json.loads(resources.files("reconeval").joinpath("report.schema.json").read_text())


def validate_report(report: Mapping) -> None:
    """Raise ``jsonschema.ValidationError`` if the normalised report violates the schema."""
    import jsonschema

    jsonschema.validate(normalise(report), report_schema())


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating, int, np.integer)) and not isinstance(value, bool):
        v = format_float(value)
        return v if isinstance(v, str) else f"{v:.{SIGNIFICANT_DIGITS}g}"
    return str(value)


def bench_csv(rows: Iterable[Mapping]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in BENCH_COLUMNS])
    return buf.getvalue()
