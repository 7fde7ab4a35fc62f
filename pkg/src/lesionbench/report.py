"""Deterministic JSON/CSV serialization shared by the CLI commands.

All floats are rounded to 6 significant digits before writing and JSON
keys are sorted, so identical inputs always serialize to identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path


def sig6(x: float) -> float:
    """Round to 6 significant digits through the repr path."""
    if x != x or x in (float("inf"), float("-inf")):
        raise ValueError(f"non-finite value in report: {x}")
    return float(f"{x:.6g}")


def round_floats(obj):
    """Recursively round floats inside JSON-like structures."""
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, float):
        return sig6(obj)
    if isinstance(obj, dict):
        return {k: round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v) for v in obj]
    return obj


def dumps_json(obj) -> str:
    return json.dumps(round_floats(obj), indent=2, sort_keys=True) + "\n"


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(dumps_json(obj), encoding="utf-8")


def fmt_cell(value) -> str:
    """Render one CSV cell; None becomes an empty cell."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{sig6(value):.6g}"
    return str(value)


def dumps_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path: str | Path, header, rows) -> None:
    Path(path).write_text(dumps_csv(header, rows), encoding="utf-8")
