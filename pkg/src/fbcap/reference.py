"""Compare a run report against a published convergence table."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

DEFAULT_TOLERANCE = 1e-3
ROW_FIELDS = ("upper_bits", "lower_bits")


def load_json(path: str | Path) -> dict[str, Any]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, dict):
        raise ValueError(f"{path} must hold a JSON object")
    return payload


def _deviation(h: int | None, field: str, expected: float, actual: float | None) -> dict[str, Any]:
    return {
        "h": h,
        "field": field,
        "reference": expected,
        "actual": actual,
        "delta": None if actual is None else actual - expected,
    }


def compare_to_reference(
    report: dict[str, Any],
    reference: dict[str, Any],
    tol: float | None = None,
) -> list[dict[str, Any]]:
    """Return every reference entry the report misses by more than tol.

    Each deviation dict contains: h (None for scalar entries), field,
    reference, actual (None when missing) and delta.
    """
    tol = float(tol if tol is not None else reference.get("tolerance", DEFAULT_TOLERANCE))
    rows = {int(row["h"]): row for row in report.get("convergence") or [] if "h" in row}
    deviations: list[dict[str, Any]] = []

    for expected_row in reference.get("rows") or []:
        h = int(expected_row["h"])
        actual_row = rows.get(h, {})
        for field in ROW_FIELDS:
            if field not in expected_row:
                continue
            expected = float(expected_row[field])
            actual = actual_row.get(field)
            if actual is None or abs(float(actual) - expected) > tol:
                deviations.append(_deviation(h, field, expected, actual))

    capacity = reference.get("capacity_bits")
    if capacity is not None:
        actual_capacity = report.get("capacity_bits") or {}
        for side in ("upper", "lower"):
            actual = actual_capacity.get(side)
            if actual is None or abs(float(actual) - float(capacity)) > tol:
                deviations.append(_deviation(None, f"capacity_bits.{side}", float(capacity), actual))
    return deviations


def format_deviations(deviations: list[dict[str, Any]]) -> str:
    if not deviations:
        return "[fbcap] report matches reference"
    lines = ["[fbcap] WARNING: report deviates from reference:"]
    for d in deviations:
        where = "capacity" if d["h"] is None else f"h={d['h']}"
        actual = "missing" if d["actual"] is None else f"{d['actual']:.12f}"
        delta = "" if d["delta"] is None else f" (delta={d['delta']:+.3e})"
        lines.append(f"  {where} | {d['field']}: actual={actual} reference={d['reference']:.12f}{delta}")
    return "\n".join(lines)
