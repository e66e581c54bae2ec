"""Schema-stable CSV output (and readers used for round-trip checks)."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = ["SCHEMAS", "write_rows", "read_rows", "trace_rows", "summary_rows", "type_rows", "emit_csv"]

SCHEMAS: dict[str, tuple[str, ...]] = {
    "trace": ("iter", "device", "from_coalition", "to_coalition", "value_before", "value_after"),
    "summary": ("device_id", "coalition_id", "type_level", "price", "a"),
    "types": ("device_id", "theta", "xi", "phi", "level"),
    "payoffs": ("device_id", "majp_payoff", "baseline_payoff", "majp_a"),
    "oracle": ("M", "v_majp", "v_star", "max_coalition_size", "harmonic_bound", "ratio", "bound_ok"),
}


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def write_rows(path: str | Path, columns: Sequence[str], rows: Iterable[Mapping]) -> Path:
    """UTF-8, comma-delimited, header first; floats keep 17 significant digits."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(columns)
            for row in rows:
                w.writerow([_cell(row[c]) for c in columns])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_rows(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def trace_rows(trace) -> list[dict]:
    return [
        {"iter": r.iter, "device": r.device, "from_coalition": r.from_coalition, "to_coalition": r.to_coalition,
         "value_before": r.value_before, "value_after": r.value_after}
        for r in trace.iterations
    ]


def summary_rows(trace) -> list[dict]:
    rows = []
    for cid, c in enumerate(trace.final_partition.coalitions):
        for m in c.members:
            rows.append({"device_id": m, "coalition_id": cid, "type_level": c.type_level,
                         "price": float(trace.final_prices[m]), "a": int(trace.final_participation[m])})
    return sorted(rows, key=lambda r: r["device_id"])


def type_rows(devices) -> list[dict]:
    return [
        {"device_id": d.id, "theta": d.dtype.theta, "xi": d.dtype.xi, "phi": d.dtype.phi, "level": d.dtype.level}
        for d in sorted(devices, key=lambda d: d.id)
    ]


def emit_csv(report, path: str | Path, kind: str | None = None) -> Path:
    """Write a report as CSV.

    ``report`` may be a solve trace (``kind`` "trace" or "summary"), a device
    list ("types"), or a list of row dicts whose keys follow ``SCHEMAS[kind]``
    or, without ``kind``, the first row's keys.
    """
    if kind == "trace":
        return write_rows(path, SCHEMAS["trace"], trace_rows(report))
    if kind == "summary":
        return write_rows(path, SCHEMAS["summary"], summary_rows(report))
    if kind == "types":
        return write_rows(path, SCHEMAS["types"], type_rows(report))
    rows = list(report)
    if kind is not None:
        cols = SCHEMAS[kind]
    elif rows:
        cols = tuple(rows[0].keys())
    else:
        raise ValueError("empty report needs an explicit kind to know its header")
    if "device_id" in cols:
        rows = sorted(rows, key=lambda r: r["device_id"])
    return write_rows(path, cols, rows)
