"""Quality and speed metrics, and the benchmark record written by ``bench``."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, fields

ZERO_TOL = 1e-12


def approximation_ratio(h_star: float, h_min: float) -> float | None:
    """``h_star / h_min``, or None when the reference optimum is (numerically) zero.

    Use :func:`absolute_gap` in that case.
    """
    if abs(h_min) <= ZERO_TOL:
        return None
    return float(h_star) / float(h_min)


def absolute_gap(h_star: float, h_min: float) -> float:
    return float(h_star) - float(h_min)


def speedup(tts_ref: float, tts_split: float) -> float:
    if not (tts_ref > 0 and tts_split > 0):
        raise ValueError(f"times must be positive, got {tts_ref} and {tts_split}")
    return float(tts_ref) / float(tts_split)


@dataclass
class BenchmarkRecord:
    """One row of a benchmark table. Field order is the CSV column order.

    ``alpha`` is the cost ratio against a reference optimum, ``cut_alpha`` the
    cut-value ratio for MaxCut instances; ``gap`` replaces ``alpha`` when the
    reference cost is zero.
    """

    instance_id: str
    n: int
    k: int | None
    method: str
    best_cost: float
    cut_value: float | None
    feasible: bool
    tts_seconds: float
    iterations: int | None
    alpha: float | None = None
    cut_alpha: float | None = None
    gap: float | None = None
    speedup: float | None = None
    optimal: bool | None = None

    def to_dict(self) -> dict:
        return asdict(self)


CSV_COLUMNS = tuple(f.name for f in fields(BenchmarkRecord))


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        d = r.to_dict()
        w.writerow([_cell(d[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def records_to_json(records) -> str:
    return json.dumps([r.to_dict() for r in records], indent=2)
