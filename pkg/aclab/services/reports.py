"""Run reports: provenance block, JSON and CSV writers."""

from __future__ import annotations

import csv
import json
import logging
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

logger = logging.getLogger(__name__)

CONVENTION_NOTES = {
    "gaussian_normalization": "nu_2 has precision Lambda and mean the ramp; Z_i include the ramp energy offset",
    "delta_0": "landscape radius 0.3 is an engineering default, not a derived constant",
    "collar": "one ghost layer at x = +-floor(L/a) a carries the boundary values",
}


@dataclass
class RunReport:
    rows: list[dict]
    provenance: dict
    passed: bool
    hard_failures: list[str] = field(default_factory=list)
    verdict: str = ""

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "verdict": self.verdict or ("pass" if self.passed else "fail"),
            "hard_failures": self.hard_failures,
            "provenance": self.provenance,
            "rows": [_jsonable(row) for row in self.rows],
        }


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def provenance(schedule: dict, seeds, started: float, extra: dict | None = None) -> dict:
    block = {
        "schedule": schedule,
        "seeds": list(seeds),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "wall_time_s": round(time.perf_counter() - started, 3),
        "notes": CONVENTION_NOTES,
    }
    if extra:
        block.update(extra)
    return block


def write_json(report: RunReport | dict, path: str | Path) -> Path:
    path = Path(path)
    payload = report.to_dict() if isinstance(report, RunReport) else _jsonable(report)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n")
    logger.info("wrote %s", path)
    return path


def write_csv(rows: list[dict], columns: list[str], path: str | Path) -> Path:
    """Fixed leading columns, then any extra keys in first-seen order."""
    path = Path(path)
    fieldnames = list(columns)
    for row in rows:
        fieldnames.extend(k for k in row if k not in fieldnames)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(row.get(k)) for k in fieldnames})
    logger.info("wrote %d rows to %s", len(rows), path)
    return path


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value
