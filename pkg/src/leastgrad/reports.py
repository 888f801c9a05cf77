"""Deterministic JSON report files.

Two rules keep reports byte-reproducible across runs: keys are sorted, and
anything wall-clock lives in a separate timing file so the main report
depends only on the computed numbers.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .ioutil import atomic_write_text


def jsonable(obj):
    """Recursively convert numpy scalars/arrays so json.dumps accepts them."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, np.integer, np.floating)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)  # json has no inf/nan literals
    return obj


def report_text(data: dict) -> str:
    return json.dumps(jsonable(data), sort_keys=True, indent=2) + "\n"


def write_report(path: str | Path, data: dict) -> None:
    atomic_write_text(path, report_text(data))


def write_timing(path: str | Path, seconds: dict[str, float]) -> None:
    atomic_write_text(path, report_text(seconds))
