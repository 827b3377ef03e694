"""Report and trajectory emission: ``report.json`` plus one CSV per series."""

from __future__ import annotations

import json
import math
import os
import re

import numpy as np

from .errors import RoughPMEError

_SAFE = re.compile(r"[^A-Za-z0-9_.-]")


class ReportIOError(RoughPMEError, OSError):
    """Writing results failed; the message carries the path."""


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def _write(path, text: str) -> None:
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc.strerror or exc}") from None


def series_csv(columns: dict) -> str:
    names = list(columns)
    rows = zip(*(columns[n] for n in names))
    lines = [",".join(names)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
                              for v in row))
    return "\n".join(lines) + "\n"


def emit_report(report, directory) -> list:
    """Write ``report.json`` and ``<series>.csv`` files; returns the written paths."""
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as exc:
        raise ReportIOError(f"cannot create {directory}: {exc.strerror or exc}") from None
    written = []
    path = os.path.join(directory, "report.json")
    _write(path, json.dumps(_clean(report.as_dict()), indent=2, sort_keys=True) + "\n")
    written.append(path)
    for name in sorted(report.series):
        path = os.path.join(directory, _SAFE.sub("_", name) + ".csv")
        _write(path, series_csv(report.series[name]))
        written.append(path)
    return written


def export_trajectory(traj, directory, every: int = 1) -> list:
    """One ``field_<index>.csv`` per kept record plus ``manifest.json`` listing times."""
    if every < 1:
        raise ValueError("every must be >= 1")
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as exc:
        raise ReportIOError(f"cannot create {directory}: {exc.strerror or exc}") from None
    phys = traj.physical()
    keep = list(range(0, len(phys), every))
    if keep[-1] != len(phys) - 1:
        keep.append(len(phys) - 1)
    entries = []
    written = []
    for i in keep:
        name = f"field_{i:06d}.csv"
        path = os.path.join(directory, name)
        try:
            phys.field(i).to_csv(path)
        except OSError as exc:
            raise ReportIOError(f"cannot write {path}: {exc.strerror or exc}") from None
        entries.append({"index": i, "t": float(phys.times[i]), "file": name})
        written.append(path)
    path = os.path.join(directory, "manifest.json")
    _write(path, json.dumps({"records": entries}, indent=2, sort_keys=True) + "\n")
    written.append(path)
    return written
