"""Experiment reports: manifests, CSV tables, atomic writes.

Every run produces a manifest (the fully resolved configuration plus the
package version) and zero or more named tables.  Tables serialize to CSV
with mandatory headers, '.' decimals, '\\n' line ends, UTF-8; floats use
shortest round-trip formatting, so re-running a seeded experiment yields
byte-identical bodies.  Files are written through a temporary name and
renamed, so partial reports are never observable.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["ExperimentReport", "csv_text", "write_atomic", "write_report"]


def _jsonable(value):
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


@dataclass
class ExperimentReport:
    manifest: dict
    tables: dict = field(default_factory=dict)     # name -> list of row dicts
    summary: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)     # name -> bool
    walltime_s: float = 0.0

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def csv_text(rows) -> str:
    if not rows:
        return "\n"
    header = list(rows[0].keys())
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_format_cell(row[key]) for key in header))
    return "\n".join(lines) + "\n"


def write_atomic(path, data) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    with tempfile.NamedTemporaryFile(
        mode=mode, dir=path.parent, prefix=f".{path.name}.", delete=False
    ) as tmp:
        tmp.write(data)
        tmp.flush()
        os.fsync(tmp.fileno())
        tmp_name = tmp.name
    os.replace(tmp_name, path)


def write_report(report: ExperimentReport, out_prefix, fmt: str = "csv") -> list[Path]:
    """Write tables (CSV and/or JSON) plus the JSON summary; returns paths.

    Wall time is reported on the terminal, never serialized, so identical
    configurations produce identical files.
    """
    prefix = Path(out_prefix)
    written: list[Path] = []
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    if fmt == "csv":
        for name, rows in report.tables.items():
            path = prefix.with_name(prefix.name + f".{name}.csv")
            write_atomic(path, csv_text(rows))
            written.append(path)
    body = {
        "manifest": report.manifest,
        "summary": report.summary,
        "checks": report.checks,
    }
    if fmt == "json":
        body["tables"] = report.tables
    path = prefix.with_name(prefix.name + ".json")
    write_atomic(path, json.dumps(body, sort_keys=True, indent=2, default=_jsonable) + "\n")
    written.append(path)
    return written
