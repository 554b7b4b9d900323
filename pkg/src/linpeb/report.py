"""Atomic CSV/JSON output and the run manifest."""

from __future__ import annotations

import csv
import io
import json
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np

from .scenario import Scenario
from .solver import PebReport

MANIFEST_VERSION = 1
PEB_COLUMNS = ("node_index", "x_m", "role", "peb_total_m", "peb_x_m", "peb_y_m", "peb_z_m")


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


class OutputWriter:
    """Stage files in a temporary directory and move them into place on success.

    Nothing appears in ``out_dir`` unless the ``with`` block completes.
    """

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)
        self._staged: list[str] = []
        self._tmp: Path | None = None

    def __enter__(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._tmp = Path(tempfile.mkdtemp(prefix=".linpeb-", dir=self.out_dir))
        return self

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                for name in self._staged:
                    os.replace(self._tmp / name, self.out_dir / name)
        finally:
            shutil.rmtree(self._tmp, ignore_errors=True)
        return False

    @property
    def names(self) -> list[str]:
        return list(self._staged)

    def _stage(self, name: str, text: str):
        if name in self._staged:
            raise ValueError(f"output {name!r} written twice")
        with open(self._tmp / name, "w", newline="") as fh:
            fh.write(text)
        self._staged.append(name)

    def write_csv(self, name: str, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
        self._stage(name, buf.getvalue())

    def write_json(self, name: str, obj):
        self._stage(name, json.dumps(obj, indent=2, sort_keys=False, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def peb_rows(scenario: Scenario, report: PebReport):
    """One row per node in line order; anchors carry zero bounds."""
    for node in scenario.by_slot():
        if node.is_anchor:
            yield (node.index, float(node.position[0]), node.role, 0.0, 0.0, 0.0, 0.0)
        else:
            g = node.index - 1
            yield (node.index, float(node.position[0]), node.role, report.total[g], report.x[g],
                   report.y[g], report.z[g])


def manifest(command: str, config: dict, seed: int, solver_path: str, wall_time: float, outputs,
             summary: dict | None = None) -> dict:
    from . import __version__
    return {
        "manifest_version": MANIFEST_VERSION,
        "tool": "linpeb",
        "tool_version": __version__,
        "command": command,
        "seed": seed,
        "solver_path": solver_path,
        "wall_time_s": wall_time,
        "outputs": list(outputs),
        "summary": summary or {},
        "config": config,
    }
