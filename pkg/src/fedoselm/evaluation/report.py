"""Experiment reports: one JSON document plus a text table (and CSV curves).

Every report follows ``report_schema.json`` shipped with the package::

    {
      "schema": "fedoselm.report/1",
      "experiment": "<name>",
      "version": "<package version>",
      "seed": <int>,
      "config": {...},             # every knob the run used
      "results": {...},            # experiment-specific numbers
      "tables": [{"title": str, "columns": [str], "rows": [[str | number | null]]}],
      "curves": {"<name>": {"x": [number], "<series>": [number | null], ...}}
    }
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

SCHEMA_ID = "fedoselm.report/1"


def _clean(value):
    """JSON-safe copy: numpy scalars/arrays to Python, NaN/Inf to None."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "tolist"):
        return _clean(value.tolist())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


@dataclass
class Report:
    experiment: str
    seed: int
    config: dict[str, Any]
    results: dict[str, Any] = field(default_factory=dict)
    tables: list[dict[str, Any]] = field(default_factory=list)
    curves: dict[str, dict[str, list]] = field(default_factory=dict)

    def add_table(self, title: str, columns, rows) -> None:
        self.tables.append({"title": title, "columns": list(columns), "rows": [list(r) for r in rows]})

    def as_dict(self) -> dict[str, Any]:
        from .. import __version__

        return _clean({
            "schema": SCHEMA_ID,
            "experiment": self.experiment,
            "version": __version__,
            "seed": self.seed,
            "config": self.config,
            "results": self.results,
            "tables": self.tables,
            "curves": self.curves,
        })

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        out = [f"# {self.experiment} (seed {self.seed})"]
        for table in self.as_dict()["tables"]:
            out += ["", table["title"], format_table(table["columns"], table["rows"])]
        return "\n".join(out) + "\n"

    def write(self, out_dir) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = out_dir / self.experiment
        paths = [stem.with_suffix(".json"), stem.with_suffix(".txt")]
        paths[0].write_text(self.to_json(), encoding="utf-8")
        paths[1].write_text(self.to_text(), encoding="utf-8")
        for name, curve in self.as_dict()["curves"].items():
            path = out_dir / f"{self.experiment}-{name}.csv"
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            keys = list(curve)
            writer.writerow(keys)
            writer.writerows(zip(*(curve[k] for k in keys)))
            path.write_text(buf.getvalue(), encoding="utf-8")
            paths.append(path)
        return paths


def _fmt(cell) -> str:
    if cell is None:
        return "-"
    if isinstance(cell, float):
        return f"{cell:.4g}"
    return str(cell)


def format_table(columns, rows) -> str:
    cells = [[str(c) for c in columns]] + [[_fmt(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def load_schema() -> dict:
    text = resources.files("fedoselm").joinpath("report_schema.json").read_text(encoding="utf-8")
    return json.loads(text)
