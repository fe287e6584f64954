"""Row tables written as CSV with a mirrored JSON document."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


@dataclass
class ProfileTable:
    """Ordered rows sharing one column list, plus free-form metadata."""

    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, row: dict) -> None:
        missing = set(self.columns) - set(row)
        if missing:
            raise KeyError(f"row lacks columns {sorted(missing)}")
        self.rows.append({c: row[c] for c in self.columns})

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([format_value(r[c]) for c in self.columns])
        return buf.getvalue()

    def to_json_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "rows": [{c: _json_value(r[c]) for c in self.columns} for r in self.rows],
            "meta": self.meta,
        }

    def write(self, stem) -> tuple[Path, Path]:
        """Write ``<stem>.csv`` and ``<stem>.json``; returns both paths."""
        stem = Path(stem)
        csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
        csv_path.write_text(self.to_csv_string(), encoding="utf-8")
        json_path.write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=False) + "\n",
                             encoding="utf-8")
        return csv_path, json_path


def read_csv(path) -> ProfileTable:
    """Read a table back; numeric-looking cells become int or float."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        rows = []
        for rec in reader:
            rows.append({c: _parse(v) for c, v in zip(columns, rec)})
    return ProfileTable(columns, rows)


def _parse(v: str):
    if v == "":
        return None
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v
