"""Byte-stable CSV/JSON tables carrying the seed and config hash."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping, Sequence

__all__ = ["Table", "emit", "format_value", "config_hash", "read_csv"]


def format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    if v is None:
        return ""
    return str(v)


def _json_value(v: Any):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, float):
        if not math.isfinite(v):
            return format_value(v)
        return float(format(v, ".17g"))
    if hasattr(v, "item"):
        return _json_value(v.item())
    return v


def config_hash(config: Mapping[str, Any]) -> str:
    blob = json.dumps({k: config[k] for k in sorted(config)}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Table:
    rows: list[dict]
    seed: int | None = None
    config_hash: str = ""
    columns: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.columns:
            cols: list[str] = []
            for r in self.rows:
                for c in r:
                    if c not in cols:
                        cols.append(c)
            self.columns = cols
        for extra in ("seed", "config_hash"):
            if extra not in self.columns:
                self.columns.append(extra)

    def _cell(self, row, col):
        if col == "seed" and "seed" not in row:
            return self.seed
        if col == "config_hash" and "config_hash" not in row:
            return self.config_hash
        return row.get(col)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([format_value(self._cell(r, c)) for c in self.columns])
        return buf.getvalue()

    def to_json(self) -> str:
        data = {"seed": self.seed, "config_hash": self.config_hash, "columns": self.columns,
                "rows": [{c: _json_value(self._cell(r, c)) for c in self.columns} for r in self.rows]}
        return json.dumps(data, indent=1) + "\n"


def emit(table: Table | Sequence[dict], path: str | Path, fmt: str = "csv", **meta) -> Path:
    """Write ``table`` to ``path``; raises ValueError on an empty table."""
    if not isinstance(table, Table):
        table = Table(list(table), **meta)
    if not table.rows:
        raise ValueError("refusing to emit an empty table")
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    path = Path(path)
    text = table.to_csv() if fmt == "csv" else table.to_json()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
