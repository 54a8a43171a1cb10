"""Tabular reports shared by the sweeps and the command line runner."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np


def fmt(v) -> str:
    """Round-trippable text for a cell: repr for floats, plain str otherwise."""
    if isinstance(v, np.generic):
        v = v.item()  # numpy scalars would repr as np.float64(...)
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse(s: str):
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


@dataclass
class ConvergenceReport:
    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, **row):
        missing = set(self.columns) - set(row)
        if missing:
            raise KeyError(f"row lacks columns {sorted(missing)}")
        self.rows.append({c: row[c] for c in self.columns})

    def column(self, name):
        return [r[name] for r in self.rows]

    def with_logs(self, x="eps", y="endpoint_miss") -> "ConvergenceReport":
        """Copy with log10 columns for the sweep variable and the miss."""
        cols = list(self.columns) + [f"log10_{x}", f"log10_{y}"]
        out = ConvergenceReport(cols, meta=dict(self.meta))
        for r in self.rows:
            lx = math.log10(r[x]) if r[x] > 0 else float("-inf")
            ly = math.log10(r[y]) if r[y] > 0 else float("-inf")
            out.rows.append({**r, f"log10_{x}": lx, f"log10_{y}": ly})
        return out

    def sorted_by(self, key, descending=True) -> "ConvergenceReport":
        rows = sorted(self.rows, key=lambda r: r[key], reverse=descending)
        return ConvergenceReport(list(self.columns), rows, dict(self.meta))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([fmt(r[c]) for c in self.columns])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ConvergenceReport":
        rd = csv.reader(io.StringIO(text))
        header = next(rd)
        rows = [{c: parse(v) for c, v in zip(header, line)} for line in rd]
        return cls(header, rows)
