"""Result rows and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

COLUMNS = ("param", "fa", "fa_lo", "fa_hi", "md", "md_lo", "md_hi",
           "fa_analytic", "md_analytic", "trials", "seed")


@dataclass(frozen=True)
class ResultRow:
    param: float
    fa: float | None
    fa_lo: float | None
    fa_hi: float | None
    md: float | None
    md_lo: float | None
    md_hi: float | None
    fa_analytic: float | None
    md_analytic: float | None
    trials: int
    seed: int
    error: str | None = field(default=None, compare=False)

    @classmethod
    def failed(cls, param, trials, seed, error: str) -> "ResultRow":
        return cls(param, None, None, None, None, None, None, None, None, trials, seed, error)


@dataclass
class ResultTable:
    param_name: str = "param"
    rows: list[ResultRow] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(r.error is not None for r in self.rows)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return format(float(v), ".10g")


def to_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in table.rows:
        writer.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def write_csv(table: ResultTable, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(to_csv(table))


def read_csv(path) -> ResultTable:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        rows = []
        for rec in reader:
            vals = {c: (float(rec[c]) if rec[c] != "" else None) for c in COLUMNS}
            vals["trials"] = int(rec["trials"])
            vals["seed"] = int(rec["seed"])
            rows.append(ResultRow(**vals))
    return ResultTable(rows=rows)
