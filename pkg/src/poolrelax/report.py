"""Solve reports and their CSV / text-table rendering."""

import csv
import io
import math
from dataclasses import asdict, dataclass, field

# termination reasons
COMPLETE = "complete"
UNREPAIRABLE = "unrepairable"
RELAXED = "relaxed"
RECOVERED = "recovered"

CSV_HEADER = (
    "instance", "method", "mode", "sucs_ratio_pct", "relax_obj_start", "relax_obj_final", "recovered_obj",
    "time_relax", "time_recover", "time_total", "termination", "iterations", "max_residual",
)


@dataclass
class SolveReport:
    """Numbers produced by one pipeline run.

    ``relax_obj_final`` stays ``None`` unless the relaxation was re-solved
    (rescheduling); ``times`` holds wall seconds keyed by phase.
    """

    instance: str
    relax_kind: str
    mode: str
    relax_obj_start: float = None
    relax_obj_final: float = None
    recovered_obj: float = None
    sucs_ratio: float = None
    times: dict = field(default_factory=dict)
    termination: str = ""
    iterations: int = 0
    max_residual: float = None
    history: list = field(default_factory=list)

    @property
    def method(self):
        return f"{self.relax_kind}+{self.mode}" if self.mode != "relax" else self.relax_kind

    @property
    def unrepairable(self):
        return self.termination == UNREPAIRABLE

    def to_dict(self):
        d = asdict(self)
        d["method"] = self.method
        return d

    def row(self):
        """Values in ``CSV_HEADER`` order; missing numbers become ``None``."""
        t = self.times
        recover = t.get("reschedule", t.get("ffs"))
        pct = None if self.sucs_ratio is None else 100.0 * self.sucs_ratio
        return (self.instance, self.method, self.mode, pct, self.relax_obj_start, self.relax_obj_final,
                self.recovered_obj, t.get("relax"), recover, t.get("total"), self.termination, self.iterations,
                self.max_residual)


def _cell(v, digits):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return f"{v:.{digits}f}"
    return str(v)


def to_csv(reports, digits=10):
    """CSV text with the fixed ``CSV_HEADER`` column order."""
    if not reports:
        raise ValueError("need at least one report")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        w.writerow([_cell(v, digits) for v in r.row()])
    return buf.getvalue()


def read_csv(text):
    """Rows of a report CSV as dicts of strings."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if rows and tuple(rows[0].keys()) != CSV_HEADER:
        raise ValueError("CSV header does not match the report layout")
    return rows


def from_row(row):
    """Rebuild a :class:`SolveReport` from one CSV row (dict of strings)."""

    def num(k):
        return float(row[k]) if row[k] != "" else None

    kind, mode = row["method"].split("+")[0], row["mode"]
    times = {k: num(c) for k, c in (("relax", "time_relax"), ("total", "time_total")) if num(c) is not None}
    if num("time_recover") is not None:
        times["reschedule" if mode == "reschedule" else "ffs"] = num("time_recover")
    pct = num("sucs_ratio_pct")
    return SolveReport(row["instance"], kind, mode, num("relax_obj_start"), num("relax_obj_final"),
                       num("recovered_obj"), None if pct is None else pct / 100.0, times, row["termination"],
                       int(row["iterations"] or 0), num("max_residual"))


def to_table(reports, digits=4):
    """Right-aligned plain-text table of the same columns."""
    if not reports:
        raise ValueError("need at least one report")
    header = ("instance", "method", "sucs(%)", "relax start", "relax final", "obj", "t relax", "t recover",
              "t total", "end")
    keep = (0, 1, 3, 4, 5, 6, 7, 8, 9, 10)
    body = [[_cell(r.row()[k], digits) for k in keep] for r in reports]
    widths = [max(len(h), *(len(b[c]) for b in body)) for c, h in enumerate(header)]
    lines = ["  ".join(h.rjust(wd) for h, wd in zip(header, widths))]
    lines.append("  ".join("-" * wd for wd in widths))
    lines.extend("  ".join(c.rjust(wd) for c, wd in zip(b, widths)) for b in body)
    return "\n".join(lines) + "\n"
