"""Result tables: aggregation, CSV/Markdown emission and CSV parsing."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

CSV_COLUMNS = ("method", "enhancer", "noise", "snr_db", "mcd_db", "quality", "count")


@dataclass
class Cell:
    mcd_db: float
    quality: float
    count: int
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class ResultTable:
    """Cells keyed by ``(method, enhancer, noise, snr_db)``; insertion order is table order.

    ``noise`` is ``clean`` or a noise kind; ``snr_db`` is None for clean.
    """

    cells: dict = field(default_factory=dict)

    def add(self, method, enhancer, noise, snr_db, cell: Cell) -> None:
        self.cells[(method, enhancer, noise, snr_db)] = cell

    def get(self, method, enhancer="none", noise="clean", snr_db=None) -> Cell:
        return self.cells[(method, enhancer, noise, None if snr_db is None else float(snr_db))]

    @property
    def errors(self) -> dict:
        return {k: c for k, c in self.cells.items() if not c.ok}

    def methods(self) -> list:
        return list(dict.fromkeys(k[0] for k in self.cells))

    def enhancers(self) -> list:
        return list(dict.fromkeys(k[1] for k in self.cells))

    def conditions(self) -> list:
        return list(dict.fromkeys((k[2], k[3]) for k in self.cells))

    def __len__(self):
        return len(self.cells)

    def __eq__(self, other):
        if not isinstance(other, ResultTable):
            return NotImplemented
        return list(self.cells.items()) == list(other.cells.items())


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def table_to_csv(rt: ResultTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS + ("error",))
    for (method, enh, noise, snr), c in rt.cells.items():
        w.writerow([method, enh, noise, _fmt(snr), _fmt(c.mcd_db), _fmt(c.quality), c.count, c.error or ""])
    return buf.getvalue()


def table_from_csv(text: str) -> ResultTable:
    rt = ResultTable()
    for row in csv.DictReader(io.StringIO(text)):
        snr = float(row["snr_db"]) if row["snr_db"] else None
        rt.add(row["method"], row["enhancer"], row["noise"], snr,
               Cell(float(row["mcd_db"]), float(row["quality"]), int(row["count"]), row.get("error") or None))
    return rt


def _cond_label(noise, snr) -> str:
    return "clean" if noise == "clean" else f"{noise} {snr:g} dB"


def table_to_markdown(rt: ResultTable) -> str:
    """One grid per enhancer: methods x conditions, MCD then quality proxy.

    Per column the lowest MCD and the highest quality are bold.
    """
    out = []
    conds = rt.conditions()
    for enh in rt.enhancers():
        methods = [m for m in rt.methods() if any((m, enh, n, s) in rt.cells for n, s in conds)]
        out.append(f"### Enhancer: {enh}\n")
        header = ["method"] + [f"MCD (dB) {_cond_label(n, s)}" for n, s in conds] + \
                 [f"quality proxy {_cond_label(n, s)}" for n, s in conds]
        out.append("| " + " | ".join(header) + " |")
        out.append("|" + "---|" * len(header))
        best_mcd, best_q = {}, {}
        for n, s in conds:
            vals = [(rt.cells[(m, enh, n, s)], m) for m in methods if (m, enh, n, s) in rt.cells]
            vals = [(c, m) for c, m in vals if c.ok and math.isfinite(c.mcd_db)]
            if vals:
                best_mcd[(n, s)] = min(c.mcd_db for c, _ in vals)
                best_q[(n, s)] = max(c.quality for c, _ in vals)
        for m in methods:
            row = [m]
            for metric in ("mcd", "quality"):
                for n, s in conds:
                    c = rt.cells.get((m, enh, n, s))
                    if c is None:
                        row.append("")
                    elif not c.ok:
                        row.append("error")
                    else:
                        v = c.mcd_db if metric == "mcd" else c.quality
                        best = best_mcd if metric == "mcd" else best_q
                        text = f"{v:.2f}"
                        row.append(f"**{text}**" if best.get((n, s)) == v else text)
            out.append("| " + " | ".join(row) + " |")
        out.append("")
    out.append("Quality proxy: frequency-weighted segmental SNR (dB); not PESQ.\n")
    return "\n".join(out)


def emit_tables(rt: ResultTable, format: str, out) -> None:
    """Write `rt` as ``csv`` or ``markdown`` (``md``) to path `out`."""
    if format == "csv":
        text = table_to_csv(rt)
    elif format in ("markdown", "md"):
        text = table_to_markdown(rt)
    else:
        raise ValueError(f"unknown table format {format!r}")
    Path(out).write_text(text)
