"""Ledger -> results tables (Markdown and CSV).

Rows are (method, model selection, seed); columns are the nominal reward
and the worst-attack reward at each evaluated budget, as ``mean ± SEM``.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

from ..scoring import model_score
from .ledger import read_ledger


def eps_label(eps):
    n = eps * 255
    if abs(n - round(n)) < 1e-9:
        return f"{int(round(n))}/255"
    return f"{eps:g}"


def collect_rows(records):
    rows = {}
    budgets = set()
    for r in records:
        if r.get("kind") != "eval":
            continue
        key = (r["method"], r["selection"], r["seed"])
        row = rows.setdefault(key, {})
        if r["attack"] == "none":
            row["nominal"] = (r["mean"], r["sem"])
        elif r["attack"] == "worst":
            row[r["epsilon"]] = (r["mean"], r["sem"])
            budgets.add(r["epsilon"])
    return rows, sorted(budgets)


def _cell(v):
    return "" if v is None else f"{v[0]:.2f} ± {v[1]:.2f}"


def render(records):
    """Return (markdown, csv) strings for the eval records in ``records``."""
    rows, budgets = collect_rows(records)
    header = ["method", "selection", "seed", "nominal"] + [eps_label(e) for e in budgets] + ["score"]
    table = []
    for (method, selection, seed), row in sorted(rows.items(), key=lambda kv: (str(kv[0][0]), str(kv[0][1]), kv[0][2])):
        adv = [row.get(e) for e in budgets]
        score = ""
        if "nominal" in row and adv and all(a is not None for a in adv):
            score = f"{model_score(row['nominal'][0], [a[0] for a in adv]):.3f}"
        table.append([method, selection, str(seed), _cell(row.get("nominal"))]
                     + [_cell(a) for a in adv] + [score])
    md = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    md += ["| " + " | ".join(r) + " |" for r in table]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(table)
    return "\n".join(md) + "\n", buf.getvalue()


def write_report(ledger_path, out_dir):
    """Regenerate report.md and report.csv from a ledger. Reads only."""
    md, text = render(read_ledger(ledger_path))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.md").write_text(md, encoding="utf-8")
    (out / "report.csv").write_text(text, encoding="utf-8")
    return out / "report.md", out / "report.csv"
