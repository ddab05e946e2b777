"""Markdown rendering of one or more sweep output directories."""
import csv
import json
from pathlib import Path

from .errors import MissingReport

COLUMNS = ("Reduction (%)", "Freq. (Hz), Input Shape", "Accuracy", "FLASH (KB)", "RAM (KB)",
           "MACs (K)", "Latency (ms)", "Energy (uJ)")
SUMMARY_COLUMNS = ("Dataset", "RRR (%)", "MR (%)", "LR (%)", "ERR (%)", "AR (%)", "DR (%)")


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def load_sweep(path):
    d = Path(path)
    rep = d / "report.csv"
    if not rep.is_file():
        raise MissingReport(f"{rep} not found")
    name = d.name
    lock = d / "manifest.lock.json"
    if lock.is_file():
        name = json.loads(lock.read_text(encoding="utf-8"))["manifest"]["name"]
    summ = d / "summary.csv"
    return name, _read_csv(rep), _read_csv(summ) if summ.is_file() else []


def _table(header, rows):
    out = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    out += ["| " + " | ".join(str(c) for c in r) + " |" for r in rows]
    return out


def report_render(report_paths, summary_reduction=None) -> str:
    """One table per sweep plus a combined percent-reduction table.

    The summary row of each dataset is the one at ``summary_reduction``, or
    the largest reduction present when not given.
    """
    if not report_paths:
        raise MissingReport("no sweep reports given")
    lines = []
    summary = []
    for p in report_paths:
        name, rows, srows = load_sweep(p)
        lines.append(f"## {name}")
        lines.append("")
        body = [[r["reduction_pct"], f"{r['freq_hz']}, ({r['input_len']} x {r['channels']})",
                 r["accuracy"], r["flash_kb"], r["ram_kb"], r["macs_k"], r["latency_ms"],
                 r["energy_uj"]] for r in rows]
        lines += _table(COLUMNS, body)
        lines.append("")
        if srows:
            pick = None
            if summary_reduction is not None:
                pick = next((s for s in srows if int(s["dr"]) == summary_reduction), None)
            if pick is None:
                pick = max(srows, key=lambda s: int(s["dr"]))
            summary.append([name] + [pick[k] for k in ("rrr", "mr", "lr", "err", "ar", "dr")])
    lines.append("## Summary")
    lines.append("")
    lines += _table(SUMMARY_COLUMNS, summary)
    return "\n".join(lines) + "\n"
