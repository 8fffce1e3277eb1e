"""Report emission: comparison tables plus rendered heatmap figures.

The report stage collects the evaluation documents in a run directory
and emits the win-rate comparison (condition x before/after) and the
frequency summaries in three forms: a plain-text table, delimited
records, and JSON, with one rendered heatmap figure per evaluated
condition.
"""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .evaluation import EvalReport

PHASES = ("before", "after")
REPORT_DOC_VERSION = 1


def render_heatmap(matrix: np.ndarray, path: str | Path,
                   title: str = "") -> None:
    """Render the communication-frequency matrix; diagonal cells stay white."""
    matrix = np.asarray(matrix, dtype=np.float64)
    shown = matrix.copy()
    np.fill_diagonal(shown, np.nan)
    cmap = plt.get_cmap("Blues").copy()
    cmap.set_bad("white")
    fig, ax = plt.subplots(figsize=(4, 3.2))
    im = ax.imshow(shown, cmap=cmap)
    ax.set_xlabel("agent")
    ax.set_ylabel("agent")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label="deliveries / episode")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def collect_reports(out_dir: Path) -> dict[str, dict[str, EvalReport]]:
    """Reports indexed by phase then condition, from eval_<phase>_<cond>.json."""
    found: dict[str, dict[str, EvalReport]] = {p: {} for p in PHASES}
    for path in sorted(out_dir.glob("eval_*.json")):
        stem = path.stem[len("eval_"):]
        phase, _, condition = stem.partition("_")
        if phase in PHASES and condition:
            found[phase][condition] = EvalReport.load(path)
    return found


def build_report(out_dir: str | Path, render_figures: bool = True) -> dict:
    """Emit report.{json,csv,txt} and per-condition heatmap figures.

    Missing phase/condition combinations are reported as explicit gaps
    rather than errors, so a partial pipeline still yields a valid
    skeleton.
    """
    out_dir = Path(out_dir)
    reports = collect_reports(out_dir)
    conditions = sorted({c for per in reports.values() for c in per})

    rows = []
    for condition in conditions:
        row: dict[str, object] = {"condition": condition}
        for phase in PHASES:
            rep = reports[phase].get(condition)
            row[f"win_rate_{phase}"] = None if rep is None else rep.win_rate
            row[f"frequency_sd_{phase}"] = (None if rep is None
                                            else rep.summary.sd)
            row[f"frequency_avg_{phase}"] = (None if rep is None
                                             else rep.summary.average)
        rows.append(row)
    doc = {"version": REPORT_DOC_VERSION, "rows": rows,
           "gaps": [
               f"{phase}/{condition}"
               for condition in conditions for phase in PHASES
               if reports[phase].get(condition) is None
           ]}
    (out_dir / "report.json").write_text(json.dumps(doc, indent=2))

    cols = ["condition", "win_rate_before", "win_rate_after",
            "frequency_sd_before", "frequency_sd_after",
            "frequency_avg_before", "frequency_avg_after"]
    csv_lines = [",".join(cols)]
    for row in rows:
        csv_lines.append(",".join(
            "" if row[c] is None else (row[c] if c == "condition"
                                       else repr(row[c]))
            for c in cols))
    (out_dir / "report.csv").write_text("\n".join(csv_lines) + "\n")

    txt = ["Win rate and communication-frequency comparison", ""]
    header = (f"{'condition':<18}{'win before':>12}{'win after':>12}"
              f"{'SD before':>12}{'SD after':>12}")
    txt.append(header)
    txt.append("-" * len(header))
    for row in rows:
        def cell(key):
            return "-" if row[key] is None else repr(row[key])
        txt.append(f"{row['condition']:<18}{cell('win_rate_before'):>12}"
                   f"{cell('win_rate_after'):>12}"
                   f"{cell('frequency_sd_before'):>12}"
                   f"{cell('frequency_sd_after'):>12}")
    if doc["gaps"]:
        txt += ["", "missing conditions: " + ", ".join(doc["gaps"])]
    (out_dir / "report.txt").write_text("\n".join(txt) + "\n")

    if render_figures:
        for phase in PHASES:
            for condition, rep in reports[phase].items():
                render_heatmap(rep.matrix,
                               out_dir / f"heatmap_{phase}_{condition}.png",
                               title=f"{condition} ({phase})")
    return doc
