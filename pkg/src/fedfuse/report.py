"""Render an :class:`EvaluationReport` as Markdown tables, JSON and figures.

``summary.md`` lists the best row of each approach per test dataset,
ordered by Macro F1. ``grid.md`` holds the full grid: one block per
finetuning dataset (fused+FT rows followed by that dataset's non-fused
baseline), then blocks for fusion without finetuning and for the ensemble.
In every block the best fused score of each column is bold; a non-fused
baseline evaluated on its own dataset is underlined.
"""

from __future__ import annotations

import math
from pathlib import Path

from .evaluation import APPROACHES, EvaluationReport, format_score
from .plotting import best_per_approach_bars, score_heatmap

SUBSET_NOTE = (
    "Fusion jobs cover every subset of two or more clients: 2^n - n - 1 jobs for n clients, "
    "i.e. 11 for four clients (6 pairs, 4 triples, 1 quadruple). The original account of this "
    "experiment counts seven combinations for four clients; the full enumeration is used here."
)
STD_NOTE = "± is the population standard deviation (divide by n) over runs."


def _models(models) -> str:
    return " + ".join(models)


def summary_rows(report: EvaluationReport) -> dict:
    """dataset -> [(approach, mean, std, key)] best per approach, best first."""
    out = {}
    for test in report.datasets:
        best = {}
        for key, row in report.sorted_rows():
            if key.test != test:
                continue
            current = best.get(key.approach)
            if current is None or row.mean > current[1]:
                best[key.approach] = (key.approach, row.mean, row.std, key)
        out[test] = sorted(best.values(), key=lambda r: (-r[1], APPROACHES.index(r[0])))
    return out


def render_summary(report: EvaluationReport) -> str:
    lines = [
        "# Best result per approach",
        "",
        "| Dataset | Approach | Models | Finetuned on | Macro F1 |",
        "|---|---|---|---|---|",
    ]
    for test, rows in summary_rows(report).items():
        for approach, mean, std, key in rows:
            lines.append(f"| {test} | {approach} | {_models(key.models)} | {key.finetune or '-'} "
                         f"| {format_score(mean, std)} |")
    lines += ["", *_footer(report)]
    return "\n".join(lines) + "\n"


def _footer(report: EvaluationReport) -> list[str]:
    lines = [f"Runs: {report.runs}. {STD_NOTE}", "", SUBSET_NOTE]
    for note in report.notes:
        lines += ["", note]
    return lines


def _block(title, rows, tests, underline_self=False):
    """rows: [(label, {test: RowResult}, is_fused, self_test)]"""
    best = {}
    for _, cells, fused, _ in rows:
        if not fused:
            continue
        for t, r in cells.items():
            best[t] = max(best.get(t, -math.inf), r.mean)
    out = [f"### {title}", "", "| Models | " + " | ".join(tests) + " |",
           "|---|" + "---|" * len(tests)]
    for label, cells, fused, self_test in rows:
        rendered = []
        for t in tests:
            r = cells.get(t)
            if r is None:
                rendered.append("-")
                continue
            s = format_score(r.mean, r.std)
            if fused and r.mean == best.get(t):
                s = f"**{s}**"
            elif underline_self and t == self_test:
                s = f"<u>{s}</u>"
            rendered.append(s)
        out.append(f"| {label} | " + " | ".join(rendered) + " |")
    return out + [""]


def grid_blocks(report: EvaluationReport) -> list[tuple[str, list]]:
    by = {}
    for key, row in report.sorted_rows():
        by.setdefault((key.approach, key.models, key.finetune), {})[key.test] = row
    blocks = []
    for ft in report.datasets:
        rows = [(_models(models), cells, True, None)
                for (a, models, f), cells in by.items() if a == "fused+FT" and f == ft]
        base = by.get(("non-fused", (ft,), None))
        if base:
            rows.append((f"Non-fused baseline ({ft})", base, False, ft))
        if rows:
            blocks.append((f"Finetuned on {ft}", rows))
    for approach, title, fused in (("fused", "Fusion without finetuning", True), ("ensemble", "Ensemble", False)):
        rows = [(_models(models), cells, fused, None) for (a, models, f), cells in by.items() if a == approach]
        if rows:
            blocks.append((title, rows))
    return blocks


def render_grid(report: EvaluationReport) -> str:
    tests = list(report.datasets)
    lines = ["# Macro F1 grid", ""]
    if not tests:
        lines += ["| Models |", "|---|", ""]
    for title, rows in grid_blocks(report):
        lines += _block(title, rows, tests, underline_self=True)
    lines += _footer(report)
    return "\n".join(lines) + "\n"


def render_figures(report: EvaluationReport, fig_dir) -> list[Path]:
    fig_dir = Path(fig_dir)
    paths = []
    summary = {t: [(a, m, s) for a, m, s, _ in rows] for t, rows in summary_rows(report).items()}
    if any(summary.values()):
        paths.append(best_per_approach_bars(summary, fig_dir / "best_per_approach.png"))
    tests = list(report.datasets)
    for title, rows in grid_blocks(report):
        values = [[cells[t].mean if t in cells else float("nan") for t in tests] for _, cells, _, _ in rows]
        slug = title.lower().replace(" ", "_")
        paths.append(score_heatmap([r[0] for r in rows], tests, values, fig_dir / f"grid_{slug}.png", title))
    return paths


def render_report(report: EvaluationReport, out_dir, figures: bool = True) -> dict[str, Path]:
    """Write summary.md, grid.md, results.json (and figures/) into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {
        "summary": out_dir / "summary.md",
        "grid": out_dir / "grid.md",
        "results": out_dir / "results.json",
    }
    written["summary"].write_text(render_summary(report), encoding="utf-8")
    written["grid"].write_text(render_grid(report), encoding="utf-8")
    report.write(written["results"])
    if figures:
        for p in render_figures(report, out_dir / "figures"):
            written[p.stem] = p
    return written
