"""Report rendering: aligned text tables, delimited files, and figures.

Every CLI report path writes three artifacts side by side: a structured
JSON file, a tab-delimited table, and a PNG figure, so results can be
read by humans, spreadsheets, and plots alike.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")  # headless rendering only; no display required

import matplotlib.pyplot as plt


def aligned_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Monospace table with left-aligned, padded columns."""
    table = [list(headers)] + [[str(c) for c in row] for row in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(headers))]
    lines = []
    for idx, row in enumerate(table):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def write_delimited(path: str | Path, headers: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(headers) + "\n")
        for row in rows:
            fh.write("\t".join(str(c) for c in row) + "\n")


def write_json(path: str | Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def render_score_figure(score_report, path: str | Path) -> None:
    """Bar chart of EM/F1, overall and per hop bucket."""
    labels = ["overall"]
    em_values = [score_report.em]
    f1_values = [score_report.f1]
    for hops, bucket in sorted(score_report.by_hops.items()):
        labels.append(f"{hops}-hop")
        em_values.append(bucket["em"])
        f1_values.append(bucket["f1"])

    x = range(len(labels))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(4.0, 1.4 * len(labels)), 3.2))
    ax.bar([i - width / 2 for i in x], em_values, width, label="EM")
    ax.bar([i + width / 2 for i in x], f1_values, width, label="F1")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_cost_figure(sweep_rows: Sequence[dict], path: str | Path) -> None:
    """Input-token totals versus sub-query count for each pipeline."""
    xs = [row["sub_queries"] for row in sweep_rows]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for pipeline in ("ragdag", "ircot", "rqrag"):
        ax.plot(xs, [float(row[f"{pipeline}_in"]) for row in sweep_rows],
                marker="o", label=pipeline)
    ax.set_xlabel("sub-queries")
    ax.set_ylabel("input tokens")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_telemetry_figure(aggregates: dict, path: str | Path) -> None:
    """Batch telemetry snapshot: passages per query and retrieval savings."""
    fig, ax = plt.subplots(figsize=(4.6, 3.2))
    keys = ["mean_sub_queries", "mean_passages_per_query"]
    ax.bar(range(len(keys)), [aggregates.get(k, 0.0) for k in keys])
    ax.set_xticks(range(len(keys)))
    ax.set_xticklabels(["sub-queries / item", "passages / item"])
    saved = aggregates.get("saved_retrieval_fraction", 0.0)
    ax.set_title(f"retrieval saved: {saved:.1%}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
