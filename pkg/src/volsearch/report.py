"""Report serialization: plain-text tables, JSON documents, and figure files.

All output is deterministic for a given report: JSON keys are sorted,
floats use a fixed format, and figures are rendered with the Agg backend
and fixed metadata so reruns produce identical bytes.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluate import EvalReport

_PNG_METADATA = {"Software": "volsearch"}


def format_float(value: float) -> str:
    return f"{value:.6f}"


def report_text(report: EvalReport) -> str:
    """Aligned per-class table plus the confusion matrix."""
    names = report.class_names
    width = max(len(n) for n in names + ["Overall average"]) + 2
    lines = [f"Level: {report.level.value}   queries: {report.num_queries}"]
    lines.append(f"{'class':<{width}}{'recall':>10}{'precision':>12}")
    for name in names:
        lines.append(
            f"{name:<{width}}{format_float(report.recall[name]):>10}"
            f"{format_float(report.precision[name]):>12}"
        )
    lines.append(
        f"{'Overall average':<{width}}{format_float(report.overall_recall):>10}"
        f"{format_float(report.overall_precision):>12}"
    )
    lines.append("")
    lines.append("Confusion (rows true, columns predicted):")
    cw = max(max(len(n) for n in names), 6) + 2
    lines.append(" " * cw + "".join(f"{n:>{cw}}" for n in names))
    for i, name in enumerate(names):
        row = "".join(f"{int(v):>{cw}}" for v in report.confusion[i])
        lines.append(f"{name:>{cw}}" + row)
    return "\n".join(lines) + "\n"


def render_confusion_png(report: EvalReport, path: str | Path) -> None:
    names = report.class_names
    counts = report.confusion.astype(np.float64)
    rows = counts.sum(axis=1, keepdims=True)
    shaded = np.divide(counts, rows, out=np.zeros_like(counts), where=rows > 0)

    size = max(4.0, 0.6 * len(names) + 2.0)
    fig, ax = plt.subplots(figsize=(size, size * 0.9))
    ax.imshow(shaded, cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(names)), names, rotation=45, ha="right")
    ax.set_yticks(range(len(names)), names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(f"{report.level.value} confusion ({report.num_queries} queries)")
    for i in range(len(names)):
        for j in range(len(names)):
            if report.confusion[i, j]:
                color = "white" if shaded[i, j] > 0.5 else "black"
                ax.text(j, i, str(int(report.confusion[i, j])), ha="center", va="center",
                        color=color, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_METADATA)
    plt.close(fig)


def write_level_report(report: EvalReport, out_dir: str | Path, stem: str) -> dict[str, Path]:
    """Emit <stem>.txt, <stem>.json and <stem>.png into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "txt": out / f"{stem}.txt",
        "json": out / f"{stem}.json",
        "png": out / f"{stem}.png",
    }
    paths["txt"].write_text(report_text(report))
    paths["json"].write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    render_confusion_png(report, paths["png"])
    return paths


def write_matrix_tsv(
    path: str | Path,
    row_labels: Sequence[str],
    col_labels: Sequence[str],
    values: np.ndarray,
    corner: str = "dataset/index",
) -> None:
    lines = ["\t".join([corner, *col_labels])]
    for i, row in enumerate(row_labels):
        cells = [format_float(float(v)) for v in values[i]]
        lines.append("\t".join([row, *cells]))
    Path(path).write_text("\n".join(lines) + "\n")


def render_matrix_png(
    path: str | Path,
    row_labels: Sequence[str],
    col_labels: Sequence[str],
    values: np.ndarray,
    title: str,
) -> None:
    fig_w = max(5.0, 0.7 * len(col_labels) + 2.5)
    fig_h = max(3.0, 0.45 * len(row_labels) + 1.8)
    fig, ax = plt.subplots(figsize=(fig_w, fig_h))
    im = ax.imshow(values, cmap="viridis", vmin=0.0, vmax=1.0, aspect="auto")
    ax.set_xticks(range(len(col_labels)), col_labels, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(len(row_labels)), row_labels, fontsize=8)
    ax.set_title(title)
    for i in range(len(row_labels)):
        for j in range(len(col_labels)):
            shade = "white" if values[i, j] < 0.6 else "black"
            ax.text(j, i, f"{values[i, j]:.3f}", ha="center", va="center",
                    color=shade, fontsize=7)
    fig.colorbar(im, ax=ax, fraction=0.04)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_METADATA)
    plt.close(fig)


def write_summary_json(
    path: str | Path, summary: Mapping[str, tuple[float, float]]
) -> None:
    """Per-class median/max recall across configurations (numbers only)."""
    doc = {name: {"median": m, "max": x} for name, (m, x) in summary.items()}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
