"""Per-class recall/precision and confusion matrices at each label level.

A query counts as a true positive when its label and the retrieved
volume's label agree at the requested level. Per-class recall is the
diagonal over the row sum, precision the diagonal over the column sum;
classes with a zero denominator score 0 and are excluded from the macro
"overall average".
"""
from __future__ import annotations

import statistics
from dataclasses import dataclass
from enum import IntEnum
from typing import Mapping, Sequence

import numpy as np

from .model import Dataset, Level


@dataclass
class EvalReport:
    level: Level
    class_names: list[str]
    confusion: np.ndarray  # (n_classes, n_classes) int64, rows true, columns predicted
    recall: dict[str, float]
    precision: dict[str, float]
    overall_recall: float
    overall_precision: float

    @property
    def num_queries(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        return {
            "level": self.level.value,
            "classes": self.class_names,
            "confusion": self.confusion.tolist(),
            "recall": self.recall,
            "precision": self.precision,
            "overall_average_recall": self.overall_recall,
            "overall_average_precision": self.overall_precision,
            "num_queries": self.num_queries,
        }


def _report_from_labels(
    true_labels: Sequence[IntEnum], pred_labels: Sequence[IntEnum], level: Level
) -> EvalReport:
    classes = level.classes()
    k = len(classes)
    confusion = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(true_labels, pred_labels):
        confusion[int(t), int(p)] += 1

    row = confusion.sum(axis=1)
    col = confusion.sum(axis=0)
    diag = np.diag(confusion)
    recall = {c.label: (diag[int(c)] / row[int(c)] if row[int(c)] else 0.0) for c in classes}
    precision = {c.label: (diag[int(c)] / col[int(c)] if col[int(c)] else 0.0) for c in classes}
    present_r = [recall[c.label] for c in classes if row[int(c)]]
    present_p = [precision[c.label] for c in classes if col[int(c)]]
    return EvalReport(
        level=level,
        class_names=[c.label for c in classes],
        confusion=confusion,
        recall={c: float(v) for c, v in recall.items()},
        precision={c: float(v) for c, v in precision.items()},
        overall_recall=float(np.mean(present_r)) if present_r else 0.0,
        overall_precision=float(np.mean(present_p)) if present_p else 0.0,
    )


def evaluate(
    predictions: Sequence[tuple[str, str]],
    db: Dataset,
    queries: Dataset,
    level: Level,
) -> EvalReport:
    """Score (query_volume_id, predicted_volume_id) pairs at one level."""
    if not predictions:
        raise ValueError("cannot evaluate an empty prediction list")
    true_labels = [queries.volume(qid).label(level) for qid, _ in predictions]
    pred_labels = [db.volume(pid).label(level) for _, pid in predictions]
    return _report_from_labels(true_labels, pred_labels, level)


def evaluate_slicewise(
    per_slice_predictions: Sequence[IntEnum],
    per_slice_truths: Sequence[IntEnum],
    level: Level,
) -> EvalReport:
    """Same formulas over individual slices instead of volumes."""
    if len(per_slice_predictions) != len(per_slice_truths):
        raise ValueError(
            f"prediction/truth length mismatch: "
            f"{len(per_slice_predictions)} vs {len(per_slice_truths)}"
        )
    if not per_slice_predictions:
        raise ValueError("cannot evaluate an empty prediction list")
    return _report_from_labels(per_slice_truths, per_slice_predictions, level)


def summarize_across_configs(
    reports: Mapping[str, EvalReport],
) -> dict[str, tuple[float, float]]:
    """Per-class (median, max) recall across configurations sharing a level."""
    if not reports:
        raise ValueError("cannot summarize an empty report mapping")
    levels = {r.level for r in reports.values()}
    if len(levels) != 1:
        raise ValueError(f"reports mix levels: {sorted(l.value for l in levels)}")
    class_names = next(iter(reports.values())).class_names
    out: dict[str, tuple[float, float]] = {}
    for name in class_names:
        values = [r.recall[name] for r in reports.values()]
        out[name] = (float(statistics.median(values)), float(max(values)))
    return out
