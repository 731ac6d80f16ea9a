"""Evaluation of label maps against ground truth.

Confusion counts skip pixels where either map carries the ignore label.
Macro precision/recall instead treat a predicted ignore as abstention: it
never costs precision but always costs recall.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalog import ClassCatalog
from .errors import DimError
from .featio import IGNORE, LabelMap


@dataclass
class ConfusionMatrix:
    """Counts with rows = ground truth, columns = prediction."""

    ids: tuple[int, ...]
    counts: np.ndarray  # (C, C) int64
    ignored: int

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.ids != other.ids:
            raise DimError("confusion matrices cover different classes")
        return ConfusionMatrix(self.ids, self.counts + other.counts, self.ignored + other.ignored)


def confusion(pred: LabelMap, gt: LabelMap, catalog: ClassCatalog) -> ConfusionMatrix:
    if pred.labels.shape != gt.labels.shape:
        raise DimError(f"prediction {pred.labels.shape} vs ground truth {gt.labels.shape}")
    pred.validate(catalog)
    gt.validate(catalog)
    ids = tuple(sorted(catalog.ids()))
    index = np.full(256, -1, dtype=np.int64)
    for i, cid in enumerate(ids):
        index[cid] = i
    p, g = pred.labels.ravel(), gt.labels.ravel()
    keep = (p != IGNORE) & (g != IGNORE)
    c = len(ids)
    joint = index[g[keep]] * c + index[p[keep]]
    counts = np.bincount(joint, minlength=c * c).reshape(c, c)
    return ConfusionMatrix(ids, counts.astype(np.int64), int((~keep).sum()))


def _iou_table(ids, counts) -> dict:
    tp = np.diag(counts).astype(np.float64)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    present = (counts.sum(axis=0) + counts.sum(axis=1)) > 0
    out = {}
    for i, key in enumerate(ids):
        if present[i]:
            out[key] = tp[i] / (tp[i] + fp[i] + fn[i])
    return out


def miou(cm: ConfusionMatrix, catalog: ClassCatalog, grouping: str = "class") -> tuple[float, dict]:
    """Mean IoU plus the per-entry table. Category mode collapses the counts
    by the catalog's category map first. Entries absent from both ground truth
    and prediction are left out of the mean."""
    if grouping == "class":
        table = _iou_table(cm.ids, cm.counts)
    elif grouping == "category":
        cat_map = catalog.category_map()
        cats = catalog.categories()
        n = len(cats)
        fold = np.zeros((n, n), dtype=np.int64)
        for i, gi in enumerate(cm.ids):
            for j, gj in enumerate(cm.ids):
                fold[cat_map[gi], cat_map[gj]] += cm.counts[i, j]
        table = _iou_table(tuple(cats), fold)
    else:
        raise ValueError(f"grouping must be class or category, got {grouping!r}")
    if not table:
        return float("nan"), table
    return float(np.mean(list(table.values()))), table


def _pr_counts(pred: LabelMap, gt: LabelMap, catalog: ClassCatalog):
    if pred.labels.shape != gt.labels.shape:
        raise DimError(f"prediction {pred.labels.shape} vs ground truth {gt.labels.shape}")
    p, g = pred.labels.ravel(), gt.labels.ravel()
    valid = g != IGNORE
    p, g = p[valid], g[valid]
    rows = {}
    for cid in sorted(catalog.ids()):
        in_gt = g == cid
        if not in_gt.any():
            continue
        tp = int((in_gt & (p == cid)).sum())
        fp = int((~in_gt & (p == cid)).sum())
        fn = int(in_gt.sum()) - tp  # predicted-ignore pixels land here
        rows[cid] = (tp, fp, fn)
    return rows


def per_class_pr(pred: LabelMap, gt: LabelMap, catalog: ClassCatalog) -> dict[int, tuple[float, float]]:
    """Per GT-present class: (precision or NaN when never predicted, recall)."""
    out = {}
    for cid, (tp, fp, fn) in _pr_counts(pred, gt, catalog).items():
        prec = tp / (tp + fp) if tp + fp > 0 else float("nan")
        out[cid] = (prec, tp / (tp + fn))
    return out


def macro_pr(pred: LabelMap, gt: LabelMap, catalog: ClassCatalog) -> tuple[float, float]:
    """Macro precision and recall over classes present in the ground truth.
    Classes the prediction never emits are excluded from precision; if none
    remain, precision is NaN."""
    table = per_class_pr(pred, gt, catalog)
    if not table:
        return float("nan"), float("nan")
    precisions = [p for p, _ in table.values() if not np.isnan(p)]
    recalls = [r for _, r in table.values()]
    prec = float(np.mean(precisions)) if precisions else float("nan")
    return prec, float(np.mean(recalls))
