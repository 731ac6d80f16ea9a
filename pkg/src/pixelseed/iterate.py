"""Alternate iteration: train a learner on the current pseudo labels, predict
the corpus densely, pool predictions into per-region class distributions, and
re-label with context-location refinement over all classes jointly.
"""
from __future__ import annotations

import subprocess
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import evalmetrics
from .catalog import ClassCatalog
from .errors import ClassStarvationError, LearnerError, ValidationError
from .featio import IGNORE, LabelMap
from .inferlabel import ScoreBlock, SimilarityField, THETA_ITERATION, infer_image
from .superpix import ContextMatrix, Descriptors, RegionSet

DEFAULT_ROUNDS = 3


@dataclass
class CorpusItem:
    """One scene's encoded artifacts plus its evolving pseudo labels."""

    name: str
    regions: RegionSet
    desc: Descriptors
    ctx: ContextMatrix
    labels: LabelMap
    gt: LabelMap | None = None


@dataclass
class IterationReport:
    round: int
    ignore_fraction: float
    precision: float = float("nan")
    recall: float = float("nan")
    miou_class: float = float("nan")
    miou_category: float = float("nan")


def aggregate_distribution(dense: LabelMap, regions: RegionSet, catalog: ClassCatalog) -> SimilarityField:
    """Per-region class distribution of a dense prediction: column j entry c
    is the fraction of region j's pixels labeled c, so columns sum to 1."""
    ids = tuple(sorted(catalog.ids()))
    index = np.full(256, -1, dtype=np.int64)
    for i, cid in enumerate(ids):
        index[cid] = i
    lab = dense.labels.ravel()
    if (index[lab] < 0).any():
        bad = sorted(set(int(v) for v in lab[index[lab] < 0]))
        raise ValidationError(f"dense labels outside catalog: {bad}")
    k, c = regions.count, len(ids)
    joint = regions.labels.ravel() * c + index[lab]
    counts = np.bincount(joint, minlength=k * c).reshape(k, c).astype(np.float64)
    dist = (counts / regions.sizes[:, None]).T
    return SimilarityField(joint=ScoreBlock(ids, dist))


class Learner:
    """Training/prediction contract; predictions are dense and never carry
    the ignore label."""

    def train(self, items: list[CorpusItem]) -> None:
        raise NotImplementedError

    def predict(self, item: CorpusItem) -> LabelMap:
        raise NotImplementedError


def region_majority_labels(labels: LabelMap, regions: RegionSet) -> np.ndarray:
    """Per-region majority pixel label, ties to the smaller label value."""
    flat = labels.labels.ravel().astype(np.int64)
    k = regions.count
    counts = np.bincount(regions.labels.ravel() * 256 + flat, minlength=k * 256).reshape(k, 256)
    return np.argmax(counts, axis=1).astype(np.int64)


class BaselineLearner(Learner):
    """Nearest-centroid stand-in for a segmentation network: one centroid per
    class over concatenated heat/color/texture descriptors, prediction by the
    product of per-part histogram intersections."""

    def __init__(self):
        self.class_ids: list[int] = []
        self.cent_heat: np.ndarray | None = None
        self.cent_color: np.ndarray | None = None
        self.cent_texture: np.ndarray | None = None

    def train(self, items: list[CorpusItem]) -> None:
        by_class: dict[int, list[np.ndarray]] = {}
        for it in items:
            region_labels = region_majority_labels(it.labels, it.regions)
            for ridx, lab in enumerate(region_labels):
                if lab == IGNORE:
                    continue
                row = np.concatenate([it.desc.heat[ridx], it.desc.color[ridx], it.desc.texture[ridx]])
                by_class.setdefault(int(lab), []).append(row)
        if not by_class:
            raise ClassStarvationError("no labeled regions to train on")
        self.class_ids = sorted(by_class)
        dims = (items[0].desc.heat.shape[1], items[0].desc.color.shape[1], items[0].desc.texture.shape[1])
        cents = []
        for cid in self.class_ids:
            mean = np.stack(by_class[cid]).mean(axis=0)
            cents.append(mean)
        cents = np.stack(cents)
        h, c, t = dims
        parts = [cents[:, :h], cents[:, h : h + c], cents[:, h + c :]]
        for p in parts:
            sums = p.sum(axis=1, keepdims=True)
            p /= np.maximum(sums, 1e-300)
        self.cent_heat, self.cent_color, self.cent_texture = parts

    def predict(self, item: CorpusItem) -> LabelMap:
        if self.cent_heat is None:
            raise LearnerError("predict before train")
        sims = (
            np.minimum(self.cent_heat[:, None, :], item.desc.heat[None, :, :]).sum(axis=2)
            * np.minimum(self.cent_color[:, None, :], item.desc.color[None, :, :]).sum(axis=2)
            * np.minimum(self.cent_texture[:, None, :], item.desc.texture[None, :, :]).sum(axis=2)
        )
        winner = np.argmax(sims, axis=0)  # first max: smaller class id wins ties
        region_label = np.asarray(self.class_ids, dtype=np.int64)[winner]
        return LabelMap(region_label.astype(np.uint8)[item.regions.labels])


class ExternalLearner(Learner):
    """Out-of-process learner driven through the corpus directory layout.

    Training for round r exposes the incoming labels under
    labels_round_<r-1>/<name>.pgm, then runs the command with PIXELSEED_ROOT
    and PIXELSEED_ROUND=r set; the command must leave dense predictions in
    pred_round_<r>/<name>.pgm."""

    def __init__(self, command: str, root: str):
        self.command = command
        self.root = root
        self.round = 0

    def train(self, items: list[CorpusItem]) -> None:
        from . import featio
        import os

        lab_dir = os.path.join(self.root, f"labels_round_{self.round}")
        os.makedirs(lab_dir, exist_ok=True)
        for it in items:
            featio.write_labelmap(it.labels, os.path.join(lab_dir, f"{it.name}.pgm"))
        self.round += 1
        env = dict(os.environ, PIXELSEED_ROOT=self.root, PIXELSEED_ROUND=str(self.round))
        proc = subprocess.run(self.command, shell=True, env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            raise LearnerError(f"external learner failed ({proc.returncode}): {proc.stderr.strip()}")

    def predict(self, item: CorpusItem) -> LabelMap:
        from . import featio
        import os

        path = os.path.join(self.root, f"pred_round_{self.round}", f"{item.name}.pgm")
        pred = featio.read_labelmap(path)
        if (pred.labels == IGNORE).any():
            raise LearnerError(f"{path}: prediction contains ignore labels")
        return pred


def corpus_report(items: list[CorpusItem], catalog: ClassCatalog, round_idx: int) -> IterationReport:
    total = sum(it.labels.labels.size for it in items)
    ignored = sum(int((it.labels.labels == IGNORE).sum()) for it in items)
    rep = IterationReport(round_idx, ignored / total if total else float("nan"))
    scored = [it for it in items if it.gt is not None]
    if scored:
        cm = None
        for it in scored:
            c = evalmetrics.confusion(it.labels, it.gt, catalog)
            cm = c if cm is None else cm + c
        rep.miou_class = evalmetrics.miou(cm, catalog, "class")[0]
        rep.miou_category = evalmetrics.miou(cm, catalog, "category")[0]
        joint_pred = LabelMap(np.concatenate([it.labels.labels.ravel() for it in scored])[None, :])
        joint_gt = LabelMap(np.concatenate([it.gt.labels.ravel() for it in scored])[None, :])
        rep.precision, rep.recall = evalmetrics.macro_pr(joint_pred, joint_gt, catalog)
    return rep


def run_iterations(
    items: list[CorpusItem],
    catalog: ClassCatalog,
    learner: Learner,
    rounds: int = DEFAULT_ROUNDS,
    theta_iter: float = THETA_ITERATION,
    use_clr: bool = True,
    use_location: bool = True,
    on_round=None,
) -> tuple[list[IterationReport], Learner]:
    """Run the train/predict/aggregate/relabel loop.

    With use_clr off, aggregated predictions are converted to labels by plain
    thresholded argmax (no context propagation, no location masking). Reports
    start with round 0 describing the incoming labels. on_round, when given,
    is called as on_round(round_idx, items, predictions) after each relabel.
    """
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    reports = [corpus_report(items, catalog, 0)]
    for r in range(1, rounds + 1):
        try:
            learner.train(items)
            preds = [learner.predict(it) for it in items]
        except (ClassStarvationError, LearnerError):
            raise
        except Exception as e:
            raise LearnerError(f"round {r}: {e}") from e
        for it, pred in zip(items, preds):
            joint = aggregate_distribution(pred, it.regions, catalog)
            it.labels = infer_image(
                it.regions,
                it.desc,
                it.ctx,
                registry=None,
                catalog=catalog,
                mode="iteration",
                theta=theta_iter,
                joint_field=joint,
                use_context=use_clr,
                use_location=use_clr and use_location,
            )
        reports.append(corpus_report(items, catalog, r))
        if on_round is not None:
            on_round(r, items, preds)
    return reports, learner
