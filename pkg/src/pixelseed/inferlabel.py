"""Per-image pseudo-label inference.

Scores every region against the class registry, propagates the scores
through the column-normalized context matrix, masks classes by the region's
horizontal band, thresholds low scores into the ignore label, and fuses the
object and scene decisions (objects win). Iteration mode runs one joint field
over all classes with no fusion step.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .catalog import ClassCatalog, N_BANDS
from .errors import DimError, ShapeError
from .featio import IGNORE, LabelMap
from .represent import Registry
from .superpix import ContextMatrix, Descriptors, RegionSet, intersect_matrix

THETA_INITIAL = 0.05
THETA_ITERATION = 0.5


@dataclass
class ScoreBlock:
    """Scores for one class family: row i holds class ids[i] over K regions.
    allowed, when present, marks which classes survive the location prior;
    it masks selection only and never edits the scores themselves."""

    ids: tuple[int, ...]
    scores: np.ndarray  # (C, K)
    allowed: np.ndarray | None = None  # bool (C, K)

    def __post_init__(self):
        self.scores = np.atleast_2d(np.asarray(self.scores, dtype=np.float64))
        if len(self.ids) != self.scores.shape[0]:
            raise ShapeError(f"{len(self.ids)} ids vs {self.scores.shape[0]} score rows")


@dataclass
class SimilarityField:
    """Either separate object and scene blocks, or one joint block."""

    obj: ScoreBlock | None = None
    sce: ScoreBlock | None = None
    joint: ScoreBlock | None = None

    def __post_init__(self):
        if (self.joint is None) == (self.obj is None or self.sce is None):
            raise ShapeError("field needs either obj+sce blocks or a joint block")

    def blocks(self) -> list[ScoreBlock]:
        return [b for b in (self.obj, self.sce, self.joint) if b is not None]


def score_regions(desc: Descriptors, registry: Registry, catalog: ClassCatalog) -> SimilarityField:
    """Initial-mode field: objects scored by heat intersection, scenes by the
    best color-times-texture product over the class pool."""
    obj_ids = tuple(sorted(registry.objects))
    sce_ids = tuple(sorted(registry.scenes))
    k = desc.heat.shape[0]

    if obj_ids:
        vecs = np.stack([registry.objects[c].vector for c in obj_ids])
        if vecs.shape[1] != desc.heat.shape[1]:
            raise DimError(f"object vectors {vecs.shape[1]}-d vs heat {desc.heat.shape[1]}-d")
        m_obj = intersect_matrix(vecs, desc.heat)
    else:
        m_obj = np.zeros((0, k))

    cdim, tdim = desc.color.shape[1], desc.texture.shape[1]
    m_sce = np.zeros((len(sce_ids), k))
    for i, cid in enumerate(sce_ids):
        rep = registry.scenes[cid]
        if rep.color_dim != cdim or rep.texture_dim != tdim:
            raise DimError(
                f"scene pool parts {rep.color_dim}+{rep.texture_dim} vs descriptors {cdim}+{tdim}"
            )
        sim_c = intersect_matrix(rep.pool[:, :cdim], desc.color)
        sim_t = intersect_matrix(rep.pool[:, cdim:], desc.texture)
        m_sce[i] = (sim_c * sim_t).max(axis=0)
    return SimilarityField(obj=ScoreBlock(obj_ids, m_obj), sce=ScoreBlock(sce_ids, m_sce))


def _refine_block(block: ScoreBlock, weights: np.ndarray) -> ScoreBlock:
    if block.scores.shape[1] != weights.shape[0]:
        raise ShapeError(f"field has {block.scores.shape[1]} regions, context {weights.shape[0]}")
    return ScoreBlock(block.ids, block.scores @ weights, block.allowed)


def refine(field: SimilarityField, ctx: ContextMatrix) -> SimilarityField:
    """Propagate scores through the column-normalized context matrix; object
    and scene blocks are refined independently."""
    sim = ctx.sim
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise ShapeError(f"context matrix must be square, got {sim.shape}")
    weights = sim / sim.sum(axis=0, keepdims=True)
    return SimilarityField(
        obj=_refine_block(field.obj, weights) if field.obj else None,
        sce=_refine_block(field.sce, weights) if field.sce else None,
        joint=_refine_block(field.joint, weights) if field.joint else None,
    )


def region_bands(regions: RegionSet, height: int | None = None) -> np.ndarray:
    h = height if height is not None else regions.shape[0]
    bands = (N_BANDS * regions.centroids[:, 0] / h).astype(np.int64)
    return np.clip(bands, 0, N_BANDS - 1)


def apply_location_prior(field: SimilarityField, regions: RegionSet, catalog: ClassCatalog) -> SimilarityField:
    """Attach per-class allowed masks derived from each region's band."""
    bands = region_bands(regions)

    def mask(block: ScoreBlock | None) -> ScoreBlock | None:
        if block is None:
            return None
        allowed = np.zeros((len(block.ids), len(bands)), dtype=bool)
        for i, cid in enumerate(block.ids):
            ok = np.array(sorted(catalog.by_id(cid).allowed_bands), dtype=np.int64)
            allowed[i] = np.isin(bands, ok)
        return replace(block, allowed=allowed)

    return SimilarityField(obj=mask(field.obj), sce=mask(field.sce), joint=mask(field.joint))


def _select(block: ScoreBlock, theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-region (class id, score); ignore label where the allowed maximum
    falls below theta. Argmax ties go to the smallest class id because rows
    are ordered by ascending id and argmax keeps the first winner."""
    c, k = block.scores.shape
    if c == 0:
        return np.full(k, IGNORE, dtype=np.int64), np.zeros(k)
    masked = block.scores.copy()
    if block.allowed is not None:
        masked[~block.allowed] = -np.inf
    idx = np.argmax(masked, axis=0)
    best = masked[idx, np.arange(k)]
    ids = np.asarray(block.ids, dtype=np.int64)[idx]
    labels = np.where(np.isfinite(best) & (best >= theta), ids, IGNORE)
    scores = np.where(np.isfinite(best), best, 0.0)
    return labels, scores


def select_and_fuse(field: SimilarityField, regions: RegionSet, theta: float) -> LabelMap:
    """Resolve per-region labels and broadcast them to pixels. With separate
    blocks the object decision wins wherever it is not the ignore label."""
    if field.joint is not None:
        labels, scores = _select(field.joint, theta)
    else:
        lab_o, sco_o = _select(field.obj, theta)
        lab_s, sco_s = _select(field.sce, theta)
        take_obj = lab_o != IGNORE
        labels = np.where(take_obj, lab_o, lab_s)
        scores = np.where(take_obj, sco_o, sco_s)
    px_labels = labels.astype(np.uint8)[regions.labels]
    px_scores = scores.astype(np.float32)[regions.labels]
    return LabelMap(px_labels, px_scores)


def infer_image(
    regions: RegionSet,
    desc: Descriptors,
    ctx: ContextMatrix,
    registry: Registry | None,
    catalog: ClassCatalog,
    mode: str = "initial",
    theta: float | None = None,
    joint_field: SimilarityField | None = None,
    use_context: bool = True,
    use_location: bool = True,
) -> LabelMap:
    """Full per-image labeling: score (or take the supplied joint field),
    refine, mask, select."""
    if mode == "initial":
        if registry is None:
            raise ShapeError("initial mode needs a registry")
        field = score_regions(desc, registry, catalog)
        th = THETA_INITIAL if theta is None else theta
    elif mode == "iteration":
        if joint_field is None or joint_field.joint is None:
            raise ShapeError("iteration mode needs a joint field")
        field = joint_field
        th = THETA_ITERATION if theta is None else theta
    else:
        raise ShapeError(f"unknown mode {mode!r}")
    if use_context:
        field = refine(field, ctx)
    if use_location:
        field = apply_location_prior(field, regions, catalog)
    return select_and_fuse(field, regions, th)
