"""Fuse 15 overlapping per-slice heat maps into one full-resolution semantic map."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoverageError, DimError
from .featio import FeatureMap, SlicePlan


@dataclass
class SliceHeatSet:
    plan: SlicePlan
    maps: list[FeatureMap]  # one per slice, at slice resolution

    def __post_init__(self):
        if len(self.maps) != len(self.plan.slices):
            raise DimError(f"expected {len(self.plan.slices)} slice maps, got {len(self.maps)}")
        for s, m in zip(self.plan.slices, self.maps):
            if (m.height, m.width) != (s.height, s.width):
                raise DimError(
                    f"slice {s.index}: map is {m.height}x{m.width}, plan says {s.height}x{s.width}"
                )


def assignment_map(plan: SlicePlan, dims: tuple[int, int] | None = None) -> np.ndarray:
    """Per-pixel index of the nearest slice center among slices containing the
    pixel; ties broken by the smaller slice index."""
    rows, cols = dims if dims is not None else (plan.rows, plan.cols)
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    dist = np.full((len(plan.slices), rows, cols), np.inf)
    for s in plan.slices:
        cr, ccen = s.center
        d = (rr - cr) ** 2 + (cc - ccen) ** 2
        inside = (
            (rr >= s.row) & (rr < s.row + s.height) & (cc >= s.col) & (cc < s.col + s.width)
        )
        dist[s.index] = np.where(inside, d, np.inf)
    # argmin returns the first minimum, which is the smallest slice index
    assign = np.argmin(dist, axis=0)
    if not np.isfinite(dist[assign, rr, cc]).all():
        raise CoverageError("a pixel is contained in no slice of the plan")
    return assign.astype(np.int32)


def fuse(slices: SliceHeatSet) -> FeatureMap:
    """Each pixel copies the response vector from the same absolute position
    inside its nearest containing slice."""
    plan = slices.plan
    rows, cols = plan.rows, plan.cols
    channels = slices.maps[0].channels
    for m in slices.maps:
        if m.channels != channels:
            raise DimError("slice maps disagree on channel count")
    assign = assignment_map(plan)
    out = np.empty((rows, cols, channels), dtype=np.float32)
    for s in plan.slices:
        mask = assign == s.index
        if not mask.any():
            continue
        rr, cc = np.nonzero(mask)
        out[rr, cc] = slices.maps[s.index].data[rr - s.row, cc - s.col]
    return FeatureMap(out)
