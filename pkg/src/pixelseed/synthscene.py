"""Deterministic synthetic driving-scene generator.

Scenes are horizontal bands of scene classes with object blobs layered on
top. Every map is a pure function of the SceneSpec, so identical specs give
bit-identical rasters. Object classes get a peaked per-channel signature in
the heat maps; scene classes share a flat background response, which is what
makes them unrecoverable from heat alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mosf, represent
from .catalog import ClassCatalog, ClassDef, validate_catalog
from .errors import SpecError
from .featio import FeatureMap, LabelMap, SlicePlan, make_slice_plan

# Heat amplitudes sit far above the unit noise scale so that, after L1
# normalization, additive noise contributes only a few percent of any region's
# mass; object signatures must dominate their own blob's noise or the fitted
# representations leak onto scene regions.
SIGNATURE = (80.0, 40.0, 20.0)  # per-object-class heat weights, 3 channels each
BACKGROUND_HEAT = 10.0
FULL_VIEW_MIN_FRACTION = 0.999
TRUNCATED_SCALE = 0.35

# spurious signature responses: rectangles of off-class heat that persist
# across every slice, so they survive fusion exactly like real detections
GHOST_RATE = 2.0          # mean count per object class when sigma_h = 1
GHOST_AMP = (0.25, 0.55)  # strength relative to the class signature
GHOST_ROWS = (4, 10)
GHOST_COLS = (6, 14)

# top-to-bottom scene band layout: (class name, height fraction)
BAND_LAYOUT = (("sky", 0.25), ("building", 0.25), ("vegetation", 0.15), ("road", 0.35))

BASE_COLOR = {
    "road": (0.32, 0.32, 0.36),
    "sky": (0.53, 0.81, 0.92),
    "building": (0.42, 0.38, 0.36),
    "vegetation": (0.20, 0.60, 0.25),
    "car": (0.10, 0.15, 0.70),
    "person": (0.85, 0.28, 0.45),
    "sign": (0.95, 0.85, 0.20),
    "pole": (0.65, 0.65, 0.65),
}
BASE_TEXTURE = {
    "road": 0.10, "sky": 0.05, "building": 0.18, "vegetation": 0.80,
    "car": 0.30, "person": 0.45, "sign": 0.20, "pole": 0.15,
}
BASE_SALIENCY = {
    "road": 0.20, "sky": 0.10, "building": 0.30, "vegetation": 0.40,
    "car": 0.85, "person": 0.85, "sign": 0.85, "pole": 0.85,
}

_TOY_ROWS = (
    # id, name, kind, category, allowed bands
    (0, "road", "scene", "flat", (2, 3)),
    (1, "sky", "scene", "sky", (0, 1)),
    (2, "building", "scene", "construction", (0, 1, 2)),
    (3, "vegetation", "scene", "nature", (0, 1, 2)),
    (4, "car", "object", "vehicle", (1, 2, 3)),
    (5, "person", "object", "human", (1, 2, 3)),
    (6, "sign", "object", "object", (0, 1, 2)),
    (7, "pole", "object", "object", (0, 1, 2, 3)),
)


def toy_catalog(seeds: dict[int, tuple[str, int, int]] | None = None) -> ClassCatalog:
    """Eight-class catalog used by the synthetic corpus (4 scene, 4 object)."""
    classes = []
    for cid, name, kind, cat, bands in _TOY_ROWS:
        seed = (seeds or {}).get(cid, (f"seed_{cid}", 0, cid))
        classes.append(ClassDef(cid, name, kind, cat, frozenset(bands), seed))
    cat = ClassCatalog(classes)
    validate_catalog(cat)
    return cat


@dataclass(frozen=True)
class ObjectSpec:
    """One object blob: axis-aligned rectangle or inscribed ellipse."""

    class_id: int
    row: int
    col: int
    height: int
    width: int
    shape: str = "rect"  # rect | ellipse

    def mask(self, dims: tuple[int, int]) -> np.ndarray:
        h, w = dims
        m = np.zeros((h, w), dtype=bool)
        if self.shape == "rect":
            m[self.row : self.row + self.height, self.col : self.col + self.width] = True
            return m
        rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        a = max(self.height / 2.0, 0.5)
        b = max(self.width / 2.0, 0.5)
        cr = self.row + (self.height - 1) / 2.0
        c0 = self.col + (self.width - 1) / 2.0
        m[((rr - cr) / a) ** 2 + ((cc - c0) / b) ** 2 <= 1.0] = True
        return m


@dataclass(frozen=True)
class SceneSpec:
    """Complete recipe for one scene; generation is pure in this value."""

    seed: int
    height: int
    width: int
    objects: tuple[ObjectSpec, ...] = ()
    sigma_h: float = 0.0
    sigma_c: float = 0.0
    sigma_s: float = 0.0
    heat_channels: int = 32
    bands: tuple[tuple[str, float], ...] = BAND_LAYOUT

    def __post_init__(self):
        if self.height < 4 or self.width < 6:
            raise SpecError(f"scene dims {self.height}x{self.width} below 4x6 minimum")
        if abs(sum(f for _, f in self.bands) - 1.0) > 1e-9:
            raise SpecError("band fractions must sum to 1")
        for s in (self.sigma_h, self.sigma_c, self.sigma_s):
            if not 0.0 <= s <= 1.0:
                raise SpecError(f"noise level {s} outside [0,1]")


@dataclass
class SceneArtifacts:
    """Everything generated for one scene."""

    spec: SceneSpec
    gt: LabelMap
    color: FeatureMap
    texture: FeatureMap
    edge: FeatureMap
    sal_g: FeatureMap
    sal_l1: FeatureMap
    sal_l2: FeatureMap
    plan: SlicePlan
    heat: mosf.SliceHeatSet
    fused: FeatureMap = field(init=False)

    def __post_init__(self):
        self.fused = mosf.fuse(self.heat)


def object_block(catalog: ClassCatalog, class_id: int) -> int:
    """Index of the class's 3-channel heat signature block."""
    ids = sorted(c.id for c in catalog.objects())
    return ids.index(class_id)


def background_start(catalog: ClassCatalog) -> int:
    return 3 * len(catalog.objects())


def signature_vector(catalog: ClassCatalog, class_id: int, channels: int) -> np.ndarray:
    v = np.zeros(channels)
    base = 3 * object_block(catalog, class_id)
    v[base : base + 3] = SIGNATURE
    return v


def band_rows(spec: SceneSpec) -> list[tuple[str, int, int]]:
    """Per band: (class name, first row, one past last row)."""
    out, top, acc = [], 0, 0.0
    for name, frac in spec.bands:
        acc += frac
        bottom = int(round(acc * spec.height))
        out.append((name, top, bottom))
        top = bottom
    out[-1] = (out[-1][0], out[-1][1], spec.height)
    return out


def _ground_truth(spec: SceneSpec, catalog: ClassCatalog) -> np.ndarray:
    by_name = {c.name: c.id for c in catalog.classes}
    gt = np.zeros((spec.height, spec.width), dtype=np.uint8)
    for name, top, bottom in band_rows(spec):
        if name not in by_name:
            raise SpecError(f"band class {name!r} not in catalog")
        gt[top:bottom, :] = by_name[name]
    taken = np.zeros_like(gt, dtype=bool)
    known = set(catalog.ids())
    for obj in spec.objects:
        if obj.class_id not in known:
            raise SpecError(f"object class {obj.class_id} not in catalog")
        if obj.row < 0 or obj.col < 0 or obj.row + obj.height > spec.height or obj.col + obj.width > spec.width:
            raise SpecError(f"object blob at ({obj.row},{obj.col}) exceeds scene bounds")
        m = obj.mask((spec.height, spec.width))
        if not m.any():
            raise SpecError("object blob is empty")
        if (m & taken).any():
            raise SpecError("object blobs overlap")
        taken |= m
        gt[m] = obj.class_id
    return gt


def _edge_from_gt(gt: np.ndarray) -> np.ndarray:
    e = np.zeros(gt.shape)
    dv = gt[:-1, :] != gt[1:, :]
    dh = gt[:, :-1] != gt[:, 1:]
    e[:-1, :][dv] = 1.0
    e[1:, :][dv] = 1.0
    e[:, :-1][dh] = 1.0
    e[:, 1:][dh] = 1.0
    return e


def _scalar_map(gt: np.ndarray, catalog: ClassCatalog, table: dict[str, float]) -> np.ndarray:
    lut = np.zeros(256)
    for c in catalog.classes:
        lut[c.id] = table[c.name]
    return lut[gt]


def _noisy(rng: np.random.Generator, base: np.ndarray, sigma: float) -> np.ndarray:
    if sigma > 0.0:
        base = base + rng.normal(0.0, sigma, size=base.shape)
    return np.clip(base, 0.0, 1.0).astype(np.float32)


def generate_scene(spec: SceneSpec, catalog: ClassCatalog) -> SceneArtifacts:
    """Render every raster for one spec. Draw order is fixed so outputs are
    reproducible: color, texture, saliency (g, l1, l2), ghost responses, then
    heat slice 0..14.
    """
    c_obj = len(catalog.objects())
    if 3 * c_obj >= spec.heat_channels:
        raise SpecError(
            f"heat_channels {spec.heat_channels} too small for {c_obj} object classes"
        )
    gt = _ground_truth(spec, catalog)
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))

    base_color = np.zeros((spec.height, spec.width, 3))
    lut = np.zeros((256, 3))
    for c in catalog.classes:
        lut[c.id] = BASE_COLOR[c.name]
    base_color = lut[gt]
    color = FeatureMap(_noisy(rng, base_color, spec.sigma_c))
    texture = FeatureMap(_noisy(rng, _scalar_map(gt, catalog, BASE_TEXTURE)[:, :, None], spec.sigma_c))

    sal_base = _scalar_map(gt, catalog, BASE_SALIENCY)[:, :, None]
    sal_g = FeatureMap(_noisy(rng, sal_base, spec.sigma_s))
    sal_l1 = FeatureMap(_noisy(rng, np.clip(sal_base * 0.9 + 0.05, 0, 1), spec.sigma_s))
    sal_l2 = FeatureMap(_noisy(rng, np.clip(sal_base * 1.1 - 0.05, 0, 1), spec.sigma_s))

    edge = FeatureMap(_edge_from_gt(gt)[:, :, None].astype(np.float32))

    # heat-map confusion: sigma_h sets the rate and it also scales the white
    # jitter below; a ghost is drawn once on the full canvas so all slices agree.
    # Ghosts land on background only: real blobs keep their clean responses.
    blob_union = np.zeros((spec.height, spec.width), dtype=bool)
    for o in spec.objects:
        blob_union |= o.mask((spec.height, spec.width))
    ghost = np.zeros((spec.height, spec.width, spec.heat_channels))
    if spec.sigma_h > 0.0:
        for c in catalog.objects():
            sig = signature_vector(catalog, c.id, spec.heat_channels)
            for _ in range(rng.poisson(GHOST_RATE * spec.sigma_h)):
                for _ in range(40):
                    gh = int(rng.integers(GHOST_ROWS[0], GHOST_ROWS[1] + 1))
                    gw = int(rng.integers(GHOST_COLS[0], GHOST_COLS[1] + 1))
                    r0 = int(rng.integers(0, max(1, spec.height - gh + 1)))
                    c0 = int(rng.integers(0, max(1, spec.width - gw + 1)))
                    if not blob_union[r0 : r0 + gh, c0 : c0 + gw].any():
                        amp = rng.uniform(GHOST_AMP[0], GHOST_AMP[1])
                        ghost[r0 : r0 + gh, c0 : c0 + gw] += amp * sig
                        break

    plan = make_slice_plan(spec.height, spec.width)
    blob_masks = [(o, o.mask((spec.height, spec.width))) for o in spec.objects]
    bg0 = background_start(catalog)
    slices = []
    for s in plan.slices:
        heat = np.zeros((s.height, s.width, spec.heat_channels))
        sub_gt = gt[s.row : s.row + s.height, s.col : s.col + s.width]
        scene_ids = [c.id for c in catalog.scenes()]
        scene_mask = np.isin(sub_gt, scene_ids)
        heat[scene_mask, bg0:] = BACKGROUND_HEAT
        for obj, mask in blob_masks:
            sub = mask[s.row : s.row + s.height, s.col : s.col + s.width]
            visible = sub.sum()
            if visible == 0:
                continue
            f = visible / mask.sum()
            strength = 1.0 if f >= FULL_VIEW_MIN_FRACTION else TRUNCATED_SCALE * f
            heat[sub] = strength * signature_vector(catalog, obj.class_id, spec.heat_channels)
        heat = heat + ghost[s.row : s.row + s.height, s.col : s.col + s.width]
        if spec.sigma_h > 0.0:
            heat = heat + rng.normal(0.0, spec.sigma_h, size=heat.shape)
        slices.append(FeatureMap(np.clip(heat, 0.0, None).astype(np.float32)))
    heat_set = mosf.SliceHeatSet(plan, slices)

    return SceneArtifacts(
        spec=spec,
        gt=LabelMap(gt),
        color=color,
        texture=texture,
        edge=edge,
        sal_g=sal_g,
        sal_l1=sal_l1,
        sal_l2=sal_l2,
        plan=plan,
        heat=heat_set,
    )


# -- corpus spec sampling ----------------------------------------------------

# object classes are placed inside these scene bands
PLACEMENT_BAND = {"car": "road", "person": "road", "sign": "building", "pole": "building"}


def _placement_rows(spec_bands, height, band_name):
    top, acc = 0, 0.0
    for name, frac in spec_bands:
        acc += frac
        bottom = int(round(acc * height))
        if name == band_name:
            return top, bottom
        top = bottom
    raise SpecError(f"placement band {band_name!r} missing from layout")


def random_spec(
    index: int,
    master_seed: int,
    catalog: ClassCatalog,
    height: int = 64,
    width: int = 96,
    sigma_h: float = 0.0,
    sigma_c: float = 0.0,
    sigma_s: float = 0.0,
    heat_channels: int = 32,
    force_all_objects: bool = False,
) -> SceneSpec:
    """Sample one scene's layout deterministically from (master_seed, index)."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(master_seed, index)))
    obj_classes = {c.name: c.id for c in catalog.objects()}
    names = sorted(obj_classes)
    if force_all_objects:
        chosen = list(names)
    else:
        n = int(rng.integers(2, 5))
        chosen = list(rng.choice(names, size=n, replace=True))
    objects: list[ObjectSpec] = []
    taken = np.zeros((height, width), dtype=bool)
    for name in chosen:
        band = PLACEMENT_BAND[name]
        top, bottom = _placement_rows(BAND_LAYOUT, height, band)
        for _ in range(50):
            if force_all_objects:
                # exemplar blobs span several superpixels so the class center
                # is fitted from a cluster, not a single region
                h = int(rng.integers(max(8, height // 6), max(9, height // 4) + 1))
                w = int(rng.integers(max(10, width // 6), max(11, width // 5) + 1))
            else:
                h = int(rng.integers(max(4, height // 10), max(5, height // 6) + 1))
                w = int(rng.integers(max(4, width // 12), max(5, width // 7) + 1))
            h = min(h, bottom - top)
            row = int(rng.integers(top, max(top + 1, bottom - h + 1)))
            col = int(rng.integers(0, width - w + 1))
            shape = "rect" if force_all_objects or rng.random() < 0.5 else "ellipse"
            cand = ObjectSpec(obj_classes[name], row, col, h, w, shape)
            m = cand.mask((height, width))
            if m.any() and not (m & taken).any():
                taken |= m
                objects.append(cand)
                break
    noise_seed = int(np.random.default_rng(np.random.SeedSequence(entropy=(master_seed, index, 1))).integers(2**63))
    return SceneSpec(
        seed=noise_seed,
        height=height,
        width=width,
        objects=tuple(objects),
        sigma_h=sigma_h,
        sigma_c=sigma_c,
        sigma_s=sigma_s,
        heat_channels=heat_channels,
    )


def seed_pixel(gt: np.ndarray, class_id: int) -> tuple[int, int] | None:
    """Deterministic annotated pixel for a class: the median member in raster
    order, which sits well inside the class area for band/blob layouts."""
    pts = np.argwhere(gt == class_id)
    if len(pts) == 0:
        return None
    r, c = pts[len(pts) // 2]
    return int(r), int(c)


def make_exact_registry(catalog: ClassCatalog, heat_channels: int = 32, bins: int = 32) -> represent.Registry:
    """Ground-truth representations straight from the generator tables.

    Object vectors are the normalized heat signatures; scene pools are the
    single-spike color and texture histograms of the base values. On a
    zero-noise corpus these match the per-region descriptors exactly.
    """
    objects = {}
    for c in catalog.objects():
        sig = signature_vector(catalog, c.id, heat_channels)
        objects[c.id] = represent.ObjectRep(c.id, sig / sig.sum(), (1.0,))
    scenes = {}
    for c in catalog.scenes():
        color = np.zeros(3 * bins)
        for ch in range(3):
            idx = min(int(BASE_COLOR[c.name][ch] * bins), bins - 1)
            color[ch * bins + idx] = 1.0 / 3.0
        tex = np.zeros(bins)
        tex[min(int(BASE_TEXTURE[c.name] * bins), bins - 1)] = 1.0
        scenes[c.id] = represent.SceneRep(c.id, np.concatenate([color, tex])[None, :])
    return represent.Registry(objects, scenes)
