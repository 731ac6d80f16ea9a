"""Corpus directory layout and the per-scene encode step.

Layout under a corpus root:

    catalog.txt
    <split>/<scene>/color.fmap texture.fmap edge.fmap
                    sal_g.fmap sal_l1.fmap sal_l2.fmap
                    heat/slice_00.fmap .. slice_14.fmap
                    plan.txt
                    gt.pgm                    (optional)
    after encode:   fused.fmap regions.pgm regions.txt
                    desc_*.fmap ctx*.fmap
    after infer:    labels_initial.pgm (+ sibling _scores.fmap)
    during iterate: labels_round_<r>/ pred_round_<r>/ at the root

Texture, edge, and saliency maps are optional inputs; encode falls back to
maps derived from color when a file is absent.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import featio, mosf, superpix
from .catalog import ClassCatalog, ClassDef, save_catalog, validate_catalog
from .errors import FormatError, MissingSeedError
from .featio import FeatureMap, LabelMap
from .superpix import ContextMatrix, Descriptors, RegionSet
from .synthscene import SceneArtifacts, SceneSpec, generate_scene, seed_pixel

INPUT_MAPS = ("color", "texture", "edge", "sal_g", "sal_l1", "sal_l2")
DESC_FILES = ("desc_heat", "desc_color", "desc_texture", "desc_sal_g", "desc_sal_l1", "desc_sal_l2")
CTX_FILES = ("ctx", "ctx_edge", "ctx_sim_g", "ctx_sim_l1", "ctx_sim_l2")
DEFAULT_TARGET_K = 150


def scene_name(index: int) -> str:
    return f"scene_{index:03d}"


def scene_dirs(root, split: str) -> list[Path]:
    base = Path(root) / split
    if not base.is_dir():
        return []
    return sorted(p for p in base.iterdir() if p.is_dir())


def write_scene_inputs(scene_dir, art: SceneArtifacts) -> None:
    d = Path(scene_dir)
    (d / "heat").mkdir(parents=True, exist_ok=True)
    featio.write_fmap(art.color, d / "color.fmap")
    featio.write_fmap(art.texture, d / "texture.fmap")
    featio.write_fmap(art.edge, d / "edge.fmap")
    featio.write_fmap(art.sal_g, d / "sal_g.fmap")
    featio.write_fmap(art.sal_l1, d / "sal_l1.fmap")
    featio.write_fmap(art.sal_l2, d / "sal_l2.fmap")
    featio.write_slice_plan(art.plan, d / "plan.txt")
    for i, m in enumerate(art.heat.maps):
        featio.write_fmap(m, d / "heat" / f"slice_{i:02d}.fmap")
    featio.write_labelmap(art.gt, d / "gt.pgm")


def _build_one(args) -> tuple[str, int, dict[int, tuple[int, int]]]:
    root, split, index, payload = args
    import pickle

    spec, catalog = pickle.loads(payload)
    art = generate_scene(spec, catalog)
    scene = scene_name(index)
    write_scene_inputs(Path(root) / split / scene, art)
    found = {}
    for cid in np.unique(art.gt.labels):
        rc = seed_pixel(art.gt.labels, int(cid))
        if rc is not None:
            found[int(cid)] = rc
    return split, index, found


def build_corpus(
    root,
    catalog: ClassCatalog,
    train_specs: list[SceneSpec],
    val_specs: list[SceneSpec] | None = None,
    jobs: int = 1,
) -> ClassCatalog:
    """Generate and write every scene, then write catalog.txt with each class
    seeded at a deterministic pixel of the first train scene containing it."""
    import pickle

    root = Path(root)
    val_specs = val_specs or []
    tasks = [(str(root), "train", i, pickle.dumps((s, catalog))) for i, s in enumerate(train_specs)]
    tasks += [(str(root), "val", i, pickle.dumps((s, catalog))) for i, s in enumerate(val_specs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_build_one, tasks))
    else:
        results = [_build_one(t) for t in tasks]

    seeds: dict[int, tuple[str, int, int]] = {}
    for split, index, found in sorted(results, key=lambda r: (r[0] != "train", r[1])):
        if split != "train":
            continue
        for cid, (r, c) in sorted(found.items()):
            seeds.setdefault(cid, (f"train/{scene_name(index)}", r, c))
    missing = [c.name for c in catalog.classes if c.id not in seeds]
    if missing:
        raise MissingSeedError(f"classes never appear in the train split: {missing}")
    seeded = ClassCatalog(
        [ClassDef(c.id, c.name, c.kind, c.category, c.allowed_bands, seeds[c.id]) for c in catalog.classes]
    )
    validate_catalog(seeded)
    save_catalog(seeded, root / "catalog.txt")
    return seeded


@dataclass
class EncodedScene:
    """Everything infer/iterate needs for one scene."""

    name: str
    path: Path
    regions: RegionSet
    desc: Descriptors
    ctx: ContextMatrix
    fused: FeatureMap
    gt: LabelMap | None


def _load_or_fallback(d: Path, name: str, color: FeatureMap) -> FeatureMap:
    p = d / f"{name}.fmap"
    if p.exists():
        return featio.read_fmap(p)
    if name == "texture":
        return superpix.fallback_texture(color)
    if name == "edge":
        return superpix.fallback_edge(color)
    if name == "sal_g":
        return superpix.fallback_saliency_global(color)
    if name == "sal_l1":
        return superpix.fallback_saliency_local(color, 1)
    if name == "sal_l2":
        return superpix.fallback_saliency_local(color, 2)
    raise FormatError(f"missing required map {p}")


def encode_scene(
    scene_dir,
    target_k: int = DEFAULT_TARGET_K,
    bins: int = superpix.DEFAULT_BINS,
    compactness: float = superpix.DEFAULT_COMPACTNESS,
) -> EncodedScene:
    """Fuse heat slices, segment, describe, build the context matrix, and
    persist every derived artifact next to the inputs."""
    d = Path(scene_dir)
    color = featio.read_fmap(d / "color.fmap")
    plan = featio.read_slice_plan(d / "plan.txt")
    maps = [featio.read_fmap(d / "heat" / f"slice_{i:02d}.fmap") for i in range(len(plan.slices))]
    fused = mosf.fuse(mosf.SliceHeatSet(plan, maps))
    featio.write_fmap(fused, d / "fused.fmap")

    texture = _load_or_fallback(d, "texture", color)
    edge = _load_or_fallback(d, "edge", color)
    sal_g = _load_or_fallback(d, "sal_g", color)
    sal_l1 = _load_or_fallback(d, "sal_l1", color)
    sal_l2 = _load_or_fallback(d, "sal_l2", color)

    regions = superpix.segment(color, target_k, compactness)
    desc = superpix.describe(regions, fused, color, texture, sal_g, sal_l1, sal_l2, bins)
    edge_mat = superpix.edge_similarity(regions, edge)
    ctx = superpix.context_matrix(regions, desc, edge_mat)

    featio.write_pgm(regions.labels, d / "regions.pgm", maxval=max(255, regions.count - 1))
    _write_region_sidecar(regions, d / "regions.txt")
    for name, arr in zip(
        DESC_FILES, (desc.heat, desc.color, desc.texture, desc.sal_g, desc.sal_l1, desc.sal_l2)
    ):
        featio.write_fmap(FeatureMap(arr.astype(np.float32)), d / f"{name}.fmap")
    for name, arr in zip(CTX_FILES, (ctx.sim, ctx.edge, ctx.sal_g, ctx.sal_l1, ctx.sal_l2)):
        featio.write_fmap(FeatureMap(arr.astype(np.float32)), d / f"{name}.fmap")

    gt = _load_gt(d)
    return EncodedScene(d.name, d, regions, desc, ctx, fused, gt)


def _write_region_sidecar(regions: RegionSet, path) -> None:
    lines = ["REGIONS v1", f"count {regions.count}"]
    for i in range(regions.count):
        r, c = regions.centroids[i]
        lines.append(f"{i} {regions.sizes[i]} {r:.6f} {c:.6f}")
    for (i, j), pix in regions.adjacency.items():
        lines.append(f"adj {i} {j} {len(pix)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def _load_gt(d: Path) -> LabelMap | None:
    p = d / "gt.pgm"
    return featio.read_labelmap(p) if p.exists() else None


def load_encoded(scene_dir) -> EncodedScene:
    """Rehydrate a previously encoded scene from its persisted artifacts."""
    d = Path(scene_dir)
    raster, _ = featio.read_pgm(d / "regions.pgm")
    regions = RegionSet(raster.astype(np.int32), int(raster.max()) + 1)
    arrs = [featio.read_fmap(d / f"{n}.fmap").data[:, :, 0].astype(np.float64) for n in DESC_FILES]
    desc = Descriptors(*arrs)
    mats = [featio.read_fmap(d / f"{n}.fmap").data[:, :, 0].astype(np.float64) for n in CTX_FILES]
    ctx = ContextMatrix(*mats)
    fused = featio.read_fmap(d / "fused.fmap")
    return EncodedScene(d.name, d, regions, desc, ctx, fused, _load_gt(d))


def _encode_one(args):
    scene_dir, target_k, bins, compactness = args
    encode_scene(scene_dir, target_k, bins, compactness)
    return str(scene_dir)


def encode_corpus(
    root,
    splits: tuple[str, ...] = ("train", "val"),
    target_k: int = DEFAULT_TARGET_K,
    bins: int = superpix.DEFAULT_BINS,
    compactness: float = superpix.DEFAULT_COMPACTNESS,
    jobs: int = 1,
) -> list[str]:
    dirs = []
    for split in splits:
        dirs.extend(scene_dirs(root, split))
    tasks = [(str(d), target_k, bins, compactness) for d in dirs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return sorted(pool.map(_encode_one, tasks))
    return sorted(_encode_one(t) for t in tasks)
