"""Class representations grown from one annotated pixel each.

Object classes get a single L1-normalized semantic center fitted by a guarded
E-M loop over the histogram-intersection objective. Scene classes get a small
pool of color-texture centers found by threshold-graph grouping inside the
seed region's context neighborhood, then refined by the same guarded loop.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .catalog import ClassCatalog
from .errors import EmptyError, FormatError, MissingSeedError, SeedError
from .superpix import ContextMatrix, Descriptors, RegionSet, intersect_matrix, sim_hist

TOP_FRACTION = 0.01
CENTER_TOL = 1e-4
MAX_ROUNDS = 50
G_MAX = 5
NEIGHBORHOOD_MIN_SIM = 0.5
GROUP_MIN_SIM = 0.5


@dataclass
class ObjectRep:
    """Semantic center for one object class plus its fit trace."""

    class_id: int
    vector: np.ndarray  # (C_h,), L1 = 1
    trace: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)


@dataclass
class SceneRep:
    """Pool of G concatenated color+texture centers for one scene class."""

    class_id: int
    pool: np.ndarray  # (G, color_dim + texture_dim), each part L1 = 1
    texture_dim: int = 32

    def __post_init__(self):
        self.pool = np.atleast_2d(np.asarray(self.pool, dtype=np.float64))

    @property
    def groups(self) -> int:
        return self.pool.shape[0]

    @property
    def color_dim(self) -> int:
        return self.pool.shape[1] - self.texture_dim


@dataclass
class Registry:
    """All fitted representations, keyed by class id."""

    objects: dict[int, ObjectRep]
    scenes: dict[int, SceneRep]


def objective(center: np.ndarray, members: np.ndarray) -> float:
    """Summed histogram intersection of every member against the center."""
    return float(np.minimum(members, center[None, :]).sum())


def _seed_region(regions: RegionSet, seed_rc: tuple[int, int]) -> int:
    r, c = seed_rc
    h, w = regions.shape
    if not (0 <= r < h and 0 <= c < w):
        raise SeedError(f"seed pixel ({r},{c}) outside {h}x{w} image")
    return int(regions.labels[r, c])


def _select_top(rows: np.ndarray, center: np.ndarray, n_sel: int) -> np.ndarray:
    sims = np.minimum(rows, center[None, :]).sum(axis=1)
    order = np.argsort(-sims, kind="stable")  # ties keep the smaller index
    return order[:n_sel]


def fit_object(
    class_id: int,
    regions: RegionSet,
    desc: Descriptors,
    seed_rc: tuple[int, int],
    top_fraction: float = TOP_FRACTION,
) -> ObjectRep:
    """Grow the semantic center from the seed region's mean heat vector.

    Each round re-selects the top fraction of regions by similarity to the
    current center, proposes the L1-normalized mean of that set plus the seed
    region, and keeps it only if the objective does not drop.
    """
    k = regions.count
    if k == 0:
        raise EmptyError("no regions to fit")
    rows = desc.heat
    seed_idx = _seed_region(regions, seed_rc)
    seed_vec = rows[seed_idx]
    n_sel = max(1, int(np.ceil(top_fraction * k)))

    center = seed_vec.copy()
    sel = _select_top(rows, center, n_sel)
    trace = [objective(center, rows[sel])]
    for _ in range(MAX_ROUNDS):
        members = sorted(set(sel.tolist()) | {seed_idx})
        cand = rows[members].mean(axis=0)
        cand = cand / cand.sum()
        cand_sel = _select_top(rows, cand, n_sel)
        cand_obj = objective(cand, rows[cand_sel])
        if cand_obj < trace[-1]:
            break
        moved = float(np.abs(cand - center).sum())
        center, sel = cand, cand_sel
        trace.append(cand_obj)
        if moved < CENTER_TOL:
            break
    return ObjectRep(class_id, center, tuple(trace))


def _normalize_parts(vec: np.ndarray, texture_dim: int) -> np.ndarray:
    out = vec.astype(np.float64).copy()
    cdim = out.size - texture_dim
    for lo, hi in ((0, cdim), (cdim, out.size)):
        s = out[lo:hi].sum()
        if s > 0:
            out[lo:hi] /= s
    return out


def _components(nodes: list[int], edges: set[tuple[int, int]]) -> list[list[int]]:
    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for n in nodes:
        groups.setdefault(find(n), []).append(n)
    return [sorted(v) for v in groups.values()]


def fit_scene(
    class_id: int,
    regions: RegionSet,
    desc: Descriptors,
    ctx: ContextMatrix,
    seed_rc: tuple[int, int],
    g_max: int = G_MAX,
) -> SceneRep:
    """Pool the seed's context neighborhood into up to g_max color-texture
    groups and refine each center with the guarded E-M loop."""
    seed_idx = _seed_region(regions, seed_rc)
    texture_dim = desc.texture.shape[1]
    concat = np.concatenate([desc.color, desc.texture], axis=1)

    sims = ctx.sim[seed_idx]
    nodes = sorted(set(np.nonzero(sims > NEIGHBORHOOD_MIN_SIM)[0].tolist()) | {seed_idx})
    sim_c = intersect_matrix(desc.color[nodes], desc.color[nodes])
    sim_t = intersect_matrix(desc.texture[nodes], desc.texture[nodes])
    product = sim_c * sim_t  # both factors in [0,1]: color rows sum to 1 overall
    edges = {
        (nodes[i], nodes[j])
        for i in range(len(nodes))
        for j in range(i + 1, len(nodes))
        if product[i, j] > GROUP_MIN_SIM
    }
    comps = _components(nodes, edges)
    comps.sort(key=lambda c: (-len(c), c[0]))
    groups = [np.array(c, dtype=np.int64) for c in comps[:g_max]]

    centers = [_normalize_parts(concat[g].mean(axis=0), texture_dim) for g in groups]
    obj = sum(objective(m, concat[g]) for m, g in zip(centers, groups))
    members = np.array(nodes, dtype=np.int64)
    for _ in range(MAX_ROUNDS):
        # reassign every neighborhood member to its most similar center
        sims_gm = np.stack([np.minimum(concat[members], m[None, :]).sum(axis=1) for m in centers])
        assign = np.argmax(sims_gm, axis=0)  # ties keep the smaller group index
        cand_groups, cand_centers = [], []
        for gi in range(len(centers)):
            mem = members[assign == gi]
            if len(mem) == 0:
                cand_groups.append(groups[gi])
                cand_centers.append(centers[gi])
                continue
            cand_groups.append(mem)
            cand_centers.append(_normalize_parts(concat[mem].mean(axis=0), texture_dim))
        cand_obj = sum(objective(m, concat[g]) for m, g in zip(cand_centers, cand_groups))
        if cand_obj < obj:
            break
        moved = max(float(np.abs(c - p).sum()) for c, p in zip(cand_centers, centers))
        centers, groups, obj = cand_centers, cand_groups, cand_obj
        if moved < CENTER_TOL:
            break
    return SceneRep(class_id, np.stack(centers), texture_dim)


def fit_all(
    catalog: ClassCatalog,
    images: dict[str, tuple[RegionSet, Descriptors, ContextMatrix]],
    top_fraction: float = TOP_FRACTION,
    g_max: int = G_MAX,
) -> Registry:
    """Fit every class from its annotated pixel; images maps seed-image names
    to their encoded artifacts."""
    objects: dict[int, ObjectRep] = {}
    scenes: dict[int, SceneRep] = {}
    for c in catalog.classes:
        image, row, col = c.seed
        if image not in images:
            raise MissingSeedError(f"class {c.name!r} seed image {image!r} not provided")
        regions, desc, ctx = images[image]
        if c.kind == "object":
            objects[c.id] = fit_object(c.id, regions, desc, (row, col), top_fraction)
        else:
            scenes[c.id] = fit_scene(c.id, regions, desc, ctx, (row, col), g_max)
    return Registry(objects, scenes)


# -- registry serialization --------------------------------------------------

REGISTRY_MAGIC = b"REPS v1\n"


def save_registry(reg: Registry, path: str) -> None:
    buf = io.BytesIO()
    buf.write(REGISTRY_MAGIC)
    for cid in sorted(reg.objects):
        rep = reg.objects[cid]
        buf.write(f"obj {cid} {rep.vector.size}\n".encode("ascii"))
        buf.write(rep.vector.astype("<f4").tobytes())
    for cid in sorted(reg.scenes):
        rep = reg.scenes[cid]
        g, dim = rep.pool.shape
        buf.write(f"sce {cid} {g} {rep.color_dim} {rep.texture_dim}\n".encode("ascii"))
        buf.write(rep.pool.astype("<f4").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def _read_line(f) -> str:
    out = bytearray()
    while True:
        b = f.read(1)
        if not b:
            raise FormatError("registry truncated inside a record line")
        if b == b"\n":
            return out.decode("ascii")
        out.extend(b)


def load_registry(path: str) -> Registry:
    objects: dict[int, ObjectRep] = {}
    scenes: dict[int, SceneRep] = {}
    with open(path, "rb") as f:
        if f.read(len(REGISTRY_MAGIC)) != REGISTRY_MAGIC:
            raise FormatError(f"{path}: bad registry magic")
        while True:
            pos = f.read(1)
            if not pos:
                break
            fields = (pos.decode("ascii") + _read_line(f)).split()
            if fields[0] == "obj":
                if len(fields) != 3:
                    raise FormatError(f"{path}: bad object record {fields}")
                cid, dim = int(fields[1]), int(fields[2])
                raw = f.read(4 * dim)
                if len(raw) != 4 * dim:
                    raise FormatError(f"{path}: truncated object vector for class {cid}")
                objects[cid] = ObjectRep(cid, np.frombuffer(raw, dtype="<f4").astype(np.float64))
            elif fields[0] == "sce":
                if len(fields) != 5:
                    raise FormatError(f"{path}: bad scene record {fields}")
                cid, g, cdim, tdim = (int(x) for x in fields[1:])
                n = 4 * g * (cdim + tdim)
                raw = f.read(n)
                if len(raw) != n:
                    raise FormatError(f"{path}: truncated scene pool for class {cid}")
                pool = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(g, cdim + tdim)
                scenes[cid] = SceneRep(cid, pool, tdim)
            else:
                raise FormatError(f"{path}: unknown record kind {fields[0]!r}")
    return Registry(objects, scenes)
