"""Superpixel partitioning, per-region descriptors, and context similarity.

Regions come from an iterative local k-means in joint color-position space
with a connectivity enforcement pass. Descriptors are normalized histograms
plus the mean fused heat vector. Context similarity multiplies edge-based
similarity with global/local saliency similarity per region pair.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DimError, EmptyError, RangeError
from .featio import FeatureMap

DEFAULT_BINS = 32
DEFAULT_COMPACTNESS = 0.05
KMEANS_ITERS = 10


@dataclass
class RegionSet:
    """Connected partition of one image into K superpixels."""

    labels: np.ndarray  # int32 (H, W), values 0..K-1
    count: int
    centroids: np.ndarray = field(init=False)  # (K, 2) mean (row, col)
    sizes: np.ndarray = field(init=False)  # (K,)
    adjacency: dict[tuple[int, int], np.ndarray] = field(init=False)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int32)
        h, w = self.labels.shape
        flat = self.labels.ravel()
        self.sizes = np.bincount(flat, minlength=self.count).astype(np.int64)
        if (self.sizes == 0).any():
            raise EmptyError("region set has empty regions")
        rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        sr = np.bincount(flat, weights=rr.ravel(), minlength=self.count)
        sc = np.bincount(flat, weights=cc.ravel(), minlength=self.count)
        self.centroids = np.stack([sr / self.sizes, sc / self.sizes], axis=1)
        self.adjacency = _boundaries(self.labels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def neighbors(self, i: int) -> list[int]:
        out = []
        for a, b in self.adjacency:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return sorted(out)


def _boundaries(labels: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    """Map each 4-adjacent region pair to the flat indices of its boundary
    pixels (both sides)."""
    h, w = labels.shape
    flat = labels.ravel().astype(np.int64)
    idx = np.arange(h * w).reshape(h, w)
    lo_all, hi_all, px_all = [], [], []
    for a_grid, b_grid in ((idx[:, :-1], idx[:, 1:]), (idx[:-1, :], idx[1:, :])):
        a, b = a_grid.ravel(), b_grid.ravel()
        la, lb = flat[a], flat[b]
        d = la != lb
        if not d.any():
            continue
        a, b, la, lb = a[d], b[d], la[d], lb[d]
        lo, hi = np.minimum(la, lb), np.maximum(la, lb)
        lo_all.append(np.concatenate([lo, lo]))
        hi_all.append(np.concatenate([hi, hi]))
        px_all.append(np.concatenate([a, b]))
    if not lo_all:
        return {}
    lo = np.concatenate(lo_all)
    hi = np.concatenate(hi_all)
    px = np.concatenate(px_all)
    k = int(flat.max()) + 1
    combined = (lo * k + hi) * (h * w) + px
    combined = np.unique(combined)
    key = combined // (h * w)
    pix = combined % (h * w)
    cuts = np.nonzero(np.diff(key))[0] + 1
    groups = np.split(pix, cuts)
    firsts = key[np.concatenate([[0], cuts])]
    return {(int(kk // k), int(kk % k)): g for kk, g in zip(firsts, groups)}


def _seed_grid(target_k: int, h: int, w: int) -> tuple[int, int]:
    gr = int(round(np.sqrt(target_k * h / w))) or 1
    gr = min(max(gr, 1), min(target_k, h))
    gc = min(max(-(-target_k // gr), 1), w)
    while gr * gc < target_k and gc < w:
        gc += 1
    while gr * gc < target_k and gr < h:
        gr += 1
    return gr, gc


def segment(color: FeatureMap, target_k: int, compactness: float = DEFAULT_COMPACTNESS) -> RegionSet:
    """Partition the image into roughly target_k connected superpixels.

    Ten rounds of local k-means over (color, position), then connected
    component enforcement with small fragments merged into their most
    color-similar neighbor. Deterministic for identical inputs.
    """
    img = color.data.astype(np.float64)
    h, w, _ = img.shape
    if not 1 <= target_k <= h * w:
        raise RangeError(f"target_k {target_k} outside 1..{h * w}")
    gr, gc = _seed_grid(target_k, h, w)
    k0 = gr * gc
    seed_r = ((np.arange(gr) + 0.5) * h / gr).astype(int).clip(0, h - 1)
    seed_c = ((np.arange(gc) + 0.5) * w / gc).astype(int).clip(0, w - 1)
    pos = np.array([(r, c) for r in seed_r for c in seed_c], dtype=np.float64)
    col = img[pos[:, 0].astype(int), pos[:, 1].astype(int)].copy()
    step = np.sqrt(h * w / k0)
    radius = int(np.ceil(step * 1.5))
    spatial_w = (compactness / step) ** 2

    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    assign = np.zeros((h, w), dtype=np.int32)
    for _ in range(KMEANS_ITERS):
        best = np.full((h, w), np.inf)
        assign.fill(-1)
        for k in range(k0):
            r0 = max(0, int(pos[k, 0]) - radius)
            r1 = min(h, int(pos[k, 0]) + radius + 1)
            c0 = max(0, int(pos[k, 1]) - radius)
            c1 = min(w, int(pos[k, 1]) + radius + 1)
            win = img[r0:r1, c0:c1]
            d = ((win - col[k]) ** 2).sum(axis=2)
            d += spatial_w * ((rr[r0:r1, c0:c1] - pos[k, 0]) ** 2 + (cc[r0:r1, c0:c1] - pos[k, 1]) ** 2)
            sub = best[r0:r1, c0:c1]
            better = d < sub
            sub[better] = d[better]
            assign[r0:r1, c0:c1][better] = k
        missing = assign < 0
        if missing.any():
            # pixels outside every search window fall back to nearest seed position
            mr, mc = np.nonzero(missing)
            d = (mr[:, None] - pos[None, :, 0]) ** 2 + (mc[:, None] - pos[None, :, 1]) ** 2
            assign[mr, mc] = np.argmin(d, axis=1)
        flat = assign.ravel()
        counts = np.bincount(flat, minlength=k0).astype(np.float64)
        nz = counts > 0
        sr = np.bincount(flat, weights=rr.ravel(), minlength=k0)
        sc = np.bincount(flat, weights=cc.ravel(), minlength=k0)
        pos[nz, 0] = sr[nz] / counts[nz]
        pos[nz, 1] = sc[nz] / counts[nz]
        for ch in range(img.shape[2]):
            s = np.bincount(flat, weights=img[:, :, ch].ravel(), minlength=k0)
            col[nz, ch] = s[nz] / counts[nz]

    return _enforce_connectivity(assign, img, k0, target_k)


def _enforce_connectivity(assign: np.ndarray, img: np.ndarray, k0: int, target_k: int) -> RegionSet:
    """Split clusters into connected components, absorb fragments below the
    size floor into their most color-similar neighbor, then keep merging the
    smallest regions while the count exceeds twice the target."""
    h, w = assign.shape
    comp = np.full((h, w), -1, dtype=np.int64)
    nxt = 0
    for k in range(k0):
        mask = assign == k
        if not mask.any():
            continue
        lab, n = ndimage.label(mask)
        comp[mask] = lab[mask] + nxt - 1
        nxt += n
    n = nxt
    flat = comp.ravel()
    sizes = np.bincount(flat, minlength=n).astype(np.int64)
    colors = np.zeros((n, img.shape[2]))
    for ch in range(img.shape[2]):
        colors[:, ch] = np.bincount(flat, weights=img[:, :, ch].ravel(), minlength=n)
    colors /= np.maximum(sizes, 1)[:, None]

    neighbors: list[set[int]] = [set() for _ in range(n)]
    for a_grid, b_grid in ((comp[:, :-1], comp[:, 1:]), (comp[:-1, :], comp[1:, :])):
        a, b = a_grid.ravel(), b_grid.ravel()
        d = a != b
        for lo, hi in set(zip(np.minimum(a[d], b[d]).tolist(), np.maximum(a[d], b[d]).tolist())):
            neighbors[lo].add(hi)
            neighbors[hi].add(lo)

    alive = np.ones(n, dtype=bool)
    parent = np.arange(n, dtype=np.int64)
    count = n
    min_size = max(1, (h * w // k0) // 8)
    heap = [(int(sizes[i]), i) for i in range(n)]
    heapq.heapify(heap)

    def merge(victim: int) -> bool:
        cand = neighbors[victim]
        if not cand:
            return False
        tgt = min(cand, key=lambda j: (float(((colors[victim] - colors[j]) ** 2).sum()), j))
        colors[tgt] = (colors[tgt] * sizes[tgt] + colors[victim] * sizes[victim]) / (
            sizes[tgt] + sizes[victim]
        )
        sizes[tgt] += sizes[victim]
        alive[victim] = False
        parent[victim] = tgt
        for nb in neighbors[victim]:
            neighbors[nb].discard(victim)
            if nb != tgt:
                neighbors[nb].add(tgt)
                neighbors[tgt].add(nb)
        neighbors[victim] = set()
        heapq.heappush(heap, (int(sizes[tgt]), tgt))
        return True

    def pop_smallest(size_cap: int):
        # lazy-deletion heap: drop dead or stale (size changed) entries
        while heap:
            size, i = heap[0]
            if not alive[i] or size != sizes[i]:
                heapq.heappop(heap)
                continue
            if size >= size_cap:
                return None
            heapq.heappop(heap)
            return i
        return None

    while True:
        victim = pop_smallest(min_size)
        if victim is None or not merge(victim):
            break
        count -= 1
    huge = int(np.iinfo(np.int64).max)
    while count > 2 * target_k:
        victim = pop_smallest(huge)
        if victim is None or not merge(victim):
            break
        count -= 1

    root = parent.copy()
    for i in range(n):  # resolve merge chains to their final targets
        r = i
        while parent[r] != r:
            r = parent[r]
        root[i] = r
    return RegionSet(_relabel_scan_order(root[comp]), count)


def _relabel_scan_order(comp: np.ndarray) -> np.ndarray:
    """Renumber labels by first appearance in raster order."""
    flat = comp.ravel()
    uniq, first, inv = np.unique(flat, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[order] = np.arange(len(uniq))
    return rank[inv].reshape(comp.shape).astype(np.int32)


def sim_hist(x: np.ndarray, y: np.ndarray) -> float:
    """Histogram intersection: sum of elementwise minima, in [0, 1] for
    probability vectors, symmetric, 1 exactly on identical normalized inputs."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimError(f"histogram dims differ: {x.shape} vs {y.shape}")
    return float(np.minimum(x, y).sum())


def intersect_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise sim_hist between rows of a (n, d) and rows of b (m, d)."""
    if a.shape[1] != b.shape[1]:
        raise DimError(f"histogram dims differ: {a.shape[1]} vs {b.shape[1]}")
    return np.minimum(a[:, None, :], b[None, :, :]).sum(axis=2)


@dataclass
class Descriptors:
    """Per-region feature bundle, one row per region."""

    heat: np.ndarray  # (K, C_h) L1-normalized mean heat
    color: np.ndarray  # (K, 3*bins), per channel normalized then scaled by 1/3
    texture: np.ndarray  # (K, bins)
    sal_g: np.ndarray  # (K, bins)
    sal_l1: np.ndarray  # (K, bins)
    sal_l2: np.ndarray  # (K, bins)

    def __len__(self) -> int:
        return self.heat.shape[0]


def _hist_rows(values: np.ndarray, labels_flat: np.ndarray, k: int, bins: int) -> np.ndarray:
    """Per-region histogram of values in [0,1]; top edge lands in the last bin."""
    idx = np.clip((values * bins).astype(np.int64), 0, bins - 1)
    combined = labels_flat * bins + idx
    counts = np.bincount(combined, minlength=k * bins).reshape(k, bins).astype(np.float64)
    sums = counts.sum(axis=1, keepdims=True)
    return counts / np.maximum(sums, 1e-300)


def describe(
    regions: RegionSet,
    heat: FeatureMap,
    color: FeatureMap,
    texture: FeatureMap,
    sal_g: FeatureMap,
    sal_l1: FeatureMap,
    sal_l2: FeatureMap,
    bins: int = DEFAULT_BINS,
) -> Descriptors:
    h, w = regions.shape
    for m in (heat, color, texture, sal_g, sal_l1, sal_l2):
        if (m.height, m.width) != (h, w):
            raise DimError(f"feature map {m.height}x{m.width} does not match regions {h}x{w}")
    k = regions.count
    flat = regions.labels.ravel()

    hm = heat.data.reshape(-1, heat.channels).astype(np.float64)
    acc = np.zeros((k, heat.channels))
    np.add.at(acc, flat, hm)
    acc /= regions.sizes[:, None]
    sums = acc.sum(axis=1, keepdims=True)
    uniform = np.full(heat.channels, 1.0 / heat.channels)
    mean_heat = np.where(sums > 1e-12, acc / np.maximum(sums, 1e-300), uniform)

    chans = [
        _hist_rows(color.data[:, :, ch].ravel().astype(np.float64), flat, k, bins) / 3.0
        for ch in range(3)
    ]
    return Descriptors(
        heat=mean_heat,
        color=np.concatenate(chans, axis=1),
        texture=_hist_rows(texture.data[:, :, 0].ravel().astype(np.float64), flat, k, bins),
        sal_g=_hist_rows(sal_g.data[:, :, 0].ravel().astype(np.float64), flat, k, bins),
        sal_l1=_hist_rows(sal_l1.data[:, :, 0].ravel().astype(np.float64), flat, k, bins),
        sal_l2=_hist_rows(sal_l2.data[:, :, 0].ravel().astype(np.float64), flat, k, bins),
    )


def edge_similarity(regions: RegionSet, edge: FeatureMap) -> np.ndarray:
    """K x K edge-based similarity: adjacent pairs score 1 minus the mean edge
    magnitude on their shared boundary; non-adjacent pairs take the widest-path
    value (maximize the minimum adjacent score along any path)."""
    if (edge.height, edge.width) != regions.shape:
        raise DimError("edge map does not match regions")
    k = regions.count
    mat = np.zeros((k, k))
    np.fill_diagonal(mat, 1.0)
    edges = []
    flat_edge = edge.data[:, :, 0].ravel().astype(np.float64)
    for (i, j), pix in regions.adjacency.items():
        val = 1.0 - float(flat_edge[pix].mean())
        val = min(max(val, 0.0), 1.0)
        mat[i, j] = mat[j, i] = val
        edges.append((val, i, j))

    # widest paths via descending-weight union-find: when two components join
    # at weight v, every cross pair's bottleneck is exactly v
    parent = list(range(k))
    members: list[list[int]] = [[i] for i in range(k)]

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for val, i, j in sorted(edges, key=lambda t: (-t[0], t[1], t[2])):
        ra, rb = find(i), find(j)
        if ra == rb:
            continue
        for a in members[ra]:
            for b in members[rb]:
                if mat[a, b] < val and a != b and (min(a, b), max(a, b)) not in regions.adjacency:
                    mat[a, b] = mat[b, a] = val
        if len(members[ra]) < len(members[rb]):
            ra, rb = rb, ra
        parent[rb] = ra
        members[ra].extend(members[rb])
        members[rb] = []
    return mat


@dataclass
class ContextMatrix:
    """Entrywise product of edge and saliency similarities, kept with its
    components so refinement variants can be ablated."""

    sim: np.ndarray  # (K, K), symmetric, unit diagonal
    edge: np.ndarray
    sal_g: np.ndarray
    sal_l1: np.ndarray
    sal_l2: np.ndarray


def context_matrix(regions: RegionSet, desc: Descriptors, edge_mat: np.ndarray) -> ContextMatrix:
    k = regions.count
    if edge_mat.shape != (k, k):
        raise DimError("edge matrix shape mismatch")
    sim_g = intersect_matrix(desc.sal_g, desc.sal_g)
    sim_l1 = intersect_matrix(desc.sal_l1, desc.sal_l1)
    sim_l2 = intersect_matrix(desc.sal_l2, desc.sal_l2)
    sim = edge_mat * sim_g * np.maximum(sim_l1, sim_l2)
    np.fill_diagonal(sim, 1.0)
    sim = np.clip(sim, 0.0, 1.0)
    return ContextMatrix(sim, edge_mat, sim_g, sim_l1, sim_l2)


# -- fallback feature maps -------------------------------------------------
# Used when a scene directory carries no externally produced texture, edge,
# or saliency rasters.

def lightness(color: FeatureMap) -> np.ndarray:
    return color.data.mean(axis=2).astype(np.float64)


def fallback_edge(color: FeatureMap) -> FeatureMap:
    lum = lightness(color)
    gx = ndimage.sobel(lum, axis=0, mode="nearest")
    gy = ndimage.sobel(lum, axis=1, mode="nearest")
    mag = np.hypot(gx, gy)
    top = mag.max()
    if top > 0:
        mag = mag / top
    return FeatureMap(mag[:, :, None].astype(np.float32))


def fallback_texture(color: FeatureMap) -> FeatureMap:
    mag = fallback_edge(color).data[:, :, 0].astype(np.float64)
    smooth = ndimage.uniform_filter(mag, size=5, mode="nearest")
    return FeatureMap(np.clip(smooth, 0.0, 1.0)[:, :, None].astype(np.float32))


def fallback_saliency_global(color: FeatureMap) -> FeatureMap:
    img = color.data.astype(np.float64)
    mean = img.reshape(-1, img.shape[2]).mean(axis=0)
    contrast = np.sqrt(((img - mean) ** 2).sum(axis=2)) / np.sqrt(img.shape[2])
    return FeatureMap(np.clip(contrast, 0.0, 1.0)[:, :, None].astype(np.float32))


def view_cells(h: int, w: int, view: int) -> np.ndarray:
    """Crop-assignment raster for the two local saliency views.

    View 1 splits the image into 2x2 half-size cells. View 2 uses the same
    grid shifted by a quarter of each dimension with the shifted lines clamped
    to the image, so every adjacent pixel pair shares a cell in some view.
    """
    if view == 1:
        r_lines = [(h + 1) // 2]
        c_lines = [(w + 1) // 2]
    elif view == 2:
        r_lines = sorted({max(1, h // 4), min(h - 1, (3 * h) // 4)}) if h > 1 else []
        c_lines = sorted({max(1, w // 4), min(w - 1, (3 * w) // 4)}) if w > 1 else []
    else:
        raise RangeError(f"view must be 1 or 2, got {view}")
    r_band = np.searchsorted(np.array(r_lines), np.arange(h), side="right")
    c_band = np.searchsorted(np.array(c_lines), np.arange(w), side="right")
    return (r_band[:, None] * (len(c_lines) + 1) + c_band[None, :]).astype(np.int32)


def fallback_saliency_local(color: FeatureMap, view: int) -> FeatureMap:
    """Per-cell center-surround contrast against the cell's mean color."""
    img = color.data.astype(np.float64)
    h, w, c = img.shape
    cells = view_cells(h, w, view)
    out = np.zeros((h, w))
    for cell in np.unique(cells):
        mask = cells == cell
        mean = img[mask].mean(axis=0)
        out[mask] = np.sqrt(((img[mask] - mean) ** 2).sum(axis=1)) / np.sqrt(c)
    return FeatureMap(np.clip(out, 0.0, 1.0)[:, :, None].astype(np.float32))
