"""Bit-exact raster storage: FMAP1 float maps, PGM label maps, slice plans."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CapacityError, FormatError, RangeError, ValidationError

IGNORE = 255

FMAP_MAGIC = b"FMAP1"
# Desk-scale cap: ~1 GiB of f32 payload. 1024x2048x1000 maps are rejected.
DEFAULT_ELEMENT_CAP = 1 << 28


@dataclass
class FeatureMap:
    """Dense H x W x C float raster; every value finite."""

    data: np.ndarray  # float32, shape (H, W, C)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise FormatError(f"feature map must be HxWxC, got ndim={arr.ndim}")
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass
class LabelMap:
    """Per-pixel integer labels in catalog ids plus 255 for ignore."""

    labels: np.ndarray  # uint8, shape (H, W)
    scores: np.ndarray | None = None  # float32 (H, W) in [0,1], optional

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.labels.ndim != 2:
            raise FormatError("label map must be 2-d")
        if self.scores is not None:
            self.scores = np.asarray(self.scores, dtype=np.float32)
            if self.scores.shape != self.labels.shape:
                raise FormatError("scores shape must match labels")

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def validate(self, catalog) -> None:
        ids = np.unique(self.labels)
        known = set(catalog.ids()) | {IGNORE}
        bad = [int(i) for i in ids if int(i) not in known]
        if bad:
            raise ValidationError(f"labels not in catalog: {bad}")


@dataclass(frozen=True)
class Slice:
    index: int
    row: int
    col: int
    height: int
    width: int

    @property
    def center(self) -> tuple[float, float]:
        return (self.row + (self.height - 1) / 2.0, self.col + (self.width - 1) / 2.0)

    def contains(self, r: int, c: int) -> bool:
        return self.row <= r < self.row + self.height and self.col <= c < self.col + self.width


@dataclass
class SlicePlan:
    """15 overlapping half-height, third-width slices covering the image."""

    rows: int
    cols: int
    slices: list[Slice] = field(default_factory=list)


def make_slice_plan(rows: int, cols: int) -> SlicePlan:
    """Corner grid at (rows*m/4, cols*n/6), m in 0..2, n in 0..4, floored;
    slice size ceil(rows/2) x ceil(cols/3), clamped at the borders."""
    if rows < 4 or cols < 6:
        raise RangeError(f"image too small for a slice plan: {rows}x{cols}")
    sh, sw = -(-rows // 2), -(-cols // 3)
    slices = []
    idx = 0
    for m in range(3):
        for n in range(5):
            top = (rows * m) // 4
            left = (cols * n) // 6
            h = min(sh, rows - top)
            w = min(sw, cols - left)
            slices.append(Slice(idx, top, left, h, w))
            idx += 1
    return SlicePlan(rows, cols, slices)


def write_slice_plan(plan: SlicePlan, path) -> None:
    lines = ["SLICEPLAN v1", f"dims {plan.rows} {plan.cols}"]
    for s in plan.slices:
        cr, cc = s.center
        lines.append(f"{s.index} {s.row} {s.col} {s.height} {s.width} {cr:g} {cc:g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_slice_plan(path) -> SlicePlan:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != "SLICEPLAN v1":
        raise FormatError(f"{path}: missing SLICEPLAN v1 header")
    if len(lines) < 2 or not lines[1].startswith("dims "):
        raise FormatError(f"{path}: missing dims line")
    _, l, w = lines[1].split()
    plan = SlicePlan(int(l), int(w))
    for ln in lines[2:]:
        ln = ln.strip()
        if not ln:
            continue
        parts = ln.split()
        if len(parts) != 7:
            raise FormatError(f"{path}: bad slice line {ln!r}")
        idx, top, left, h, sw = (int(p) for p in parts[:5])
        plan.slices.append(Slice(idx, top, left, h, sw))
    if len(plan.slices) != 15:
        raise FormatError(f"{path}: expected 15 slices, got {len(plan.slices)}")
    return plan


def write_fmap(fmap: FeatureMap | np.ndarray, path, cap: int = DEFAULT_ELEMENT_CAP) -> None:
    if not isinstance(fmap, FeatureMap):
        fmap = FeatureMap(fmap)
    n = fmap.data.size
    if n > cap:
        raise CapacityError(f"{n} elements exceeds cap {cap}")
    if not np.isfinite(fmap.data).all():
        raise ValueError("feature map contains NaN or Inf")
    with open(path, "wb") as fh:
        fh.write(FMAP_MAGIC + struct.pack("<III", fmap.height, fmap.width, fmap.channels))
        fh.write(fmap.data.astype("<f4").tobytes(order="C"))


def read_fmap(path, cap: int = DEFAULT_ELEMENT_CAP) -> FeatureMap:
    raw = Path(path).read_bytes()
    if len(raw) < 17 or raw[:5] != FMAP_MAGIC:
        raise FormatError(f"{path}: not an FMAP1 file")
    h, w, c = struct.unpack("<III", raw[5:17])
    n = h * w * c
    if n > cap:
        raise CapacityError(f"{path}: {n} elements exceeds cap {cap}")
    expected = 17 + 4 * n
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(raw)}")
    data = np.frombuffer(raw[17:], dtype="<f4").reshape(h, w, c)
    return FeatureMap(data.copy())


def _read_pgm_tokens(raw: bytes, path) -> tuple[bytes, int, int, int, int]:
    # PGM header: magic, width, height, maxval as whitespace-separated tokens,
    # '#' comments allowed, then a single whitespace byte before the payload.
    if raw[:2] != b"P5":
        raise FormatError(f"{path}: not a P5 PGM")
    tokens, pos, tok = [], 2, b""
    while len(tokens) < 3 and pos < len(raw):
        b = raw[pos:pos + 1]
        if b == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif b.isspace():
            if tok:
                tokens.append(tok)
                tok = b""
        else:
            tok += b
        pos += 1
    if len(tokens) < 3:
        raise FormatError(f"{path}: truncated PGM header")
    w, h, maxval = (int(t) for t in tokens)
    return raw[pos:], w, h, maxval, pos


def write_pgm(raster: np.ndarray, path, maxval: int | None = None) -> None:
    raster = np.asarray(raster)
    if maxval is None:
        maxval = max(1, int(raster.max(initial=0)))
    if maxval > 65535:
        raise FormatError(f"PGM maxval {maxval} out of range")
    h, w = raster.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    if maxval < 256:
        payload = raster.astype(np.uint8).tobytes()
    else:
        payload = raster.astype(">u2").tobytes()
    Path(path).write_bytes(header + payload)


def read_pgm(path) -> tuple[np.ndarray, int]:
    raw = Path(path).read_bytes()
    body, w, h, maxval, _ = _read_pgm_tokens(raw, path)
    if maxval < 256:
        expected = w * h
        if len(body) != expected:
            raise FormatError(f"{path}: expected {expected} payload bytes, got {len(body)}")
        arr = np.frombuffer(body, dtype=np.uint8).reshape(h, w)
    else:
        expected = 2 * w * h
        if len(body) != expected:
            raise FormatError(f"{path}: expected {expected} payload bytes, got {len(body)}")
        arr = np.frombuffer(body, dtype=">u2").reshape(h, w).astype(np.int32)
    return arr.copy(), maxval


def write_ppm(rgb: np.ndarray, path) -> None:
    """Binary P6 color image; rgb must be uint8 with shape (H, W, 3)."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise FormatError(f"PPM wants uint8 (H, W, 3), got {rgb.dtype} {rgb.shape}")
    h, w = rgb.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + rgb.tobytes())


def scores_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + "_scores.fmap")


def write_labelmap(lmap: LabelMap, path) -> None:
    write_pgm(lmap.labels, path, maxval=255)
    if lmap.scores is not None:
        write_fmap(FeatureMap(lmap.scores[:, :, None]), scores_path(path))


def read_labelmap(path, catalog=None) -> LabelMap:
    arr, maxval = read_pgm(path)
    if maxval != 255:
        raise FormatError(f"{path}: label maps require maxval 255, got {maxval}")
    scores = None
    sp = scores_path(path)
    if sp.exists():
        scores = read_fmap(sp).data[:, :, 0]
    lmap = LabelMap(arr.astype(np.uint8), scores)
    if catalog is not None:
        lmap.validate(catalog)
    return lmap
