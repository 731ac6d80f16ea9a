"""Class universe: object/scene split, category groups, location bands, seed pixels."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, RangeError, ValidationError
from .featio import IGNORE

KINDS = ("object", "scene")
N_BANDS = 4


@dataclass(frozen=True)
class ClassDef:
    id: int
    name: str
    kind: str  # "object" or "scene"
    category: str
    allowed_bands: frozenset[int]
    seed: tuple[str, int, int]  # (image id, row, col)


@dataclass
class ClassCatalog:
    classes: list[ClassDef] = field(default_factory=list)

    def __post_init__(self):
        self._by_id = {c.id: c for c in self.classes}

    def ids(self) -> list[int]:
        return [c.id for c in self.classes]

    def by_id(self, cid: int) -> ClassDef:
        return self._by_id[cid]

    def objects(self) -> list[ClassDef]:
        return [c for c in self.classes if c.kind == "object"]

    def scenes(self) -> list[ClassDef]:
        return [c for c in self.classes if c.kind == "scene"]

    @property
    def c_obj(self) -> int:
        return len(self.objects())

    @property
    def c_sce(self) -> int:
        return len(self.scenes())

    def categories(self) -> list[str]:
        seen: dict[str, None] = {}
        for c in self.classes:
            seen.setdefault(c.category, None)
        return list(seen)

    def category_map(self) -> dict[int, int]:
        order = {name: i for i, name in enumerate(self.categories())}
        return {c.id: order[c.category] for c in self.classes}


def validate_catalog(cat: ClassCatalog) -> ClassCatalog:
    seen_ids: set[int] = set()
    seen_names: set[str] = set()
    for c in cat.classes:
        if c.id == IGNORE:
            raise ValidationError(f"class {c.name!r} uses the ignore id {IGNORE}")
        if not 0 <= c.id < IGNORE:
            raise ValidationError(f"class id {c.id} out of range 0..254")
        if c.id in seen_ids:
            raise ValidationError(f"duplicate class id {c.id}")
        if c.name in seen_names:
            raise ValidationError(f"duplicate class name {c.name!r}")
        if c.kind not in KINDS:
            raise ValidationError(f"class {c.name!r}: kind must be object or scene")
        if not c.allowed_bands:
            raise ValidationError(f"class {c.name!r}: empty band set")
        if any(b not in range(N_BANDS) for b in c.allowed_bands):
            raise ValidationError(f"class {c.name!r}: bands outside 0..3")
        if c.seed is None:
            raise ValidationError(f"class {c.name!r}: missing seed pixel")
        seen_ids.add(c.id)
        seen_names.add(c.name)
    return cat


def bands_allowing(catalog: ClassCatalog, band: int) -> set[int]:
    """Ids of classes permitted to appear in the given vertical band."""
    if band not in range(N_BANDS):
        raise RangeError(f"band {band} outside 0..3")
    return {c.id for c in catalog.classes if band in c.allowed_bands}


def load_catalog(path) -> ClassCatalog:
    """Parse the line-oriented catalog format; see save_catalog for the layout."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    classes: list[ClassDef] = []
    saw_header = False
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if not saw_header:
            if stripped != "CATALOG v1":
                raise ParseError(f"{path}:{lineno}: expected header 'CATALOG v1'")
            saw_header = True
            continue
        parts = line.split("\t")
        if len(parts) != 8:
            raise ParseError(f"{path}:{lineno}: expected 8 tab-separated fields, got {len(parts)}")
        try:
            cid = int(parts[0])
            bands = frozenset(int(b) for b in parts[4].split(",") if b != "")
            seed = (parts[5], int(parts[6]), int(parts[7]))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        classes.append(ClassDef(cid, parts[1], parts[2], parts[3], bands, seed))
    if not saw_header:
        raise ParseError(f"{path}: missing 'CATALOG v1' header")
    return validate_catalog(ClassCatalog(classes))


def save_catalog(catalog: ClassCatalog, path) -> None:
    lines = ["CATALOG v1"]
    for c in catalog.classes:
        bands = ",".join(str(b) for b in sorted(c.allowed_bands))
        img, r, col = c.seed
        lines.append(f"{c.id}\t{c.name}\t{c.kind}\t{c.category}\t{bands}\t{img}\t{r}\t{col}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# Default 19-class driving-scene table. Ids follow the conventional 0-18
# train-id ordering; the band table is configurable data, not a fixed rule.
_DEFAULT_ROWS = [
    # id, name, kind, category, bands
    (0, "road", "scene", "flat", (2, 3)),
    (1, "sidewalk", "scene", "flat", (2, 3)),
    (2, "building", "scene", "construction", (0, 1, 2, 3)),
    (3, "wall", "scene", "construction", (0, 1, 2, 3)),
    (4, "fence", "object", "construction", (0, 1, 2, 3)),
    (5, "pole", "object", "object", (0, 1, 2, 3)),
    (6, "traffic light", "object", "object", (0, 1, 2, 3)),
    (7, "traffic sign", "object", "object", (0, 1, 2, 3)),
    (8, "vegetation", "scene", "nature", (0, 1, 2, 3)),
    (9, "terrain", "scene", "nature", (0, 1, 2, 3)),
    (10, "sky", "scene", "sky", (0, 1)),
    (11, "person", "object", "human", (1, 2, 3)),
    (12, "rider", "object", "human", (1, 2, 3)),
    (13, "car", "object", "vehicle", (1, 2, 3)),
    (14, "truck", "object", "vehicle", (1, 2, 3)),
    (15, "bus", "object", "vehicle", (1, 2, 3)),
    (16, "train", "object", "vehicle", (1, 2, 3)),
    (17, "motorcycle", "object", "vehicle", (1, 2, 3)),
    (18, "bicycle", "object", "vehicle", (1, 2, 3)),
]


def default_catalog(seeds: dict[int, tuple[str, int, int]] | None = None) -> ClassCatalog:
    """The shipped 19-class driving catalog. Seeds default to placeholders
    on image 'seed_image_0'; real pipelines supply their own."""
    classes = []
    for cid, name, kind, category, bands in _DEFAULT_ROWS:
        seed = (seeds or {}).get(cid, ("seed_image_0", 0, cid))
        classes.append(ClassDef(cid, name, kind, category, frozenset(bands), seed))
    return validate_catalog(ClassCatalog(classes))
