"""Corpus layout, build/encode round trips, seed selection, fallbacks."""
from __future__ import annotations

import numpy as np
import pytest

from pixelseed import catalog as catmod
from pixelseed import corpus, featio, superpix, synthscene
from pixelseed.errors import MissingSeedError


def test_scene_names_sort_in_index_order():
    names = [corpus.scene_name(i) for i in (0, 2, 10, 100)]
    assert names == sorted(names)
    assert names[0] == "scene_000"


def test_build_writes_layout_and_seeded_catalog(clean_corpus):
    root, cat = clean_corpus
    dirs = corpus.scene_dirs(root, "train")
    assert len(dirs) == 4
    d = dirs[0]
    for name in corpus.INPUT_MAPS:
        assert (d / f"{name}.fmap").exists()
    assert (d / "plan.txt").exists()
    assert (d / "gt.pgm").exists()
    assert len(list((d / "heat").glob("slice_*.fmap"))) == 15
    # every class seeded, each seed pixel carrying its own class in the gt
    loaded = catmod.load_catalog(root / "catalog.txt")
    assert sorted(c.id for c in loaded.classes) == sorted(c.id for c in cat.classes)
    for c in loaded.classes:
        image, r, col = c.seed
        split, scene = image.split("/")
        gt = featio.read_labelmap(root / split / scene / "gt.pgm")
        assert gt.labels[r, col] == c.id


def test_seed_prefers_earliest_train_scene(clean_corpus):
    root, cat = clean_corpus
    # scene_000 is generated with every object class present, so all seeds
    # should point there
    for c in cat.classes:
        assert c.seed[0] == "train/scene_000"


def test_build_fails_when_class_never_appears(tmp_path):
    cat = synthscene.toy_catalog()
    spec = synthscene.SceneSpec(seed=0, height=24, width=36)  # bands only, no objects
    with pytest.raises(MissingSeedError):
        corpus.build_corpus(tmp_path, cat, [spec])


def test_encode_persists_reloadable_artifacts(clean_corpus):
    root, _ = clean_corpus
    d = corpus.scene_dirs(root, "train")[0]
    for name in corpus.DESC_FILES + corpus.CTX_FILES + ("fused",):
        assert (d / f"{name}.fmap").exists()
    assert (d / "regions.pgm").exists()
    assert (d / "regions.txt").read_text().startswith("REGIONS v1")

    enc = corpus.load_encoded(d)
    fresh = corpus.encode_scene(d)
    assert enc.name == d.name
    np.testing.assert_array_equal(enc.regions.labels, fresh.regions.labels)
    np.testing.assert_allclose(enc.desc.heat, fresh.desc.heat, atol=1e-6)
    np.testing.assert_allclose(enc.ctx.sim, fresh.ctx.sim, atol=1e-6)
    np.testing.assert_array_equal(enc.gt.labels, fresh.gt.labels)


def test_parallel_build_matches_serial(tmp_path):
    cat = synthscene.toy_catalog()
    specs = [synthscene.random_spec(i, 7, cat, force_all_objects=(i == 0)) for i in range(3)]
    cat_a = corpus.build_corpus(tmp_path / "a", cat, specs, jobs=1)
    cat_b = corpus.build_corpus(tmp_path / "b", cat, specs, jobs=3)
    assert [c.seed for c in cat_a.classes] == [c.seed for c in cat_b.classes]
    for d_a, d_b in zip(corpus.scene_dirs(tmp_path / "a", "train"), corpus.scene_dirs(tmp_path / "b", "train")):
        assert (d_a / "color.fmap").read_bytes() == (d_b / "color.fmap").read_bytes()
        assert (d_a / "gt.pgm").read_bytes() == (d_b / "gt.pgm").read_bytes()


def test_encode_falls_back_for_missing_optional_maps(tmp_path):
    cat = synthscene.toy_catalog()
    spec = synthscene.random_spec(0, 5, cat, force_all_objects=True)
    art = synthscene.generate_scene(spec, cat)
    d = tmp_path / "train" / "scene_000"
    corpus.write_scene_inputs(d, art)
    for name in ("texture", "edge", "sal_g", "sal_l1", "sal_l2"):
        (d / f"{name}.fmap").unlink()
    enc = corpus.encode_scene(d)
    assert enc.regions.count > 1
    # descriptors stay normalized even on derived maps
    np.testing.assert_allclose(enc.desc.texture.sum(axis=1), 1.0, atol=1e-6)
    np.testing.assert_allclose(enc.desc.sal_g.sum(axis=1), 1.0, atol=1e-6)


def test_region_raster_uses_16_bit_when_needed(tmp_path):
    # counts above 255 must survive the pgm round trip
    labels = np.arange(300, dtype=np.int64).reshape(12, 25)
    featio.write_pgm(labels, tmp_path / "r.pgm", maxval=299)
    back, maxval = featio.read_pgm(tmp_path / "r.pgm")
    assert maxval == 299
    np.testing.assert_array_equal(back, labels)
