"""Shared fixtures: a small catalog and a tiny prebuilt corpus."""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pixelseed import corpus, synthscene
from pixelseed.catalog import ClassCatalog


@pytest.fixture(scope="session")
def toy_cat() -> ClassCatalog:
    return synthscene.toy_catalog()


def build_small_corpus(root, n_train=4, n_val=0, seed=123, sigma=(0.0, 0.0, 0.0), jobs=1):
    cat = synthscene.toy_catalog()
    sh, sc, ss = sigma
    train = [
        synthscene.random_spec(i, seed, cat, sigma_h=sh, sigma_c=sc, sigma_s=ss,
                               force_all_objects=(i == 0))
        for i in range(n_train)
    ]
    val = [
        synthscene.random_spec(1_000_000 + i, seed, cat, sigma_h=sh, sigma_c=sc, sigma_s=ss)
        for i in range(n_val)
    ]
    seeded = corpus.build_corpus(root, cat, train, val, jobs=jobs)
    corpus.encode_corpus(root, splits=("train", "val") if n_val else ("train",), jobs=jobs)
    return seeded


@pytest.fixture(scope="session")
def clean_corpus(tmp_path_factory):
    """Four zero-noise scenes, encoded, with the seeded catalog."""
    root = tmp_path_factory.mktemp("clean_corpus")
    cat = build_small_corpus(root, n_train=4, seed=123)
    return root, cat


@pytest.fixture(scope="session")
def noisy_corpus(tmp_path_factory):
    """Six scenes at moderate noise, encoded."""
    root = tmp_path_factory.mktemp("noisy_corpus")
    cat = build_small_corpus(root, n_train=6, seed=42, sigma=(0.25, 0.05, 0.05))
    return root, cat


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
