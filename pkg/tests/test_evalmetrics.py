"""Metrics against the loop oracles plus the abstention conventions."""
from __future__ import annotations

import numpy as np
import pytest

from oracles import confusion_loop, miou_loop, pr_loop
from pixelseed import evalmetrics
from pixelseed.errors import DimError
from pixelseed.featio import IGNORE, LabelMap


def random_maps(rng, cat, shape=(12, 17), ignore_rate=0.1):
    ids = sorted(cat.ids())
    gt = rng.choice(ids, size=shape).astype(np.uint8)
    pred = rng.choice(ids, size=shape).astype(np.uint8)
    gt[rng.random(shape) < ignore_rate] = IGNORE
    pred[rng.random(shape) < ignore_rate] = IGNORE
    return LabelMap(pred), LabelMap(gt)


def test_confusion_matches_loop(rng, toy_cat):
    ids = tuple(sorted(toy_cat.ids()))
    for _ in range(30):
        pred, gt = random_maps(rng, toy_cat)
        cm = evalmetrics.confusion(pred, gt, toy_cat)
        assert cm.ids == ids
        np.testing.assert_array_equal(cm.counts, confusion_loop(pred.labels, gt.labels, ids))
        keep = (pred.labels != IGNORE) & (gt.labels != IGNORE)
        assert cm.ignored == int((~keep).sum())


def test_confusion_rejects_shape_mismatch(toy_cat):
    with pytest.raises(DimError):
        evalmetrics.confusion(
            LabelMap(np.zeros((4, 6), dtype=np.uint8)),
            LabelMap(np.zeros((4, 7), dtype=np.uint8)),
            toy_cat,
        )


def test_confusion_add_accumulates(rng, toy_cat):
    p1, g1 = random_maps(rng, toy_cat)
    p2, g2 = random_maps(rng, toy_cat)
    a = evalmetrics.confusion(p1, g1, toy_cat)
    b = evalmetrics.confusion(p2, g2, toy_cat)
    total = a + b
    np.testing.assert_array_equal(total.counts, a.counts + b.counts)
    assert total.ignored == a.ignored + b.ignored


def test_pr_matches_loop(rng, toy_cat):
    for _ in range(30):
        pred, gt = random_maps(rng, toy_cat)
        table = evalmetrics.per_class_pr(pred, gt, toy_cat)
        oracle = pr_loop(pred.labels, gt.labels, sorted(toy_cat.ids()))
        assert set(table) == set(oracle)
        for cid, (tp, fp, fn) in oracle.items():
            prec, rec = table[cid]
            if tp + fp == 0:
                assert np.isnan(prec)
            else:
                assert prec == pytest.approx(tp / (tp + fp), abs=1e-12)
            assert rec == pytest.approx(tp / (tp + fn), abs=1e-12)


def test_predicted_ignore_costs_recall_not_precision(toy_cat):
    gt = LabelMap(np.full((10, 10), 4, dtype=np.uint8))
    pred_labels = np.full((10, 10), 4, dtype=np.uint8)
    pred_labels[:, :5] = IGNORE
    prec, rec = evalmetrics.macro_pr(LabelMap(pred_labels), gt, toy_cat)
    assert prec == pytest.approx(1.0)
    assert rec == pytest.approx(0.5)


def test_twenty_percent_label_noise_recall(toy_cat):
    # swap exactly a fifth of one class's pixels to another class
    gt = LabelMap(np.full((10, 10), 4, dtype=np.uint8))
    pred_labels = np.full((10, 10), 4, dtype=np.uint8)
    pred_labels.ravel()[:20] = 5
    table = evalmetrics.per_class_pr(LabelMap(pred_labels), gt, toy_cat)
    prec, rec = table[4]
    assert prec == pytest.approx(1.0, abs=1e-12)
    assert rec == pytest.approx(0.8, abs=1e-12)
    # class 5 is absent from ground truth so it contributes no row
    assert 5 not in table


def test_all_ignored_gives_nan(toy_cat):
    gt = LabelMap(np.full((4, 6), IGNORE, dtype=np.uint8))
    pred = LabelMap(np.full((4, 6), 4, dtype=np.uint8))
    prec, rec = evalmetrics.macro_pr(pred, gt, toy_cat)
    assert np.isnan(prec) and np.isnan(rec)


def test_never_predicting_makes_precision_nan(toy_cat):
    gt = LabelMap(np.full((4, 6), 4, dtype=np.uint8))
    pred = LabelMap(np.full((4, 6), IGNORE, dtype=np.uint8))
    prec, rec = evalmetrics.macro_pr(pred, gt, toy_cat)
    assert np.isnan(prec)
    assert rec == 0.0


def test_miou_matches_loop(rng, toy_cat):
    for _ in range(30):
        pred, gt = random_maps(rng, toy_cat)
        cm = evalmetrics.confusion(pred, gt, toy_cat)
        got, table = evalmetrics.miou(cm, toy_cat, grouping="class")
        assert got == pytest.approx(miou_loop(cm.counts), abs=1e-12)
        for i, cid in enumerate(cm.ids):
            present = cm.counts[i].sum() + cm.counts[:, i].sum() > 0
            assert (cid in table) == present


def test_miou_skips_absent_classes(toy_cat):
    # only classes 0 and 1 appear anywhere
    gt = LabelMap(np.array([[0, 0, 1, 1]], dtype=np.uint8))
    pred = LabelMap(np.array([[0, 1, 1, 1]], dtype=np.uint8))
    cm = evalmetrics.confusion(pred, gt, toy_cat)
    value, table = evalmetrics.miou(cm, toy_cat)
    assert set(table) == {0, 1}
    assert table[0] == pytest.approx(1 / 2)
    assert table[1] == pytest.approx(2 / 3)
    assert value == pytest.approx((1 / 2 + 2 / 3) / 2)


def test_miou_category_folds_counts(toy_cat):
    # sign (6) and pole (7) share a category; confusing them is free there
    gt = LabelMap(np.array([[6, 6, 7, 7]], dtype=np.uint8))
    pred = LabelMap(np.array([[7, 6, 6, 7]], dtype=np.uint8))
    cm = evalmetrics.confusion(pred, gt, toy_cat)
    by_class, _ = evalmetrics.miou(cm, toy_cat, grouping="class")
    by_cat, table = evalmetrics.miou(cm, toy_cat, grouping="category")
    assert by_class == pytest.approx(1 / 3)
    assert by_cat == pytest.approx(1.0)
    assert set(table) == {"object"}


def test_miou_rejects_unknown_grouping(toy_cat):
    cm = evalmetrics.confusion(
        LabelMap(np.zeros((4, 6), dtype=np.uint8)),
        LabelMap(np.zeros((4, 6), dtype=np.uint8)),
        toy_cat,
    )
    with pytest.raises(ValueError):
        evalmetrics.miou(cm, toy_cat, grouping="pixels")
