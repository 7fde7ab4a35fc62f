"""Lesion matching, detection scores and cohort aggregation."""

import numpy as np
import pytest

from conftest import make_mask, mask_from_coords, random_mask
from lesionbench.labeling import label_components
from lesionbench.lesion_metrics import (
    LesionMatchResult,
    aggregate,
    aggregate_values,
    detection_metrics,
    match_lesions,
    Z90,
)
from lesionbench.volume_io import GeometryMismatchError
from oracles import brute_force_match


def labeled(coords, shape=(8, 8, 8), spacing=(1.0, 1.0, 1.0)):
    return label_components(mask_from_coords(shape, coords, spacing), 26)


def test_single_voxel_overlap_is_detected():
    gt = labeled([(0, 0, 0), (0, 0, 1), (0, 0, 2)])
    pred = labeled([(0, 0, 2), (0, 0, 3), (0, 0, 4)])
    match = match_lesions(gt, pred)
    assert match.tpl_count == 1
    assert match.fpl == ()
    assert match.fnl == ()
    assert match.tpl[0].gt_labels == (1,)
    assert match.tpl[0].overlap_voxels == (1,)


def test_disjoint_components_are_fpl_and_fnl():
    gt = labeled([(0, 0, 0)])
    pred = labeled([(5, 5, 5)])
    match = match_lesions(gt, pred)
    assert match.tpl == ()
    assert match.fpl == (1,)
    assert match.fnl == (1,)


def test_one_prediction_spanning_two_gt_lesions():
    gt = labeled([(0, 0, 0), (0, 0, 4)])  # two separated gt lesions
    pred = labeled([(0, 0, c) for c in range(5)])  # one bridge component
    match = match_lesions(gt, pred)
    assert match.tpl_count == 1
    assert match.tpl[0].gt_labels == (1, 2)
    assert match.fnl == ()
    assert match.fpl == ()


def test_counting_identity_and_fnl_bound():
    rng = np.random.default_rng(21)
    for _ in range(25):
        shape = tuple(int(d) for d in rng.integers(4, 13, size=3))
        gt = label_components(make_mask(rng.random(shape) < 0.2), 26)
        pred = label_components(make_mask(rng.random(shape) < 0.2), 26)
        match = match_lesions(gt, pred)
        assert match.tpl_count + match.fpl_count == pred.component_count
        assert match.fnl_count <= gt.component_count


def test_reflexive_match_has_no_errors():
    rng = np.random.default_rng(22)
    for _ in range(10):
        labels = label_components(make_mask(random_mask(rng, max_dim=10)), 26)
        match = match_lesions(labels, labels)
        assert match.fpl == () and match.fnl == ()
        assert match.tpl_count == labels.component_count


def test_matches_brute_force_classification():
    rng = np.random.default_rng(23)
    for _ in range(40):
        shape = tuple(int(d) for d in rng.integers(2, 13, size=3))
        gt = label_components(make_mask(rng.random(shape) < 0.25), 26)
        pred = label_components(make_mask(rng.random(shape) < 0.25), 26)
        match = match_lesions(gt, pred)
        tpl_ref, fpl_ref, fnl_ref, overlaps_ref = brute_force_match(
            gt.labels, pred.labels
        )
        assert {ov.pred_label for ov in match.tpl} == tpl_ref
        assert set(match.fpl) == fpl_ref
        assert set(match.fnl) == fnl_ref
        for ov in match.tpl:
            assert dict(zip(ov.gt_labels, ov.overlap_voxels)) == overlaps_ref[
                ov.pred_label
            ]


def test_grid_mismatch_raises():
    gt = labeled([(0, 0, 0)], shape=(4, 4, 4))
    pred = labeled([(0, 0, 0)], shape=(4, 4, 5))
    with pytest.raises(GeometryMismatchError):
        match_lesions(gt, pred)


def test_volumes_scale_with_spacing():
    gt = labeled([(0, 0, 0), (0, 0, 1)], spacing=(1.0, 1.0, 1.2))
    match = match_lesions(gt, gt)
    assert match.gt_volumes_mm3[1] == pytest.approx(2.4)


def test_detection_metrics_substitution():
    gt = labeled([(0, 0, 0), (0, 2, 0), (0, 4, 0), (0, 6, 0), (2, 0, 0)])
    pred = labeled([(0, 0, 0), (0, 2, 0), (0, 4, 0), (5, 5, 5)])
    match = match_lesions(gt, pred)
    metrics = detection_metrics(match, gt_empty=False)
    assert (metrics.tpl_count, metrics.fpl_count, metrics.fnl_count) == (3, 1, 2)
    assert metrics.precision == pytest.approx(0.75)
    assert metrics.recall == pytest.approx(0.6)
    assert metrics.f1 == pytest.approx(6 / 9)


def test_gt_empty_clean_prediction():
    empty = labeled([])
    metrics = detection_metrics(match_lesions(empty, empty), gt_empty=True)
    assert metrics.precision == 1.0
    assert metrics.f1 == 1.0
    assert metrics.recall is None


def test_gt_empty_with_false_positives():
    empty = labeled([])
    pred = labeled([(0, 0, 0), (4, 4, 4)])
    metrics = detection_metrics(match_lesions(empty, pred), gt_empty=True)
    assert metrics.precision == 0.0
    assert metrics.f1 == 0.0
    assert metrics.recall is None
    assert metrics.fpl_count == 2


def test_empty_prediction_on_lesions_scores_zero():
    gt = labeled([(0, 0, 0)])
    pred = labeled([])
    metrics = detection_metrics(match_lesions(gt, pred), gt_empty=False)
    assert metrics.precision == 0.0
    assert metrics.recall == 0.0
    assert metrics.f1 == 0.0


def test_match_invariant_under_component_relabeling():
    # Mirroring the grid permutes component ids but not the partition sizes.
    rng = np.random.default_rng(24)
    for _ in range(10):
        g = rng.random((9, 9, 9)) < 0.2
        p = rng.random((9, 9, 9)) < 0.2
        a = match_lesions(
            label_components(make_mask(g), 26), label_components(make_mask(p), 26)
        )
        b = match_lesions(
            label_components(make_mask(g[::-1].copy()), 26),
            label_components(make_mask(p[::-1].copy()), 26),
        )
        assert (a.tpl_count, a.fpl_count, a.fnl_count) == (
            b.tpl_count,
            b.fpl_count,
            b.fnl_count,
        )


def test_aggregate_mean_and_se():
    row = aggregate_values([0.5, 0.7], "dsc")
    assert row.mean == pytest.approx(0.6)
    assert row.se == pytest.approx(0.1, abs=1e-12)
    assert row.ci90_low == pytest.approx(0.6 - Z90 * 0.1)
    assert row.ci90_high == pytest.approx(0.6 + Z90 * 0.1)
    assert row.n == 2 and row.excluded == 0
    assert not row.degenerate_n


def test_aggregate_single_value_is_degenerate():
    row = aggregate_values([0.4], "f1")
    assert row.mean == 0.4
    assert row.se == 0.0
    assert row.degenerate_n


def test_aggregate_excludes_undefined():
    row = aggregate_values([0.5, None, 0.7], "recall")
    assert row.n == 2 and row.excluded == 1
    assert row.mean == pytest.approx(0.6)


def test_aggregate_all_undefined():
    row = aggregate_values([None, None], "recall")
    assert row.n == 0 and row.excluded == 2
    assert row.mean is None and row.se is None


def test_aggregate_rows_from_mappings():
    rows = aggregate(
        [{"dsc": 1.0, "recall": None}, {"dsc": 0.5, "recall": 0.25}]
    )
    by_metric = {r.metric: r for r in rows}
    assert by_metric["dsc"].mean == pytest.approx(0.75)
    assert by_metric["recall"].n == 1


def test_aggregate_rejects_empty_input():
    with pytest.raises(ValueError):
        aggregate([])
