import numpy as np
import pytest
from sklearn.metrics import average_precision_score, roc_auc_score

from firecast.metrics import (
    MetricAccumulator,
    MetricUndefinedError,
    average_precision,
    f1_score_at,
    merge,
    roc_auc,
)


def test_hand_derived_cases_exact():
    scores = np.array([0.9, 0.8, 0.7, 0.6])
    assert average_precision(scores, [1, 1, 0, 0]) == pytest.approx(1.0, abs=1e-12)
    assert average_precision(scores, [1, 0, 1, 0]) == pytest.approx(5.0 / 6.0, abs=1e-12)
    assert roc_auc(scores, [1, 0, 1, 0]) == pytest.approx(0.75, abs=1e-12)
    assert roc_auc([0.9, 0.1], [1, 0]) == pytest.approx(1.0, abs=1e-12)
    # TP=2 FP=1 FN=1 at 0.5
    assert f1_score_at([0.9, 0.8, 0.7, 0.2], [1, 0, 1, 1], 0.5) == pytest.approx(2.0 / 3.0, abs=1e-12)


def test_degenerate_conventions():
    # all scores tied: AP equals prevalence, AUROC is half
    labels = np.array([1, 0, 0, 0, 1, 0, 0, 0])
    tied = np.full(8, 0.4)
    assert average_precision(tied, labels) == pytest.approx(labels.mean(), abs=1e-12)
    assert roc_auc(tied, labels) == pytest.approx(0.5, abs=1e-12)
    # no predicted positives -> F1 = 0
    assert f1_score_at([0.2, 0.3], [1, 0], 1.0) == 0.0
    assert f1_score_at([1.0, 0.0], [1, 0], 0.5) == 1.0


def test_undefined_populations_raise():
    with pytest.raises(MetricUndefinedError):
        average_precision([0.1, 0.2], [0, 0])
    with pytest.raises(MetricUndefinedError):
        roc_auc([0.1, 0.2], [1, 1])


def test_exact_ops_match_sklearn_on_random_data():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = int(rng.integers(10, 3000))
        scores = rng.random(n)
        if rng.random() < 0.5:
            scores = np.round(scores, 2)  # force ties
        labels = (rng.random(n) < 0.2).astype(int)
        if labels.sum() in (0, n):
            continue
        assert average_precision(scores, labels) == pytest.approx(
            average_precision_score(labels, scores), abs=1e-12
        )
        assert roc_auc(scores, labels) == pytest.approx(roc_auc_score(labels, scores), abs=1e-12)


def test_monotone_transform_invariance():
    rng = np.random.default_rng(8)
    scores = rng.random(500)
    labels = (rng.random(500) < 0.1).astype(int)
    labels[0] = 1
    labels[1] = 0
    transformed = np.exp(3.0 * scores) / 50.0  # strictly increasing
    assert average_precision(scores, labels) == pytest.approx(
        average_precision(transformed, labels), abs=1e-12
    )
    assert roc_auc(scores, labels) == pytest.approx(roc_auc(transformed, labels), abs=1e-12)


def test_auroc_of_random_labels_near_half():
    rng = np.random.default_rng(9)
    n = 200_000
    scores = rng.random(n)
    labels = (rng.random(n) < 0.5).astype(int)
    # binomial-style bound: std of AUROC estimate ~ 1/sqrt(min-class count)
    assert abs(roc_auc(scores, labels) - 0.5) < 4.0 / np.sqrt(n / 2)


def _mixture_scores(rng, n, prevalence):
    labels = (rng.random(n) < prevalence).astype(int)
    labels[0] = 1
    labels[1] = 0
    scores = np.where(labels == 1, rng.beta(4, 2, n), rng.beta(2, 4, n))
    return scores, labels


@pytest.mark.parametrize("prevalence", [0.5, 0.016, 0.001])
def test_streaming_matches_exact_oracle(prevalence):
    rng = np.random.default_rng(42)
    scores, labels = _mixture_scores(rng, 100_000, prevalence)
    acc = MetricAccumulator()
    acc.update(scores, labels)
    report = acc.finalize()
    assert abs(report.auprc - average_precision(scores, labels)) <= 1e-3
    assert abs(report.auroc - roc_auc(scores, labels)) <= 1e-3
    assert report.f1_at_half == pytest.approx(f1_score_at(scores, labels, 0.5), abs=1e-12)
    assert report.prevalence == pytest.approx(labels.mean())
    assert report.n_pixels == 100_000


def test_merge_equals_single_pass():
    rng = np.random.default_rng(10)
    scores, labels = _mixture_scores(rng, 20_000, 0.05)
    single = MetricAccumulator().update(scores, labels)
    bounds = sorted(rng.integers(1, 19_999, size=6))
    parts = []
    prev = 0
    for b in [*bounds, 20_000]:
        parts.append(MetricAccumulator().update(scores[prev:b], labels[prev:b]))
        prev = b
    merged = merge(*parts)
    assert np.array_equal(merged.pos_hist, single.pos_hist)
    assert np.array_equal(merged.neg_hist, single.neg_hist)
    assert merged.finalize() == single.finalize()
    # merge order must not matter
    reordered = merge(*parts[::-1])
    assert reordered.finalize() == single.finalize()


def test_merge_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        MetricAccumulator(n_bins=1024).merge(MetricAccumulator(n_bins=2048))


def test_valid_mask_skips_pixels_and_empty_is_undefined():
    acc = MetricAccumulator()
    scores = np.array([0.9, 0.8, 0.1])
    labels = np.array([1, 0, 1])
    acc.update(scores, labels, valid=[True, True, False])
    assert acc.n_pixels == 2
    empty = MetricAccumulator()
    empty.update(scores, labels, valid=np.zeros(3, dtype=bool))
    with pytest.raises(MetricUndefinedError):
        empty.finalize()


def test_scores_outside_unit_interval_rejected():
    with pytest.raises(ValueError):
        MetricAccumulator().update([1.2], [1])


def test_imbalance_property_auroc_flat_auprc_falls():
    """Fixed ranking quality: AUROC is prevalence-invariant while AUPRC
    degrades as the positive class thins out."""
    negatives = np.array([0.6, 0.2])
    positives = np.array([0.8, 0.4])
    reference = None
    last_ap = None
    for prevalence in (0.5, 0.1, 0.016):
        n_pos = int(round(2000 * prevalence))
        n_neg = 2000 - n_pos
        scores = np.concatenate([np.tile(positives, n_pos), np.tile(negatives, n_neg)])
        labels = np.concatenate([np.ones(2 * n_pos, dtype=int), np.zeros(2 * n_neg, dtype=int)])
        auroc = roc_auc(scores, labels)
        ap = average_precision(scores, labels)
        if reference is None:
            reference = auroc
        assert abs(auroc - reference) <= 1e-3
        if last_ap is not None:
            assert ap < last_ap
        last_ap = ap


def test_pr_curve_consistent_with_report():
    rng = np.random.default_rng(11)
    scores, labels = _mixture_scores(rng, 5_000, 0.1)
    acc = MetricAccumulator().update(scores, labels)
    thresholds, precision, recall = acc.pr_curve()
    assert (np.diff(thresholds) < 0).all()
    assert (np.diff(recall) >= 0).all()
    ap = float(np.sum(np.diff(np.concatenate(([0.0], recall))) * precision))
    assert ap == pytest.approx(acc.finalize().auprc, abs=1e-12)
