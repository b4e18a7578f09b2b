"""Ranking and threshold metrics for extremely imbalanced binary pixels.

Exact routines sort the full score vector; the streaming accumulator keeps
fixed-size score histograms (plus exact confusion counts at declared
thresholds) so whole-globe, multi-step evaluations run in bounded memory and
can be merged across workers.

Conventions, fixed and tested: average precision uses step interpolation
with tied scores grouped into one threshold; AUROC uses midrank tie
correction; a pixel is predicted positive when its score is >= the
threshold. Metrics over a population with no positive (or, for AUROC, no
negative) pixels raise :class:`MetricUndefinedError` instead of returning a
silent default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .validation import as_float_array, check_binary_labels, check_same_length

DEFAULT_BINS = 8192


class MetricUndefinedError(ValueError):
    """Metric has no defined value on this input population."""


# ---------------------------------------------------------------------------
# exact metrics


def _sorted_tie_groups(scores, labels):
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    last_of_group = np.nonzero(np.append(s[1:] != s[:-1], True))[0]
    tp = np.cumsum(y)[last_of_group]
    predicted = last_of_group + 1
    return tp.astype(np.float64), predicted.astype(np.float64)


def average_precision(scores, labels):
    """Step-interpolated area under the precision-recall curve."""
    scores = as_float_array(scores)
    labels = check_binary_labels(labels)
    check_same_length(scores, labels)
    n_pos = labels.sum()
    if n_pos == 0:
        raise MetricUndefinedError("average precision undefined without positive labels")
    tp, predicted = _sorted_tie_groups(scores, labels)
    precision = tp / predicted
    recall = tp / n_pos
    delta_recall = np.diff(np.concatenate(([0.0], recall)))
    return float(np.sum(delta_recall * precision))


def roc_auc(scores, labels):
    """Probability a positive outranks a negative, ties counting half."""
    scores = as_float_array(scores)
    labels = check_binary_labels(labels)
    check_same_length(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("AUROC undefined without both classes")
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    group_start = np.cumsum(counts) - counts
    midrank = group_start + (counts + 1) / 2.0  # 1-based midranks
    rank_sum = midrank[inverse][labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def f1_score_at(scores, labels, threshold):
    """F1 with scores >= threshold predicted positive; 0 when degenerate."""
    scores = as_float_array(scores)
    labels = check_binary_labels(labels)
    check_same_length(scores, labels)
    predicted = scores >= threshold
    tp = int(np.sum(predicted & (labels == 1)))
    fp = int(predicted.sum()) - tp
    fn = int(labels.sum()) - tp
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


# ---------------------------------------------------------------------------
# streaming accumulator


@dataclass(frozen=True)
class MetricsReport:
    auprc: float
    auroc: float
    f1_at_half: float
    f1_best: float
    f1_best_threshold: float
    prevalence: float
    n_pixels: int
    n_positive: int

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


class MetricAccumulator:
    """Mergeable streaming state: score histograms per class plus exact
    confusion counts at declared thresholds. Merging is associative and
    commutative; a merged accumulator finalizes identically to a single pass
    over the concatenated inputs."""

    def __init__(self, n_bins=DEFAULT_BINS, thresholds=(0.5,)):
        if n_bins < 2:
            raise ValueError("n_bins must be >= 2")
        self.n_bins = int(n_bins)
        self.thresholds = tuple(float(t) for t in thresholds)
        self.pos_hist = np.zeros(self.n_bins, dtype=np.int64)
        self.neg_hist = np.zeros(self.n_bins, dtype=np.int64)
        self.true_pos = np.zeros(len(self.thresholds), dtype=np.int64)
        self.false_pos = np.zeros(len(self.thresholds), dtype=np.int64)

    @property
    def n_positive(self):
        return int(self.pos_hist.sum())

    @property
    def n_pixels(self):
        return int(self.pos_hist.sum() + self.neg_hist.sum())

    def update(self, scores, labels, valid=None):
        scores = np.asarray(scores, dtype=np.float64).ravel()
        labels = np.asarray(labels).ravel()
        if valid is not None:
            keep = np.asarray(valid, dtype=bool).ravel()
            scores = scores[keep]
            labels = labels[keep]
        if scores.size == 0:
            return self
        labels = check_binary_labels(labels)
        if scores.min() < 0.0 or scores.max() > 1.0:
            raise ValueError("scores must lie in [0, 1]; rescale or squash first")
        bins = np.minimum((scores * self.n_bins).astype(np.int64), self.n_bins - 1)
        pos = labels == 1
        self.pos_hist += np.bincount(bins[pos], minlength=self.n_bins)
        self.neg_hist += np.bincount(bins[~pos], minlength=self.n_bins)
        for i, th in enumerate(self.thresholds):
            predicted = scores >= th
            self.true_pos[i] += int(np.sum(predicted & pos))
            self.false_pos[i] += int(np.sum(predicted & ~pos))
        return self

    def merge(self, other):
        if not isinstance(other, MetricAccumulator):
            raise TypeError("can only merge MetricAccumulator")
        if other.n_bins != self.n_bins or other.thresholds != self.thresholds:
            raise ValueError("accumulator shapes differ (bins or thresholds)")
        self.pos_hist += other.pos_hist
        self.neg_hist += other.neg_hist
        self.true_pos += other.true_pos
        self.false_pos += other.false_pos
        return self

    # -- finalization -------------------------------------------------------

    def _auprc_from_hist(self, n_pos):
        pos_desc = self.pos_hist[::-1].astype(np.float64)
        neg_desc = self.neg_hist[::-1].astype(np.float64)
        occupied = (pos_desc + neg_desc) > 0
        tp = np.cumsum(pos_desc)[occupied]
        predicted = np.cumsum(pos_desc + neg_desc)[occupied]
        precision = tp / predicted
        recall = tp / n_pos
        delta_recall = np.diff(np.concatenate(([0.0], recall)))
        return float(np.sum(delta_recall * precision))

    def _auroc_from_hist(self, n_pos, n_neg):
        neg_below = np.cumsum(self.neg_hist) - self.neg_hist
        pairs = self.pos_hist * (neg_below + 0.5 * self.neg_hist)
        return float(pairs.sum() / (float(n_pos) * float(n_neg)))

    def _best_f1_from_hist(self, n_pos):
        tp = np.cumsum(self.pos_hist[::-1])[::-1].astype(np.float64)
        pp = np.cumsum((self.pos_hist + self.neg_hist)[::-1])[::-1].astype(np.float64)
        denom = tp + pp + (n_pos - tp)  # == 2tp + fp + fn
        f1 = np.divide(2.0 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
        best = int(np.argmax(f1))
        return float(f1[best]), best / self.n_bins

    def finalize(self):
        n_pos = self.n_positive
        n_all = self.n_pixels
        n_neg = n_all - n_pos
        if n_all == 0:
            raise MetricUndefinedError("no valid pixels accumulated")
        if n_pos == 0 or n_neg == 0:
            raise MetricUndefinedError("metrics undefined without both classes")
        if 0.5 in self.thresholds:
            i = self.thresholds.index(0.5)
            tp, fp = int(self.true_pos[i]), int(self.false_pos[i])
            fn = n_pos - tp
            denom = 2 * tp + fp + fn
            f1_half = 2.0 * tp / denom if denom else 0.0
        else:
            f1_half = float("nan")
        f1_best, f1_best_th = self._best_f1_from_hist(n_pos)
        return MetricsReport(
            auprc=self._auprc_from_hist(n_pos),
            auroc=self._auroc_from_hist(n_pos, n_neg),
            f1_at_half=f1_half,
            f1_best=f1_best,
            f1_best_threshold=f1_best_th,
            prevalence=n_pos / n_all,
            n_pixels=n_all,
            n_positive=n_pos,
        )

    def pr_curve(self):
        """(threshold, precision, recall) rows for occupied bins, descending."""
        n_pos = self.n_positive
        if n_pos == 0:
            raise MetricUndefinedError("PR curve undefined without positives")
        pos_desc = self.pos_hist[::-1].astype(np.float64)
        neg_desc = self.neg_hist[::-1].astype(np.float64)
        occupied = np.nonzero((pos_desc + neg_desc) > 0)[0]
        tp = np.cumsum(pos_desc)[occupied]
        predicted = np.cumsum(pos_desc + neg_desc)[occupied]
        thresholds = (self.n_bins - 1 - occupied) / self.n_bins
        return thresholds, tp / predicted, tp / n_pos


def merge(*accumulators):
    """Merge accumulators into a fresh one (inputs untouched)."""
    if not accumulators:
        raise ValueError("nothing to merge")
    out = MetricAccumulator(accumulators[0].n_bins, accumulators[0].thresholds)
    for acc in accumulators:
        out.merge(acc)
    return out


def write_pr_curve_csv(accumulator, path):
    thresholds, precision, recall = accumulator.pr_curve()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("threshold,precision,recall\n")
        for t, p, r in zip(thresholds, precision, recall):
            fh.write(f"{t:.10g},{p:.10g},{r:.10g}\n")
