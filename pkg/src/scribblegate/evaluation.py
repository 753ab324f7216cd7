"""Segmentation metrics and statistics: Dice, Hausdorff, Wilcoxon signed-rank.

Predictions are hardened by per-pixel argmax (ties to the lower class index)
before any set-based metric. Degenerate cases are explicit values, not crashes:
both-empty Dice is 1.0, empty-set Hausdorff is None ("undefined") and excluded
from aggregates with a count.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import rankdata

from .errors import AllZeroDifferences, ShapeMismatch, TooFewPairs


# ---------------------------------------------------------------------------
# hardening

def harden(pred):
    """Softmax (c, H, W) -> one-hot via argmax; ties go to the lower index."""
    pred = np.asarray(pred)
    labels = np.argmax(pred, axis=0)
    hard = np.zeros(pred.shape, dtype=np.uint8)
    for c in range(pred.shape[0]):
        hard[c] = labels == c
    return hard


# ---------------------------------------------------------------------------
# Dice

def dice_multiclass(pred, true):
    """2|pred * true| / (|pred| + |true|) over all foreground channels jointly."""
    pred = np.asarray(pred).astype(bool)
    true = np.asarray(true).astype(bool)
    if pred.shape != true.shape:
        raise ShapeMismatch("prediction %s vs truth %s" % (pred.shape, true.shape))
    p, t = pred[1:], true[1:]
    denom = int(p.sum()) + int(t.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((p & t).sum()) / denom


def dice_per_class(pred, true, return_empty=False):
    """Per-foreground-channel Dice; both-empty channels score 1 and are flagged."""
    pred = np.asarray(pred).astype(bool)
    true = np.asarray(true).astype(bool)
    if pred.shape != true.shape:
        raise ShapeMismatch("prediction %s vs truth %s" % (pred.shape, true.shape))
    scores, empty = [], []
    for c in range(1, pred.shape[0]):
        denom = int(pred[c].sum()) + int(true[c].sum())
        if denom == 0:
            scores.append(1.0)
            empty.append(True)
        else:
            scores.append(2.0 * int((pred[c] & true[c]).sum()) / denom)
            empty.append(False)
    scores = np.array(scores)
    if return_empty:
        return scores, np.array(empty)
    return scores


# ---------------------------------------------------------------------------
# Hausdorff

def hausdorff(pred_channel, true_channel):
    """Bidirectional Hausdorff distance in pixels; None when either set is empty."""
    a = np.argwhere(np.asarray(pred_channel).astype(bool))
    b = np.argwhere(np.asarray(true_channel).astype(bool))
    if len(a) == 0 or len(b) == 0:
        return None
    d_ab = cKDTree(b).query(a)[0].max()
    d_ba = cKDTree(a).query(b)[0].max()
    return float(max(d_ab, d_ba))


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank test

def wilcoxon_signed_rank(sample_a, sample_b):
    """Two-sided paired test; returns (W, p) with W the smaller rank sum.

    Zero differences are dropped. Exact null distribution by enumeration for
    n <= 12; normal approximation with continuity and tie corrections beyond.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch("paired samples must have equal length")
    d = a - b
    d = d[d != 0]
    if d.size == 0:
        raise AllZeroDifferences("all paired differences are zero")
    if d.size < 5:
        raise TooFewPairs("need >= 5 nonzero differences, got %d" % d.size)

    ranks = rankdata(np.abs(d))
    t_plus = float(ranks[d > 0].sum())
    t_minus = float(ranks[d < 0].sum())
    w = min(t_plus, t_minus)
    n = d.size

    if n <= 12:
        # all 2^n sign assignments of the observed ranks
        bits = (np.arange(1 << n)[:, None] >> np.arange(n)) & 1
        sums = bits @ ranks
        p_low = float(np.count_nonzero(sums <= t_plus)) / (1 << n)
        p_high = float(np.count_nonzero(sums >= t_plus)) / (1 << n)
        p = min(1.0, 2.0 * min(p_low, p_high))
        return w, p

    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var -= float(((tie_counts ** 3 - tie_counts) / 48.0).sum())
    diff = t_plus - mu
    correction = 0.5 * np.sign(diff)
    z = (diff - correction) / math.sqrt(var)
    p = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))  # two-sided normal tail
    return w, p


# ---------------------------------------------------------------------------
# report assembly

@dataclass
class MetricReport:
    samples: list = field(default_factory=list)   # per-sample dicts
    aggregates: dict = field(default_factory=dict)


def compute_report(records, class_names=None):
    """records: iterable of (id, pred_onehot, true_onehot) -> MetricReport."""
    report = MetricReport()
    for sample_id, pred, true in records:
        per_class, empty = dice_per_class(pred, true, return_empty=True)
        hd = [hausdorff(pred[c], true[c]) for c in range(1, pred.shape[0])]
        report.samples.append({
            "id": sample_id,
            "multiclass_dice": dice_multiclass(pred, true),
            "per_class_dice": per_class,
            "per_class_empty": empty,
            "per_class_hausdorff": hd,
        })
    if not report.samples:
        return report

    mc = np.array([s["multiclass_dice"] for s in report.samples])
    report.aggregates["multiclass_dice_mean"] = float(mc.mean())
    report.aggregates["multiclass_dice_std"] = float(mc.std())
    n_fg = len(report.samples[0]["per_class_dice"])
    for c in range(n_fg):
        dc = np.array([s["per_class_dice"][c] for s in report.samples])
        name = class_names[c + 1] if class_names else "class%d" % (c + 1)
        report.aggregates["dice_%s_mean" % name] = float(dc.mean())
        report.aggregates["dice_%s_std" % name] = float(dc.std())
        hds = [s["per_class_hausdorff"][c] for s in report.samples]
        defined = [h for h in hds if h is not None]
        report.aggregates["hausdorff_%s_undefined" % name] = len(hds) - len(defined)
        if defined:
            report.aggregates["hausdorff_%s_mean" % name] = float(np.mean(defined))
            report.aggregates["hausdorff_%s_std" % name] = float(np.std(defined))
    return report


def write_report_csv(report, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        n_fg = len(report.samples[0]["per_class_dice"]) if report.samples else 0
        header = ["id", "multiclass_dice"]
        header += ["dice_class%d" % (c + 1) for c in range(n_fg)]
        header += ["hausdorff_class%d" % (c + 1) for c in range(n_fg)]
        writer.writerow(header)
        for s in report.samples:
            row = [s["id"], repr(s["multiclass_dice"])]
            row += [repr(float(v)) for v in s["per_class_dice"]]
            row += ["undefined" if h is None else repr(h)
                    for h in s["per_class_hausdorff"]]
            writer.writerow(row)


def write_summary_csv(report, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for key in sorted(report.aggregates):
            writer.writerow([key, repr(report.aggregates[key])])
