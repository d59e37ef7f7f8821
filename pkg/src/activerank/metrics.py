"""Evaluation surfaces: pair accuracy, quantized classification metrics,
class/uncertainty analyses, annotation cost, and the McNemar statistic."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, relative_label
from .errors import NumericalError, UndefinedMetricError, ValidationError
from .ranking import RelativePair, unordered_key

log = logging.getLogger(__name__)

RELATIVE_SECONDS_PER_PAIR = 1
ABSOLUTE_SECONDS_PER_IMAGE = 20


@dataclass
class MetricReport:
    """Bundle of evaluation results for one finished run."""

    overall_accuracy: float | None = None
    neighboring_accuracies: dict[str, float] = field(default_factory=dict)
    mean_neighboring: float | None = None
    per_class: dict[int, dict[str, float]] = field(default_factory=dict)
    macro: dict[str, float] = field(default_factory=dict)
    class_proportions: dict[int, int] = field(default_factory=dict)
    uncertainty_stats: dict[int, dict[str, float]] = field(default_factory=dict)
    cost_seconds: int = 0

    def to_dict(self) -> dict:
        return {
            "overall_accuracy": self.overall_accuracy,
            "neighboring_accuracies": self.neighboring_accuracies,
            "mean_neighboring": self.mean_neighboring,
            "per_class": {str(k): v for k, v in self.per_class.items()},
            "macro": self.macro,
            "class_proportions": {str(k): v for k, v in self.class_proportions.items()},
            "uncertainty_stats": {str(k): v for k, v in self.uncertainty_stats.items()},
            "cost_seconds": self.cost_seconds,
        }


def pair_correctness(test_pairs, rank_scores) -> list[bool]:
    """Per-pair correctness over the non-tie pairs, in input order.

    A pair is correct when the more severe member has the strictly higher
    score; exact score ties are incorrect. Pairs labeled 0.5 are skipped.
    """
    out = []
    for p in test_pairs:
        if p.label == 0.5:
            continue
        if p.label not in (0.0, 1.0):
            raise ValidationError(f"pair {p.key} has label {p.label}")
        s_i, s_j = rank_scores[p.id_i], rank_scores[p.id_j]
        if p.label == 1.0:
            out.append(s_i > s_j)
        else:
            out.append(s_i < s_j)
    return out

def pair_accuracy(test_pairs, rank_scores) -> float:
    """Fraction of non-tie pairs whose score ordering matches the label."""
    flags = pair_correctness(test_pairs, rank_scores)
    if not flags:
        raise UndefinedMetricError("no pairs with an order label (all ties?)")
    return sum(flags) / len(flags)


def build_test_pairs(test_set: Dataset, mode: str, rng: np.random.Generator):
    """Construct evaluation pairs from a labeled test set.

    ``overall``: per-class counts are equalized by downsampling to the
    smallest class, then each selected sample is paired with one random
    partner (list of pairs returned). ``neighboring``: one pair set per
    adjacent class pair, each pair joining one sample from each class
    (dict keyed by (lower, upper)); empty classes are skipped with a
    warning.
    """
    from .loop import make_pairs  # local import: loop depends on lower layers only

    by_class: dict[int, list[str]] = {}
    for s in test_set:
        if s.ordinal_label is None:
            raise ValidationError(f"test sample {s.id!r} has no ordinal label")
        by_class.setdefault(s.ordinal_label, []).append(s.id)
    n_classes = max(by_class) + 1

    def labeled(pairs):
        return [
            p.with_label(
                relative_label(
                    test_set[p.id_i].ordinal_label, test_set[p.id_j].ordinal_label
                )
            )
            for p in pairs
        ]

    if mode == "overall":
        m = min(len(ids) for ids in by_class.values())
        balanced: list[str] = []
        for c in sorted(by_class):
            ids = sorted(by_class[c])
            take = rng.choice(len(ids), size=m, replace=False)
            balanced.extend(ids[k] for k in sorted(take))
        return labeled(make_pairs(balanced, set(), rng))

    if mode == "neighboring":
        out: dict[tuple[int, int], list] = {}
        for c in range(n_classes - 1):
            lo = sorted(by_class.get(c, []))
            hi = sorted(by_class.get(c + 1, []))
            if not lo or not hi:
                log.warning("skipping neighboring pairs %d-%d: empty class", c, c + 1)
                continue
            lo_set = set(lo)
            pairs = []
            seen: set[tuple[str, str]] = set()
            for sid in lo + hi:
                partners = hi if sid in lo_set else lo
                for k in rng.permutation(len(partners)):
                    partner = partners[k]
                    key = unordered_key(sid, partner)
                    if key not in seen:
                        seen.add(key)
                        pairs.append(RelativePair(sid, partner))
                        break
            out[(c, c + 1)] = labeled(pairs)
        return out

    raise ValidationError(f"unknown test pair mode {mode!r}")


def quantize_score(score: float, num_classes: int) -> int:
    """Round a rank score half-up to the nearest class, clamped to range."""
    if not math.isfinite(score):
        raise NumericalError(f"cannot quantize non-finite score {score}")
    if num_classes < 1:
        raise ValidationError(f"num_classes must be positive, got {num_classes}")
    q = math.floor(score + 0.5)
    return int(min(max(q, 0), num_classes - 1))


def classification_metrics(true_labels, predicted_classes, num_classes: int | None = None):
    """One-vs-rest precision/recall/F1 per class plus their macro average.

    Classes absent from both truth and prediction are skipped in the macro
    average; zero denominators yield 0. Both conventions log a warning.
    Returns (per_class, macro) dicts.
    """
    true_arr = np.asarray(true_labels, dtype=int)
    pred_arr = np.asarray(predicted_classes, dtype=int)
    if true_arr.shape != pred_arr.shape or true_arr.ndim != 1:
        raise ValidationError("true and predicted labels must be equal-length 1-D sequences")
    if num_classes is None:
        num_classes = int(max(true_arr.max(), pred_arr.max())) + 1 if true_arr.size else 0

    per_class: dict[int, dict[str, float]] = {}
    present: list[int] = []
    for c in range(num_classes):
        tp = int(np.sum((true_arr == c) & (pred_arr == c)))
        fp = int(np.sum((true_arr != c) & (pred_arr == c)))
        fn = int(np.sum((true_arr == c) & (pred_arr != c)))
        if tp + fp + fn == 0:
            log.warning("class %d absent from truth and prediction; skipped in macro", c)
            continue
        present.append(c)
        if tp + fp == 0:
            log.warning("precision undefined for class %d; using 0", c)
        if tp + fn == 0:
            log.warning("recall undefined for class %d; using 0", c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[c] = {"precision": precision, "recall": recall, "f1": f1}
    if not present:
        raise UndefinedMetricError("no class present in truth or prediction")
    macro = {
        key: sum(per_class[c][key] for c in present) / len(present)
        for key in ("precision", "recall", "f1")
    }
    return per_class, macro


def class_proportions(selected_ids, dataset: Dataset, num_classes: int | None = None) -> dict[int, int]:
    """Histogram of ordinal labels over the unique selected ids."""
    if num_classes is None:
        num_classes = dataset.num_classes
    counts = {c: 0 for c in range(num_classes)}
    for sid in set(selected_ids):
        label = dataset[sid].ordinal_label
        if label is None:
            raise ValidationError(f"sample {sid!r} has no ordinal label")
        counts[label] += 1
    return counts


def uncertainty_by_class(posteriors, dataset: Dataset) -> dict[int, dict[str, float]]:
    """Five-number summary (linear-interpolation quartiles) of variance per class."""
    groups: dict[int, list[float]] = {}
    for p in posteriors:
        label = dataset[p.sample_id].ordinal_label
        if label is None:
            raise ValidationError(f"sample {p.sample_id!r} has no ordinal label")
        groups.setdefault(label, []).append(p.variance)
    stats = {}
    for c in sorted(groups):
        arr = np.asarray(groups[c], dtype=np.float64)
        q = np.percentile(arr, [0, 25, 50, 75, 100], method="linear")
        stats[c] = {"min": q[0], "q1": q[1], "median": q[2], "q3": q[3], "max": q[4]}
    return stats


def annotation_cost(n_relative_pairs: int, n_unique_absolute: int) -> int:
    """Total annotation seconds: 1 s per relative pair, 20 s per unique image."""
    if n_relative_pairs < 0 or n_unique_absolute < 0:
        raise ValidationError("annotation counts must be nonnegative")
    return (
        RELATIVE_SECONDS_PER_PAIR * int(n_relative_pairs)
        + ABSOLUTE_SECONDS_PER_IMAGE * int(n_unique_absolute)
    )


def mcnemar_statistic(n_only_a_correct: int, n_only_b_correct: int) -> float:
    """Continuity-corrected McNemar statistic from the discordant counts.

    Returns (|b - c| - 1)^2 / (b + c), and 0 by convention when there are
    no discordant pairs.
    """
    b, c = int(n_only_a_correct), int(n_only_b_correct)
    if b < 0 or c < 0:
        raise ValidationError("discordant counts must be nonnegative")
    if b + c == 0:
        return 0.0
    return (abs(b - c) - 1.0) ** 2 / (b + c)
