"""Scorer evaluation: ROC curves, confusion counts, and operating points.

Classification is at-or-above threshold. ROC curves sweep the distinct
score values from high to low with tied scores grouped, so the trapezoid
area equals the rank statistic (probability a random positive outscores a
random negative, ties counting half).

Operating-point selection is policy-forced: the three stringency levels are
chosen under nested constraints so that precision and recall orderings hold
on any input, not just well-behaved ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .labels import VERDICT_INCLUDE


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    fpr: float
    tpr: float


@dataclass(frozen=True)
class RocCurve:
    points: tuple[RocPoint, ...]
    auc: float


def _as_binary(gold: Mapping[str, object]) -> dict[str, int]:
    out = {}
    for pmid, v in gold.items():
        if isinstance(v, bool):
            out[pmid] = int(v)
        elif v in (0, 1):
            out[pmid] = int(v)  # type: ignore[arg-type]
        elif v == VERDICT_INCLUDE:
            out[pmid] = 1
        elif v == "exclude":
            out[pmid] = 0
        else:
            raise EvalError(f"cannot read gold verdict {v!r} for pmid {pmid}")
    return out


def _shared(scores: Mapping[str, float], gold: Mapping[str, object]) -> tuple[list[str], dict[str, int]]:
    binary = _as_binary(gold)
    shared = sorted(set(scores) & set(binary))
    if not shared:
        raise EvalError("no pmids shared between scores and gold labels")
    return shared, binary


def roc(scores: Mapping[str, float], gold: Mapping[str, object]) -> RocCurve:
    """ROC curve over distinct thresholds, ties grouped, trapezoid area."""
    shared, binary = _shared(scores, gold)
    pos_total = sum(binary[p] for p in shared)
    neg_total = len(shared) - pos_total
    if pos_total == 0 or neg_total == 0:
        raise EvalError("ROC needs at least one positive and one negative")

    by_score = sorted(shared, key=lambda p: -scores[p])
    points = [RocPoint(threshold=math.inf, fpr=0.0, tpr=0.0)]
    tp = fp = 0
    i = 0
    n = len(by_score)
    while i < n:
        threshold = scores[by_score[i]]
        while i < n and scores[by_score[i]] == threshold:
            if binary[by_score[i]]:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append(RocPoint(threshold=threshold, fpr=fp / neg_total, tpr=tp / pos_total))

    auc = 0.0
    for prev, cur in zip(points, points[1:]):
        auc += (cur.fpr - prev.fpr) * (cur.tpr + prev.tpr) / 2.0
    return RocCurve(points=tuple(points), auc=auc)


def confusion_at(
    scores: Mapping[str, float], gold: Mapping[str, object], threshold: float
) -> dict:
    """Confusion counts classifying at-or-above the threshold as positive."""
    shared, binary = _shared(scores, gold)
    tp = fp = tn = fn = 0
    for pmid in shared:
        predicted = scores[pmid] >= threshold
        if predicted and binary[pmid]:
            tp += 1
        elif predicted:
            fp += 1
        elif binary[pmid]:
            fn += 1
        else:
            tn += 1
    return {
        "tp": tp,
        "fp": fp,
        "tn": tn,
        "fn": fn,
        "tpr": tp / (tp + fn) if (tp + fn) else None,
        "fpr": fp / (fp + tn) if (fp + tn) else None,
        "precision": tp / (tp + fp) if (tp + fp) else None,
    }


@dataclass(frozen=True)
class OperatingPointPolicy:
    liberal_tpr: float = 0.99
    conservative_precision: float = 0.82


@dataclass(frozen=True)
class OperatingPoint:
    name: str
    threshold: float
    tpr: float
    fpr: float
    precision: float | None


def _f1(c: dict) -> float:
    tp, fp, fn = c["tp"], c["fp"], c["fn"]
    denom = 2 * tp + fp + fn
    return (2 * tp / denom) if denom else 0.0


def select_operating_points(
    scores: Mapping[str, float],
    gold: Mapping[str, object],
    policy: OperatingPointPolicy | None = None,
) -> dict[str, OperatingPoint]:
    """Pick liberal, moderate, and conservative thresholds on one split.

    liberal: largest threshold whose recall meets the policy floor.
    moderate: best F1 among thresholds at or above liberal whose precision
      does not fall below liberal's.
    conservative: smallest threshold at or above moderate whose precision
      meets both the policy target and moderate's precision.

    The nesting forces threshold, recall, and precision orderings across the
    three points for any score distribution. Ties resolve toward the higher
    threshold. An unattainable precision target raises, naming the best
    value actually reachable.
    """
    policy = policy or OperatingPointPolicy()
    shared, binary = _shared(scores, gold)
    thresholds = sorted({scores[p] for p in shared}, reverse=True)
    confusion = {t: confusion_at(scores, gold, t) for t in thresholds}

    liberal_t = None
    for t in thresholds:  # descending: first hit is the largest threshold
        c = confusion[t]
        if c["tpr"] is not None and c["tpr"] >= policy.liberal_tpr:
            liberal_t = t
            break
    if liberal_t is None:
        best = max((confusion[t]["tpr"] or 0.0) for t in thresholds)
        raise EvalError(
            f"recall target {policy.liberal_tpr} unattainable; best attainable is {best:.4f}"
        )
    liberal_prec = confusion[liberal_t]["precision"] or 0.0

    moderate_t = None
    best_f1 = -1.0
    for t in thresholds:  # descending, so ties keep the higher threshold
        if t < liberal_t:
            continue
        c = confusion[t]
        if (c["precision"] or 0.0) < liberal_prec:
            continue
        f1 = _f1(c)
        if f1 > best_f1:
            best_f1 = f1
            moderate_t = t
    assert moderate_t is not None  # liberal_t itself always qualifies
    moderate_prec = confusion[moderate_t]["precision"] or 0.0

    target = max(policy.conservative_precision, moderate_prec)
    conservative_t = None
    for t in reversed(thresholds):  # ascending: first hit is the smallest threshold
        if t < moderate_t:
            continue
        c = confusion[t]
        if c["precision"] is not None and c["precision"] >= target:
            conservative_t = t
            break
    if conservative_t is None:
        eligible = [t for t in thresholds if t >= moderate_t]
        best = max((confusion[t]["precision"] or 0.0) for t in eligible)
        raise EvalError(
            f"precision target {policy.conservative_precision} unattainable; "
            f"best attainable is {best:.4f}"
        )

    def point(name: str, t: float) -> OperatingPoint:
        c = confusion[t]
        return OperatingPoint(
            name=name, threshold=t, tpr=c["tpr"] or 0.0, fpr=c["fpr"] or 0.0,
            precision=c["precision"],
        )

    return {
        "conservative": point("conservative", conservative_t),
        "moderate": point("moderate", moderate_t),
        "liberal": point("liberal", liberal_t),
    }


def write_roc_tsv(curve: RocCurve, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# auc\t{curve.auc!r}\n")
        fh.write("threshold\tfpr\ttpr\n")
        for p in curve.points:
            fh.write(f"{p.threshold!r}\t{p.fpr!r}\t{p.tpr!r}\n")


def write_operating_points_tsv(points: Mapping[str, OperatingPoint], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("name\tthreshold\ttpr\tfpr\tprecision\n")
        for name in ("conservative", "moderate", "liberal"):
            p = points[name]
            prec = "" if p.precision is None else repr(p.precision)
            fh.write(f"{p.name}\t{p.threshold!r}\t{p.tpr!r}\t{p.fpr!r}\t{prec}\n")
