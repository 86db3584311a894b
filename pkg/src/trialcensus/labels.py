"""Hand labels: split assignment, an append-only label store, and summaries.

Labels are never edited in place. A relabel is a new revision of the same
(pmid, labeler) pair and the highest revision wins at read time, so the
store doubles as a full audit trail.
"""

from __future__ import annotations

import json
import logging
import os
import random
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable

from .corpus import Corpus
from .universe import UniverseFlags

logger = logging.getLogger(__name__)

VERDICT_INCLUDE = "include"
VERDICT_EXCLUDE = "exclude"
VERDICTS = (VERDICT_INCLUDE, VERDICT_EXCLUDE)

# Exclusion taxonomy. Order matters: reports and the labeling UI use it.
EXCLUSION_REASONS = (
    "no_drug",
    "meta_analysis_or_review",
    "retrospective_reanalysis",
    "observational",
    "protocol_no_results",
    "no_human_subjects",
    "animal",
    "other",
)

SPLITS = ("train", "validation", "test")
DEFAULT_SPLIT_SIZES = {"train": 1082, "validation": 1000, "test": 1000}


class LabelError(Exception):
    """Base class for label failures."""


class LabelValidationError(LabelError):
    """Label violates the record contract (bad verdict/reason, unknown pmid)."""


class LabelConflictError(LabelError):
    """A different label already exists for the same (pmid, labeler, revision)."""


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class LabelRecord:
    pmid: str
    verdict: str
    reason: str | None
    labeler: str
    timestamp: str
    revision: int = 0
    note: str | None = None

    def validate(self) -> None:
        if self.verdict not in VERDICTS:
            raise LabelValidationError(f"unknown verdict {self.verdict!r}")
        if self.verdict == VERDICT_EXCLUDE:
            if self.reason is None:
                raise LabelValidationError("exclude verdicts require a reason")
            if self.reason not in EXCLUSION_REASONS:
                raise LabelValidationError(f"unknown exclusion reason {self.reason!r}")
        elif self.reason is not None:
            raise LabelValidationError("include verdicts must not carry a reason")
        if not self.pmid:
            raise LabelValidationError("pmid must be non-empty")
        if not self.labeler:
            raise LabelValidationError("labeler must be non-empty")
        if self.revision < 0:
            raise LabelValidationError("revision must be non-negative")

    def to_json_dict(self) -> dict:
        return {
            "pmid": self.pmid,
            "verdict": self.verdict,
            "reason": self.reason,
            "labeler": self.labeler,
            "timestamp": self.timestamp,
            "revision": self.revision,
            "note": self.note,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "LabelRecord":
        rec = cls(
            pmid=obj["pmid"],
            verdict=obj["verdict"],
            reason=obj.get("reason"),
            labeler=obj["labeler"],
            timestamp=obj["timestamp"],
            revision=int(obj.get("revision", 0)),
            note=obj.get("note"),
        )
        rec.validate()
        return rec


@dataclass(frozen=True)
class SplitAssignment:
    pmid: str
    split: str
    position: int  # draw order inside the split


def assign_splits(
    flags: Iterable[UniverseFlags],
    corpus: Corpus,
    sizes: dict[str, int] | None = None,
    seed: int = 0,
) -> list[SplitAssignment]:
    """Draw disjoint train/validation/test splits from the universe.

    Draws are uniform without replacement. Abstract-less draws are replaced
    by fresh draws in train and validation; the test split keeps its draw and
    simply shrinks when a drawn record has no abstract.
    """
    sizes = dict(DEFAULT_SPLIT_SIZES if sizes is None else sizes)
    unknown = set(sizes) - set(SPLITS)
    if unknown:
        raise LabelError(f"unknown split names {sorted(unknown)}")
    pool = [f.pmid for f in flags if f.in_universe]
    total = sum(sizes.get(s, 0) for s in SPLITS)
    if total > len(pool):
        raise LabelError(
            f"requested {total} split records but the universe holds only {len(pool)}"
        )

    rng = random.Random(seed)
    shuffled = pool[:]
    rng.shuffle(shuffled)
    draws = iter(shuffled)

    def has_abstract(pmid: str) -> bool:
        return pmid in corpus and bool(corpus.get(pmid).abstract)

    assignments: list[SplitAssignment] = []
    # Test first: its draw must not be disturbed by backfill for other splits.
    for split in ("test", "validation", "train"):
        want = sizes.get(split, 0)
        kept: list[str] = []
        drawn = 0
        while drawn < want:
            try:
                pmid = next(draws)
            except StopIteration:
                raise LabelError(
                    f"ran out of universe records while drawing the {split} split: "
                    f"needed {want}, got {len(kept)}"
                )
            drawn += 1
            if has_abstract(pmid):
                kept.append(pmid)
            elif split == "test":
                continue  # test shrinks, no backfill
            else:
                want += 1  # replace with a fresh draw
        assignments.extend(
            SplitAssignment(pmid=p, split=split, position=i) for i, p in enumerate(kept)
        )
    return assignments


def write_splits(assignments: list[SplitAssignment], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in assignments:
            fh.write(json.dumps({"pmid": a.pmid, "split": a.split, "position": a.position}))
            fh.write("\n")


def load_splits(path: str) -> list[SplitAssignment]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out.append(SplitAssignment(pmid=obj["pmid"], split=obj["split"], position=obj["position"]))
    return out


class LabelStore:
    """Append-only JSONL store of label records."""

    def __init__(self, path: str, known_pmids: set[str] | None = None):
        self.path = path
        self.known_pmids = known_pmids
        self._labels: list[LabelRecord] = []
        self._by_key: dict[tuple[str, str, int], LabelRecord] = {}
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        rec = LabelRecord.from_json_dict(json.loads(line))
                    except (KeyError, ValueError, LabelValidationError) as exc:
                        raise LabelError(f"{path} line {line_no}: {exc}") from exc
                    self._index(rec)

    def _index(self, rec: LabelRecord) -> None:
        self._labels.append(rec)
        self._by_key[(rec.pmid, rec.labeler, rec.revision)] = rec

    def record_label(self, rec: LabelRecord) -> bool:
        """Validate and append. Returns False when the identical record is
        already stored (idempotent resubmission); a conflicting record for
        the same (pmid, labeler, revision) raises."""
        rec.validate()
        if self.known_pmids is not None and rec.pmid not in self.known_pmids:
            raise LabelValidationError(f"unknown pmid {rec.pmid!r}")
        key = (rec.pmid, rec.labeler, rec.revision)
        existing = self._by_key.get(key)
        if existing is not None:
            if (existing.verdict, existing.reason) == (rec.verdict, rec.reason):
                return False
            raise LabelConflictError(
                f"revision {rec.revision} of pmid {rec.pmid} by {rec.labeler} already "
                f"recorded with verdict {existing.verdict!r}"
            )
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec.to_json_dict(), ensure_ascii=False))
            fh.write("\n")
        self._index(rec)
        return True

    def all_labels(self) -> list[LabelRecord]:
        return list(self._labels)

    def effective_labels(self) -> dict[str, LabelRecord]:
        """One label per pmid: highest revision per (pmid, labeler), then the
        most recent across labelers (timestamp, labeler as tiebreak)."""
        per_pair: dict[tuple[str, str], LabelRecord] = {}
        for rec in self._labels:
            key = (rec.pmid, rec.labeler)
            cur = per_pair.get(key)
            if cur is None or rec.revision > cur.revision:
                per_pair[key] = rec
        effective: dict[str, LabelRecord] = {}
        for rec in per_pair.values():
            cur = effective.get(rec.pmid)
            if cur is None or (rec.timestamp, rec.labeler) > (cur.timestamp, cur.labeler):
                effective[rec.pmid] = rec
        return effective

    def labeled_pmids(self) -> set[str]:
        return {rec.pmid for rec in self._labels}


def label_stats(
    store: LabelStore, assignments: Iterable[SplitAssignment], split: str
) -> dict:
    """Counts for one split: n labeled, share of includes, exclusion histogram."""
    if split not in SPLITS:
        raise LabelError(f"unknown split {split!r}")
    member_pmids = {a.pmid for a in assignments if a.split == split}
    effective = store.effective_labels()
    labeled = [rec for pmid, rec in effective.items() if pmid in member_pmids]
    n = len(labeled)
    positives = sum(1 for rec in labeled if rec.verdict == VERDICT_INCLUDE)
    histogram = {reason: 0 for reason in EXCLUSION_REASONS}
    for rec in labeled:
        if rec.verdict == VERDICT_EXCLUDE and rec.reason is not None:
            histogram[rec.reason] += 1
    return {
        "split": split,
        "n": n,
        "positive_share": (positives / n) if n else None,
        "reason_histogram": histogram,
    }
