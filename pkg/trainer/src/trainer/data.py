"""Readers for the two JSONL inputs: weak labels and the record corpus.

Both formats are owned by the upstream pipeline; this module only checks
what training actually depends on (pmids, verdicts, abstracts) and ignores
every other field.
"""

from __future__ import annotations

import json
import logging

logger = logging.getLogger(__name__)

VERDICT_INCLUDE = "include"
VERDICT_EXCLUDE = "exclude"


class DataError(Exception):
    pass


def load_weak_labels(path: str) -> list[tuple[str, str]]:
    """Read (pmid, verdict) pairs. Duplicate pmids and unknown verdicts are
    hard errors: a training set with either is not the file we were promised."""
    pairs: list[tuple[str, str]] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path} line {line_no}: not valid JSON: {exc}")
            if not isinstance(obj, dict) or "pmid" not in obj or "verdict" not in obj:
                raise DataError(f"{path} line {line_no}: needs pmid and verdict fields")
            pmid, verdict = str(obj["pmid"]), obj["verdict"]
            if verdict not in (VERDICT_INCLUDE, VERDICT_EXCLUDE):
                raise DataError(f"{path} line {line_no}: unknown verdict {verdict!r}")
            if pmid in seen:
                raise DataError(f"{path} line {line_no}: duplicate pmid {pmid!r}")
            seen.add(pmid)
            pairs.append((pmid, verdict))
    if not pairs:
        raise DataError(f"{path} holds no weak labels")
    return pairs


def load_corpus_abstracts(path: str) -> dict[str, str | None]:
    """Map pmid to abstract text (None when the record has none)."""
    abstracts: dict[str, str | None] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path} line {line_no}: not valid JSON: {exc}")
            if not isinstance(obj, dict) or "pmid" not in obj:
                raise DataError(f"{path} line {line_no}: missing pmid")
            pmid = str(obj["pmid"])
            if pmid in abstracts:
                raise DataError(f"{path} line {line_no}: duplicate pmid {pmid!r}")
            abstract = obj.get("abstract")
            abstracts[pmid] = abstract if abstract else None
    return abstracts


def join_training_examples(
    labels: list[tuple[str, str]], abstracts: dict[str, str | None]
) -> tuple[list[str], list[int]]:
    """Pair each weak label with its abstract. Labels whose pmid is absent
    from the corpus are a hard error; abstract-less records are dropped with
    a warning since there is no text to train on."""
    missing = [pmid for pmid, _ in labels if pmid not in abstracts]
    if missing:
        raise DataError(
            f"{len(missing)} weak-label pmid(s) absent from the corpus, first {missing[0]!r}"
        )
    texts: list[str] = []
    targets: list[int] = []
    dropped = 0
    for pmid, verdict in labels:
        text = abstracts[pmid]
        if text is None:
            dropped += 1
            continue
        texts.append(text)
        targets.append(1 if verdict == VERDICT_INCLUDE else 0)
    if dropped:
        logger.warning("dropped %d weak label(s) whose records have no abstract", dropped)
    if not texts:
        raise DataError("no trainable examples: every labeled record lacks an abstract")
    if len(set(targets)) < 2:
        raise DataError("weak labels contain a single class; training needs both")
    return texts, targets
