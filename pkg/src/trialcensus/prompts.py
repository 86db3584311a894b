"""Prompt templates, completion parsing, and screening-error reports.

Templates ship as editable text assets next to this module. The bodies are
reconstructions (see the version notes in notes.json); their ids follow the
family.variant convention, where the family fixes the answer format:

  family 1: one word, TRUE or FALSE
  family 2: TRUE or the name of an exclusion category
  family 3: TRUE or a free-form explanation

parse_completion never raises on model output: anything it cannot read
becomes an unparseable row that downstream counting treats as an exclude.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping

from .corpus import PublicationRecord
from .labels import EXCLUSION_REASONS, VERDICT_EXCLUDE, VERDICT_INCLUDE

PLACEHOLDER = "{abstract}"

MISSED_TRIAL = "missed trial"


class PromptError(Exception):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    family: int
    body: str
    version_notes: str = ""

    def __post_init__(self) -> None:
        if self.family not in (1, 2, 3):
            raise PromptError(f"unknown prompt family {self.family}")
        count = self.body.count(PLACEHOLDER)
        if count != 1:
            raise PromptError(
                f"prompt {self.id}: body must contain {PLACEHOLDER} exactly once, found {count}"
            )


@dataclass(frozen=True)
class ParsedCompletion:
    verdict: str | None  # include | exclude | None when unparseable
    raw: str
    category: str | None = None  # family 2 exclusion category
    explanation: str | None = None  # family 3 free text

    @property
    def unparseable(self) -> bool:
        return self.verdict is None

    @property
    def effective_verdict(self) -> str:
        """Verdict used for counting: unparseable output counts as exclude."""
        return self.verdict if self.verdict is not None else VERDICT_EXCLUDE


def load_templates() -> dict[str, PromptTemplate]:
    """All packaged templates keyed by id."""
    assets = resources.files("trialcensus").joinpath("prompt_assets")
    notes = json.loads(assets.joinpath("notes.json").read_text(encoding="utf-8"))
    templates: dict[str, PromptTemplate] = {}
    for prompt_id, meta in notes.items():
        body = assets.joinpath(f"prompt_{prompt_id}.txt").read_text(encoding="utf-8")
        templates[prompt_id] = PromptTemplate(
            id=prompt_id,
            family=int(meta["family"]),
            body=body,
            version_notes=meta["version_notes"],
        )
    return templates


def load_category_synonyms() -> dict[str, str]:
    """Default mapping from free-text category names to taxonomy values."""
    assets = resources.files("trialcensus").joinpath("prompt_assets")
    return json.loads(assets.joinpath("synonyms.json").read_text(encoding="utf-8"))


def render_prompt(template: PromptTemplate, record: PublicationRecord) -> str:
    """Substitute the abstract into the template, verbatim."""
    if not record.abstract:
        raise PromptError(f"record {record.pmid} has no abstract to render")
    return template.body.replace(PLACEHOLDER, record.abstract)


_LEADING_WORD = re.compile(r"[a-z]+")


def _leading_word(text: str) -> str:
    m = _LEADING_WORD.match(text.strip().lower())
    return m.group(0) if m else ""


def _normalize(text: str) -> str:
    out = text.strip().lower()
    out = out.strip("\"'`")
    out = re.sub(r"\s+", " ", out)
    return out.rstrip(".!:;,").strip()


def parse_completion(
    family: int,
    raw: str,
    category_synonyms: Mapping[str, str] | None = None,
) -> ParsedCompletion:
    """Read a model completion. Never raises on content."""
    if family not in (1, 2, 3):
        raise PromptError(f"unknown prompt family {family}")
    stripped = raw.strip()
    lead = _leading_word(stripped)

    if family == 1:
        if lead == "true":
            return ParsedCompletion(verdict=VERDICT_INCLUDE, raw=raw)
        if lead == "false":
            return ParsedCompletion(verdict=VERDICT_EXCLUDE, raw=raw)
        return ParsedCompletion(verdict=None, raw=raw)

    if family == 2:
        if lead == "true":
            return ParsedCompletion(verdict=VERDICT_INCLUDE, raw=raw)
        synonyms = load_category_synonyms() if category_synonyms is None else category_synonyms
        candidates = [_normalize(stripped)]
        if lead == "false":
            # tolerate "FALSE: observational" style answers
            rest = stripped.lstrip()[len(lead):].lstrip(" .:;,-")
            candidates.append(_normalize(rest))
        for cand in candidates:
            if cand in synonyms:
                return ParsedCompletion(verdict=VERDICT_EXCLUDE, raw=raw, category=synonyms[cand])
        return ParsedCompletion(verdict=None, raw=raw)

    # family 3
    if lead == "true":
        return ParsedCompletion(verdict=VERDICT_INCLUDE, raw=raw)
    if stripped:
        return ParsedCompletion(verdict=VERDICT_EXCLUDE, raw=raw, explanation=stripped)
    return ParsedCompletion(verdict=None, raw=raw)


def prompt_eval(
    completions: Mapping[str, ParsedCompletion], gold: Mapping[str, str]
) -> dict:
    """True and false positive rates over the pmids present in both maps."""
    shared = sorted(set(completions) & set(gold))
    if not shared:
        raise PromptError("no pmids shared between completions and gold labels")
    tp = fp = tn = fn = 0
    for pmid in shared:
        predicted_include = completions[pmid].effective_verdict == VERDICT_INCLUDE
        gold_include = gold[pmid] == VERDICT_INCLUDE
        if predicted_include and gold_include:
            tp += 1
        elif predicted_include:
            fp += 1
        elif gold_include:
            fn += 1
        else:
            tn += 1
    return {
        "n": len(shared),
        "tp": tp,
        "fp": fp,
        "tn": tn,
        "fn": fn,
        "tpr": tp / (tp + fn) if (tp + fn) else None,
        "fpr": fp / (fp + tn) if (fp + tn) else None,
    }


@dataclass(frozen=True)
class ErrorTableRow:
    model_id: str
    prompt_id: str
    error_type: str  # exclusion reason for false positives, "missed trial" for false negatives
    sub_type: str
    count: int


def error_table(
    completions: Mapping[str, ParsedCompletion],
    gold: Mapping[str, str],
    reasons: Mapping[str, str],
    model_id: str,
    prompt_id: str,
) -> list[ErrorTableRow]:
    """Bucket disagreements with the gold labels.

    False positives land in the bucket of the gold exclusion reason; false
    negatives land in a single "missed trial" bucket. Sub-types are left
    blank: filling them requires reading the abstracts.
    """
    shared = set(completions) & set(gold)
    if not shared:
        raise PromptError("no pmids shared between completions and gold labels")
    counts: dict[str, int] = {reason: 0 for reason in EXCLUSION_REASONS}
    counts[MISSED_TRIAL] = 0
    for pmid in shared:
        predicted_include = completions[pmid].effective_verdict == VERDICT_INCLUDE
        gold_include = gold[pmid] == VERDICT_INCLUDE
        if predicted_include and not gold_include:
            reason = reasons.get(pmid, "other")
            if reason not in counts:
                reason = "other"
            counts[reason] += 1
        elif not predicted_include and gold_include:
            counts[MISSED_TRIAL] += 1
    return [
        ErrorTableRow(model_id=model_id, prompt_id=prompt_id, error_type=etype, sub_type="", count=n)
        for etype, n in counts.items()
    ]


def write_error_table(rows: Iterable[ErrorTableRow], path: str) -> None:
    """TSV pivot: one row per (error_type, sub_type), one column per model/prompt."""
    rows = list(rows)
    columns = sorted({(r.model_id, r.prompt_id) for r in rows})
    kinds = list(dict.fromkeys((r.error_type, r.sub_type) for r in rows))
    cells = {(r.error_type, r.sub_type, r.model_id, r.prompt_id): r.count for r in rows}
    with open(path, "w", encoding="utf-8") as fh:
        header = ["error_type", "sub_type"] + [f"{m}:{p}" for m, p in columns]
        fh.write("\t".join(header) + "\n")
        for etype, sub in kinds:
            cells_out = [str(cells.get((etype, sub, m, p), 0)) for m, p in columns]
            fh.write("\t".join([etype, sub] + cells_out) + "\n")
