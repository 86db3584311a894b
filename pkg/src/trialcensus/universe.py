"""Candidate universe: rule-based screen for records that might be trials.

Three rule families run over each record. A record enters the universe when
any family matches (union rule):

  * curated publication-type tags assigned by indexers,
  * trial-registry identifier patterns in the abstract,
  * trial-flavored keywords in the abstract.

The registry scan has two modes. "strict" wants a prefix followed by at
least four digits with at most one separator. "paper_loose" keeps the
historical over-counting behavior (prefix followed by any letter, digit,
or punctuation), so words like "distinct." can match; strict matches are
a subset of loose matches by construction.
"""

from __future__ import annotations

import json
import logging
import re
import string
from dataclasses import dataclass
from functools import lru_cache

from .corpus import Corpus, PublicationRecord, apply_year_window

logger = logging.getLogger(__name__)

DEFAULT_NLM_TAGS: tuple[str, ...] = (
    "adaptive trial",
    "clinical conference",
    "clinical study",
    "clinical trial",
    "clinical trial protocol",
    "clinical trial, phase 1",
    "clinical trial, phase 2",
    "clinical trial, phase 3",
    "clinical trial, phase 4",
    "comparative study",
    "controlled clinical trial",
    "equivalence trial",
    "evaluation study",
    "observational study",
    "pragmatic clinical trial",
    "randomized controlled trial",
    "twin study",
    "validation study",
)

DEFAULT_REGISTRY_PREFIXES: tuple[str, ...] = ("NCT", "EUDRACT", "ISRCTN", "ACTRN")

# Ordered: reports list keywords in this order.
DEFAULT_KEYWORDS: tuple[str, ...] = (
    "randomized",
    "controlled trial",
    "control trial",
    "clinical trial",
    "treatment group",
    "control group",
    "intervention",
    "clinical study",
)

_STRICT_SEPARATORS = " :-#"
_PUNCT_CLASS = re.escape(string.punctuation)

FAMILY_NLM_TAG = "nlm_tag"
FAMILY_REGISTRY = "registry_id"
FAMILY_KEYWORD = "keyword"
FAMILIES = (FAMILY_NLM_TAG, FAMILY_REGISTRY, FAMILY_KEYWORD)


@dataclass(frozen=True)
class RuleSet:
    nlm_tags: tuple[str, ...] = DEFAULT_NLM_TAGS
    registry_prefixes: tuple[str, ...] = DEFAULT_REGISTRY_PREFIXES
    keywords: tuple[str, ...] = DEFAULT_KEYWORDS
    match_mode: str = "strict"  # "strict" | "paper_loose"
    keyword_boundaries: bool = False

    def __post_init__(self) -> None:
        if self.match_mode not in ("strict", "paper_loose"):
            raise ValueError(f"unknown match_mode {self.match_mode!r}")


@dataclass(frozen=True)
class UniverseFlags:
    pmid: str
    matched_tags: frozenset[str]
    matched_registries: frozenset[str]
    matched_keywords: frozenset[str]

    @property
    def in_universe(self) -> bool:
        return bool(self.matched_tags or self.matched_registries or self.matched_keywords)


def scan_nlm_tags(record: PublicationRecord, rules: RuleSet) -> set[str]:
    """Exact tag matches, case-insensitive and whitespace-trimmed."""
    wanted = {t.strip().lower(): t for t in rules.nlm_tags}
    found = set()
    for pt in record.pubtypes:
        hit = wanted.get(pt.strip().lower())
        if hit is not None:
            found.add(hit)
    return found


@lru_cache(maxsize=None)
def _strict_pattern(prefix: str) -> re.Pattern[str]:
    return re.compile(
        re.escape(prefix) + "[" + re.escape(_STRICT_SEPARATORS) + "]?" + r"\d{4,}",
        re.IGNORECASE,
    )


@lru_cache(maxsize=None)
def _loose_pattern(prefix: str) -> re.Pattern[str]:
    return re.compile(re.escape(prefix) + "[" + _PUNCT_CLASS + r"0-9A-Za-z]", re.IGNORECASE)


def scan_registry_ids(record: PublicationRecord, rules: RuleSet) -> set[str]:
    """Registry prefixes found in the abstract under the configured mode."""
    if not record.abstract:
        return set()
    text = record.abstract
    found = set()
    for prefix in rules.registry_prefixes:
        if _strict_pattern(prefix).search(text):
            found.add(prefix)
        elif rules.match_mode == "paper_loose" and _loose_pattern(prefix).search(text):
            found.add(prefix)
    return found


def scan_keywords(record: PublicationRecord, rules: RuleSet) -> set[str]:
    """Keywords present in the abstract, case-insensitive substring match."""
    if not record.abstract:
        return set()
    text = record.abstract.lower()
    found = set()
    for kw in rules.keywords:
        needle = kw.lower()
        if rules.keyword_boundaries:
            if re.search(r"\b" + re.escape(needle) + r"\b", text):
                found.add(kw)
        elif needle in text:
            found.add(kw)
    return found


def flag_record(record: PublicationRecord, rules: RuleSet) -> UniverseFlags:
    return UniverseFlags(
        pmid=record.pmid,
        matched_tags=frozenset(scan_nlm_tags(record, rules)),
        matched_registries=frozenset(scan_registry_ids(record, rules)),
        matched_keywords=frozenset(scan_keywords(record, rules)),
    )


def build_universe(
    corpus: Corpus, rules: RuleSet, window: tuple[int, int]
) -> list[UniverseFlags]:
    """Flags for every record in the year window, in corpus order."""
    lo, hi = window
    windowed = apply_year_window(corpus, lo, hi)
    flags = [flag_record(rec, rules) for rec in windowed]
    members = sum(1 for f in flags if f.in_universe)
    logger.info(
        "universe: %d of %d in-window records match (tags %d, registries %d, keywords %d)",
        members,
        len(flags),
        sum(1 for f in flags if f.matched_tags),
        sum(1 for f in flags if f.matched_registries),
        sum(1 for f in flags if f.matched_keywords),
    )
    return flags


def family_summary(flags: list[UniverseFlags], rules: RuleSet) -> list[tuple[str, str, int]]:
    """Per-rule and per-family match counts as (family, sub_family, count) rows."""
    rows: list[tuple[str, str, int]] = []
    for tag in rules.nlm_tags:
        rows.append((FAMILY_NLM_TAG, tag, sum(1 for f in flags if tag in f.matched_tags)))
    rows.append((FAMILY_NLM_TAG, "any", sum(1 for f in flags if f.matched_tags)))
    for prefix in rules.registry_prefixes:
        rows.append(
            (FAMILY_REGISTRY, prefix, sum(1 for f in flags if prefix in f.matched_registries))
        )
    rows.append((FAMILY_REGISTRY, "any", sum(1 for f in flags if f.matched_registries)))
    for kw in rules.keywords:
        rows.append((FAMILY_KEYWORD, kw, sum(1 for f in flags if kw in f.matched_keywords)))
    rows.append((FAMILY_KEYWORD, "any", sum(1 for f in flags if f.matched_keywords)))
    rows.append(("universe", "any", sum(1 for f in flags if f.in_universe)))
    return rows


def _family_members(flags: list[UniverseFlags]) -> dict[str, set[str]]:
    return {
        FAMILY_NLM_TAG: {f.pmid for f in flags if f.matched_tags},
        FAMILY_REGISTRY: {f.pmid for f in flags if f.matched_registries},
        FAMILY_KEYWORD: {f.pmid for f in flags if f.matched_keywords},
    }


def overlap_report(flags: list[UniverseFlags]) -> list[tuple[str, str, int]]:
    """Pairwise family intersections: for each family, its total and the counts
    shared with each other family."""
    if not flags:
        raise ValueError("overlap_report requires a non-empty flag set")
    members = _family_members(flags)
    rows: list[tuple[str, str, int]] = []
    for fam in FAMILIES:
        rows.append((fam, "any", len(members[fam])))
        for other in FAMILIES:
            if other == fam:
                continue
            rows.append((fam, other, len(members[fam] & members[other])))
    return rows


# ---------------------------------------------------------------------------
# Flag file round trip (used by the CLI)


def write_flags(flags: list[UniverseFlags], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in flags:
            fh.write(
                json.dumps(
                    {
                        "pmid": f.pmid,
                        "tags": sorted(f.matched_tags),
                        "registries": sorted(f.matched_registries),
                        "keywords": sorted(f.matched_keywords),
                        "in_universe": f.in_universe,
                    },
                    ensure_ascii=False,
                )
            )
            fh.write("\n")


def load_flags(path: str) -> list[UniverseFlags]:
    flags = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            flags.append(
                UniverseFlags(
                    pmid=obj["pmid"],
                    matched_tags=frozenset(obj["tags"]),
                    matched_registries=frozenset(obj["registries"]),
                    matched_keywords=frozenset(obj["keywords"]),
                )
            )
    return flags
