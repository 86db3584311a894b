"""Publication corpus: record model, MEDLINE XML ingestion, JSONL storage.

The corpus is keyed by PMID and carries a reverse-citation index so that
"who cites this record" lookups do not rescan the whole collection.
Records with absent abstracts stay in the corpus (they still count for
trend series) but downstream classifiers skip them.
"""

from __future__ import annotations

import json
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)

# Canonical JSONL key order. write_jsonl emits exactly these keys and
# load_jsonl rejects lines that do not conform.
_SCHEMA_KEYS = (
    "pmid",
    "year",
    "title",
    "abstract",
    "journal",
    "pubtypes",
    "us_public_funding",
    "nih_grant_ids",
    "author_countries",
    "cited_pmids",
)

YEAR_MIN = 1900
YEAR_MAX = 2100


class CorpusError(Exception):
    """Base class for corpus loading failures."""


class CorpusParseError(CorpusError):
    """Malformed XML input. Carries the byte offset of the failure."""

    def __init__(self, message: str, byte_offset: int, line: int, column: int):
        super().__init__(f"{message} (byte offset {byte_offset}, line {line}, column {column})")
        self.byte_offset = byte_offset
        self.line = line
        self.column = column


class DuplicatePmidError(CorpusError):
    """Same PMID appears twice in one input."""

    def __init__(self, pmid: str, first_line: int | None = None, second_line: int | None = None):
        if first_line is not None and second_line is not None:
            msg = f"duplicate pmid {pmid!r}: first seen on line {first_line}, again on line {second_line}"
        else:
            msg = f"duplicate pmid {pmid!r}"
        super().__init__(msg)
        self.pmid = pmid
        self.first_line = first_line
        self.second_line = second_line


@dataclass(frozen=True)
class PublicationRecord:
    """One publication. Field order matches the JSONL schema."""

    pmid: str
    year: int | None
    title: str
    abstract: str | None
    journal: str
    pubtypes: frozenset[str]
    us_public_funding: bool = False
    nih_grant_ids: tuple[str, ...] = ()
    author_countries: tuple[str | None, ...] = ()  # byline order
    cited_pmids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.pmid:
            raise ValueError("pmid must be non-empty")
        if self.year is not None and not (YEAR_MIN <= self.year <= YEAR_MAX):
            raise ValueError(f"year {self.year} outside [{YEAR_MIN}, {YEAR_MAX}]")
        if self.pmid in self.cited_pmids:
            raise ValueError(f"record {self.pmid} cites itself")

    def to_json_dict(self) -> dict:
        return {
            "pmid": self.pmid,
            "year": self.year,
            "title": self.title,
            "abstract": self.abstract,
            "journal": self.journal,
            "pubtypes": sorted(self.pubtypes),
            "us_public_funding": self.us_public_funding,
            "nih_grant_ids": list(self.nih_grant_ids),
            "author_countries": list(self.author_countries),
            "cited_pmids": list(self.cited_pmids),
        }


class Corpus:
    """Immutable collection of records with total pmid lookups."""

    def __init__(self, records: Iterable[PublicationRecord]):
        self._records: dict[str, PublicationRecord] = {}
        for rec in records:
            if rec.pmid in self._records:
                raise DuplicatePmidError(rec.pmid)
            self._records[rec.pmid] = rec
        self._reverse = _transpose(self._records.values())

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[PublicationRecord]:
        return iter(self._records.values())

    def __contains__(self, pmid: str) -> bool:
        return pmid in self._records

    def get(self, pmid: str) -> PublicationRecord:
        return self._records[pmid]

    def pmids(self) -> list[str]:
        return list(self._records)

    def citing(self, pmid: str) -> tuple[str, ...]:
        """PMIDs of stored records that cite `pmid` (exact transpose of cited_pmids)."""
        return self._reverse.get(pmid, ())


def _transpose(records: Iterable[PublicationRecord]) -> dict[str, tuple[str, ...]]:
    reverse: dict[str, list[str]] = {}
    for rec in records:
        for target in dict.fromkeys(rec.cited_pmids):
            reverse.setdefault(target, []).append(rec.pmid)
    return {target: tuple(citers) for target, citers in reverse.items()}


# ---------------------------------------------------------------------------
# MEDLINE XML


def parse_medline_xml(xml_bytes: bytes) -> list[PublicationRecord]:
    """Parse the supported MEDLINE XML subset into records, in document order.

    Articles missing a PMID are skipped; one warning reports how many.
    Malformed XML raises CorpusParseError with the byte offset of the fault.
    """
    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError as exc:
        line, column = exc.position
        raise CorpusParseError(
            f"malformed XML: {exc.msg if hasattr(exc, 'msg') else exc}",
            byte_offset=_byte_offset(xml_bytes, line, column),
            line=line,
            column=column,
        ) from exc

    records: list[PublicationRecord] = []
    skipped = 0
    for article in root.iter("PubmedArticle"):
        citation = article.find("MedlineCitation")
        if citation is None:
            skipped += 1
            continue
        pmid = _text(citation.find("PMID"))
        if not pmid:
            skipped += 1
            continue
        art = citation.find("Article")
        title = _text(art.find("ArticleTitle")) if art is not None else ""
        abstract = _abstract_text(art)
        year = _pub_year(art)
        journal = _text(citation.find("MedlineJournalInfo/MedlineTA"))
        pubtypes = frozenset(
            _text(pt).lower()
            for pt in (art.findall("PublicationTypeList/PublicationType") if art is not None else [])
            if _text(pt)
        )
        records.append(
            PublicationRecord(
                pmid=pmid,
                year=year,
                title=title,
                abstract=abstract,
                journal=journal,
                pubtypes=pubtypes,
            )
        )
    if skipped:
        logger.warning("skipped %d article(s) with no PMID", skipped)
    return records


def _byte_offset(data: bytes, line: int, column: int) -> int:
    # expat positions are 1-based lines and 0-based columns
    lines = data.split(b"\n")
    return sum(len(l) + 1 for l in lines[: line - 1]) + column


def _text(element: ET.Element | None) -> str:
    if element is None:
        return ""
    return "".join(element.itertext()).strip()


def _abstract_text(art: ET.Element | None) -> str | None:
    if art is None:
        return None
    parts = [_text(el) for el in art.findall("Abstract/AbstractText")]
    parts = [p for p in parts if p]
    if not parts:
        return None
    return " ".join(parts)


def _pub_year(art: ET.Element | None) -> int | None:
    if art is None:
        return None
    raw = _text(art.find("Journal/JournalIssue/PubDate/Year"))
    if not raw or not raw.isdigit():
        return None
    year = int(raw)
    if not (YEAR_MIN <= year <= YEAR_MAX):
        return None
    return year


# ---------------------------------------------------------------------------
# JSONL storage


def load_jsonl(path: str) -> Corpus:
    """Load a corpus from JSONL. Schema violations reject the line and
    loading continues; a duplicate PMID is a hard error naming both lines."""
    records: list[PublicationRecord] = []
    seen: dict[str, int] = {}
    rejected = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = _record_from_json(obj)
            except (json.JSONDecodeError, ValueError, TypeError) as exc:
                logger.warning("%s line %d rejected: %s", path, line_no, exc)
                rejected += 1
                continue
            if rec.pmid in seen:
                raise DuplicatePmidError(rec.pmid, seen[rec.pmid], line_no)
            seen[rec.pmid] = line_no
            records.append(rec)
    if rejected:
        logger.warning("%s: %d line(s) rejected", path, rejected)
    return Corpus(records)


def write_jsonl(corpus: Corpus, path: str) -> None:
    """Write the corpus in canonical form: fixed key order, sorted pubtypes."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in corpus:
            fh.write(json.dumps(rec.to_json_dict(), ensure_ascii=False))
            fh.write("\n")


def _record_from_json(obj: object) -> PublicationRecord:
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    extra = set(obj) - set(_SCHEMA_KEYS)
    if extra:
        raise ValueError(f"unknown keys {sorted(extra)}")
    missing = set(_SCHEMA_KEYS) - set(obj)
    if missing:
        raise ValueError(f"missing keys {sorted(missing)}")

    pmid = obj["pmid"]
    if not isinstance(pmid, str) or not pmid:
        raise ValueError("pmid must be a non-empty string")
    year = obj["year"]
    if year is not None and (isinstance(year, bool) or not isinstance(year, int)):
        raise ValueError("year must be an integer or null")
    if not isinstance(obj["title"], str):
        raise ValueError("title must be a string")
    abstract = obj["abstract"]
    if abstract is not None and not isinstance(abstract, str):
        raise ValueError("abstract must be a string or null")
    if not isinstance(obj["journal"], str):
        raise ValueError("journal must be a string")
    if not isinstance(obj["pubtypes"], list) or not all(isinstance(t, str) for t in obj["pubtypes"]):
        raise ValueError("pubtypes must be a list of strings")
    if not isinstance(obj["us_public_funding"], bool):
        raise ValueError("us_public_funding must be a boolean")
    grants = obj["nih_grant_ids"]
    if not isinstance(grants, list) or not all(isinstance(g, str) for g in grants):
        raise ValueError("nih_grant_ids must be a list of strings")
    countries = obj["author_countries"]
    if not isinstance(countries, list) or not all(
        c is None or isinstance(c, str) for c in countries
    ):
        raise ValueError("author_countries must be a list of strings or nulls")
    cited = obj["cited_pmids"]
    if not isinstance(cited, list) or not all(isinstance(c, str) and c for c in cited):
        raise ValueError("cited_pmids must be a list of non-empty strings")

    return PublicationRecord(
        pmid=pmid,
        year=year,
        title=obj["title"],
        abstract=abstract,
        journal=obj["journal"],
        pubtypes=frozenset(obj["pubtypes"]),
        us_public_funding=obj["us_public_funding"],
        nih_grant_ids=tuple(grants),
        author_countries=tuple(countries),
        cited_pmids=tuple(cited),
    )


def apply_year_window(corpus: Corpus, lo: int, hi: int) -> Corpus:
    """Records whose publication year lies in [lo, hi]. Missing years are excluded."""
    if lo > hi:
        raise ValueError(f"empty year window: {lo} > {hi}")
    return Corpus(rec for rec in corpus if rec.year is not None and lo <= rec.year <= hi)
