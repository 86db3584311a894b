"""Trend analytics over census samples, plus an external registry audit.

Citation timing uses one rule everywhere: a citation from a record published
in year c counts toward a target published in year y when y+1 <= c <= y+t
for the configured horizon t. Series are only reported for years where the
full horizon fits inside the corpus, so the last years never show artificial
decline.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .corpus import Corpus, PublicationRecord
from .distill import ScoreSet
from .evaluation import OperatingPoint

logger = logging.getLogger(__name__)

DEFAULT_TRUNK_JOURNALS = ("JAMA", "N Engl J Med")
DEFAULT_MIN_TRUNK_CITATIONS = 100
DEFAULT_CITATION_HORIZON = 3

# percentiles 10..99 plus 99.9 for the positive-count distribution
DEFAULT_PERCENTILES: tuple[float, ...] = tuple(float(p) for p in range(10, 100)) + (99.9,)

META_PHRASES = (
    "meta-analysis",
    "metaanalysis",
    "metaanalyses",
    "systematic review",
    "systematic reviews",
    "systematically review",
    "systematic search",
    "review of published data",
    "literature review",
    "literature search",
    "search of databases",
    "review all literature",
    "reviewed all literature",
    "narrative review",
    "systemic review",
)

META_DATABASES = (
    "medline",
    "embase",
    "cinahl",
    "pubmed",
    "cochrane central register of controlled trials",
    "biomedcentral",
)

META_NLM_TAGS = frozenset({"literature review", "meta-analysis", "systematic review"})

REST_OF_WORLD = "rest_of_world"
UNKNOWN_COUNTRY = "unknown"

AUDIT_SERIES = ("all", "not_withdrawn", "interventional", "phase_reported")
AUDIT_AXES = ("completion_year", "posted_year")

_WITHDRAWN_STATUSES = frozenset({"withdrawn", "suspended", "terminated"})


class AnalyticsError(Exception):
    pass


# ---------------------------------------------------------------------------
# Census samples


@dataclass(frozen=True)
class CensusSample:
    pmids: frozenset[str]
    stringency: str
    source: str


def build_census(
    scores: ScoreSet, points: Mapping[str, OperatingPoint], source: str = ""
) -> dict[str, CensusSample]:
    """Materialize one sample per stringency by thresholding the scores.
    Higher-stringency thresholds are higher, so samples nest."""
    out = {}
    for name, op in points.items():
        pmids = frozenset(p for p, prob in scores.probs.items() if prob >= op.threshold)
        out[name] = CensusSample(pmids=pmids, stringency=name, source=source or scores.scorer_id)
    return out


# ---------------------------------------------------------------------------
# Year series


def counts_by_year(
    pmids: Iterable[str], corpus: Corpus, normalize: bool = False
) -> dict[int, float]:
    """Records per publication year; optionally percent growth from the
    first reported year."""
    counts: dict[int, int] = {}
    for pmid in pmids:
        if pmid not in corpus:
            continue
        year = corpus.get(pmid).year
        if year is None:
            continue
        counts[year] = counts.get(year, 0) + 1
    series = {year: float(counts[year]) for year in sorted(counts)}
    if not normalize or not series:
        return series
    first = series[min(series)]
    return {year: (value - first) / first * 100.0 for year, value in series.items()}


def _cites_in_window(
    record: PublicationRecord, targets: frozenset[str], corpus: Corpus, t: int
) -> bool:
    if record.year is None:
        return False
    for cited in record.cited_pmids:
        if cited not in targets or cited not in corpus:
            continue
        target_year = corpus.get(cited).year
        if target_year is None:
            continue
        if record.year - t <= target_year <= record.year - 1:
            return True
    return False


def build_citing_sample(
    trial_pmids: Iterable[str], corpus: Corpus, t: int, exclude_trials: bool = True
) -> dict[int, set[str]]:
    """Per year, the records that cite at least one trial published in the
    preceding t years. Trials themselves are excluded. Years are reported
    only where the full t-year lookback reaches back to the first trial year."""
    if t < 1:
        raise AnalyticsError("citation horizon must be at least 1 year")
    targets = frozenset(p for p in trial_pmids if p in corpus)
    trial_years = [corpus.get(p).year for p in targets]
    trial_years = [y for y in trial_years if y is not None]
    if not trial_years:
        raise AnalyticsError("no trial records with publication years")
    first_trial_year = min(trial_years)
    max_year = max((r.year for r in corpus if r.year is not None), default=None)
    if max_year is None:
        raise AnalyticsError("corpus has no records with publication years")

    out: dict[int, set[str]] = {
        y: set() for y in range(first_trial_year + t, max_year + 1)
    }
    for record in corpus:
        if record.year is None or record.year not in out:
            continue
        if exclude_trials and record.pmid in targets:
            continue
        if _cites_in_window(record, targets, corpus, t):
            out[record.year].add(record.pmid)
    return out


# ---------------------------------------------------------------------------
# Journals and citations


def leading_journals(
    corpus: Corpus,
    trunk: Sequence[str] = DEFAULT_TRUNK_JOURNALS,
    min_citations: int = DEFAULT_MIN_TRUNK_CITATIONS,
    window: tuple[int, int] | None = None,
) -> set[str]:
    """Journals receiving at least min_citations citation events from records
    published in the trunk journals. The boundary is inclusive."""
    trunk_set = {j.strip() for j in trunk}
    counts: dict[str, int] = {}
    seen_trunk = False
    for record in corpus:
        if record.journal.strip() not in trunk_set:
            continue
        if window is not None:
            if record.year is None or not (window[0] <= record.year <= window[1]):
                continue
        seen_trunk = True
        for cited in record.cited_pmids:
            if cited not in corpus:
                continue
            journal = corpus.get(cited).journal.strip()
            if journal:
                counts[journal] = counts.get(journal, 0) + 1
    if not seen_trunk:
        logger.warning("no records from trunk journals %s in the corpus", sorted(trunk_set))
        return set()
    return {j for j, c in counts.items() if c >= min_citations}


def _qualifying_citations(
    pmid: str, corpus: Corpus, journals: set[str], t: int
) -> int:
    record = corpus.get(pmid)
    if record.year is None:
        return 0
    count = 0
    for citer_pmid in corpus.citing(pmid):
        citer = corpus.get(citer_pmid)
        if citer.year is None or citer.journal.strip() not in journals:
            continue
        if record.year + 1 <= citer.year <= record.year + t:
            count += 1
    return count


def _horizon_years(years: Iterable[int], corpus: Corpus, t: int) -> list[int]:
    max_year = max((r.year for r in corpus if r.year is not None), default=None)
    if max_year is None:
        return []
    return sorted(y for y in set(years) if y + t <= max_year)


def citation_quantiles(
    sample_pmids: Iterable[str],
    corpus: Corpus,
    journals: set[str],
    t: int = DEFAULT_CITATION_HORIZON,
    percentiles: Sequence[float] = DEFAULT_PERCENTILES,
) -> dict[int, dict]:
    """Per publication year: the share of sample records never cited from the
    given journals within the horizon, and quantiles of the positive counts.

    Quantiles use the inverse empirical distribution (sort, then index at
    ceil(p/100 * n) - 1). Years whose horizon extends past the corpus are
    dropped; years with no positive counts report quantiles as None."""
    by_year: dict[int, list[int]] = {}
    for pmid in sample_pmids:
        if pmid not in corpus:
            continue
        year = corpus.get(pmid).year
        if year is None:
            continue
        by_year.setdefault(year, []).append(_qualifying_citations(pmid, corpus, journals, t))

    out: dict[int, dict] = {}
    for year in _horizon_years(by_year, corpus, t):
        counts = by_year[year]
        positives = sorted(c for c in counts if c > 0)
        row: dict = {
            "n": len(counts),
            "zero_share": sum(1 for c in counts if c == 0) / len(counts),
        }
        if positives:
            row["quantiles"] = {
                p: positives[max(0, math.ceil(p / 100.0 * len(positives)) - 1)]
                for p in percentiles
            }
        else:
            row["quantiles"] = None
        out[year] = row
    return out


def funding_and_citation_shares(
    sample_pmids: Iterable[str],
    corpus: Corpus,
    journals: set[str],
    t: int = DEFAULT_CITATION_HORIZON,
) -> dict[int, dict]:
    """Per publication year: share with public funding, share ever cited from
    the given journals within the horizon, and the latter among the funded.
    Citation-dependent shares are None for years whose horizon leaves the
    corpus; empty denominators are None."""
    by_year: dict[int, list[PublicationRecord]] = {}
    for pmid in sample_pmids:
        if pmid not in corpus:
            continue
        record = corpus.get(pmid)
        if record.year is None:
            continue
        by_year.setdefault(record.year, []).append(record)

    horizon_ok = set(_horizon_years(by_year, corpus, t))
    out: dict[int, dict] = {}
    for year in sorted(by_year):
        records = by_year[year]
        n = len(records)
        funded = [r for r in records if r.us_public_funding]
        row: dict = {
            "n": n,
            "public_funding_share": len(funded) / n if n else None,
            "ever_cited_share": None,
            "cited_given_funded_share": None,
        }
        if year in horizon_ok:
            cited_flags = {
                r.pmid: _qualifying_citations(r.pmid, corpus, journals, t) > 0 for r in records
            }
            row["ever_cited_share"] = sum(cited_flags.values()) / n if n else None
            if funded:
                row["cited_given_funded_share"] = sum(
                    1 for r in funded if cited_flags[r.pmid]
                ) / len(funded)
        out[year] = row
    return out


# ---------------------------------------------------------------------------
# Geography


def record_country(record: PublicationRecord) -> str:
    """First-listed author country; records without one are 'unknown'."""
    if record.author_countries and record.author_countries[0]:
        return record.author_countries[0]
    return UNKNOWN_COUNTRY


def country_trends(
    sample_pmids: Iterable[str],
    corpus: Corpus,
    anchor_years: tuple[int, int] = (2013, 2019),
    min_count: int = 200,
) -> tuple[dict[str, dict[int, int]], list[dict]]:
    """Per-country yearly counts plus a growth table between two anchors.

    Countries below min_count in the later anchor year are pooled into
    'rest_of_world'. The growth table reports absolute and percent change,
    sorted by percent change, largest first."""
    year_a, year_b = anchor_years
    if year_a >= year_b:
        raise AnalyticsError(f"anchor years must be increasing, got {anchor_years}")
    raw: dict[str, dict[int, int]] = {}
    for pmid in sample_pmids:
        if pmid not in corpus:
            continue
        record = corpus.get(pmid)
        if record.year is None:
            continue
        bucket = raw.setdefault(record_country(record), {})
        bucket[record.year] = bucket.get(record.year, 0) + 1

    keep = {
        c for c, years in raw.items()
        if c == UNKNOWN_COUNTRY or years.get(year_b, 0) >= min_count
    }
    pooled: dict[str, dict[int, int]] = {}
    for country, years in raw.items():
        target = country if country in keep else REST_OF_WORLD
        bucket = pooled.setdefault(target, {})
        for year, n in years.items():
            bucket[year] = bucket.get(year, 0) + n

    rows = []
    for country, years in pooled.items():
        a = years.get(year_a, 0)
        b = years.get(year_b, 0)
        rows.append(
            {
                "country": country,
                f"count_{year_a}": a,
                f"count_{year_b}": b,
                "change": b - a,
                "pct_change": ((b - a) / a * 100.0) if a else None,
            }
        )
    rows.sort(key=lambda r: (r["pct_change"] is None, -(r["pct_change"] or 0.0), r["country"]))
    return pooled, rows


# ---------------------------------------------------------------------------
# Meta-analysis flags


def flag_meta_analyses(records: Iterable[PublicationRecord], method: str) -> set[str]:
    """Flag likely literature syntheses, by abstract keywords or by curated tags.

    The keyword method fires on any listed phrase, or on mentions of at least
    two bibliographic databases. The tag method checks publication types."""
    if method not in ("keyword", "nlm_tag"):
        raise AnalyticsError(f"unknown method {method!r}")
    flagged = set()
    for record in records:
        if method == "nlm_tag":
            if {pt.strip().lower() for pt in record.pubtypes} & META_NLM_TAGS:
                flagged.add(record.pmid)
            continue
        if not record.abstract:
            continue
        text = record.abstract.lower()
        if any(phrase in text for phrase in META_PHRASES):
            flagged.add(record.pmid)
            continue
        db_mentions = sum(1 for db in META_DATABASES if db in text)
        if db_mentions >= 2:
            flagged.add(record.pmid)
    return flagged


# ---------------------------------------------------------------------------
# Registry audit


@dataclass(frozen=True)
class RegistryStudyRecord:
    nct_id: str
    overall_status: str
    study_type: str
    phase: str | None
    completion_year: int | None
    posted_year: int | None


REGISTRY_COLUMNS = ("nct_id", "overall_status", "study_type", "phase", "completion_year", "posted_year")


def load_registry_csv(path: str) -> list[RegistryStudyRecord]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REGISTRY_COLUMNS if c not in header]
        if missing:
            raise AnalyticsError(f"{path}: missing columns {missing}")
        records = []
        for row in reader:
            records.append(
                RegistryStudyRecord(
                    nct_id=(row["nct_id"] or "").strip(),
                    overall_status=(row["overall_status"] or "").strip(),
                    study_type=(row["study_type"] or "").strip(),
                    phase=(row["phase"] or "").strip() or None,
                    completion_year=_year_or_none(row["completion_year"]),
                    posted_year=_year_or_none(row["posted_year"]),
                )
            )
    return records


def _year_or_none(raw: str | None) -> int | None:
    raw = (raw or "").strip()
    return int(raw) if raw.isdigit() else None


def _passes(record: RegistryStudyRecord, series: str) -> bool:
    if series == "all":
        return True
    if record.overall_status.strip().lower() in _WITHDRAWN_STATUSES:
        return False
    if series == "not_withdrawn":
        return True
    if record.study_type.strip().lower() != "interventional":
        return False
    if series == "interventional":
        return True
    # phase_reported: phase must be present and informative
    return record.phase is not None and record.phase.strip().lower() != "not applicable"


def registry_audit(records: Iterable[RegistryStudyRecord]) -> dict[str, dict[str, dict[int, int]]]:
    """Counts per year for the four-step filter cascade, on both time axes.

    The cascade drops withdrawn, suspended, and terminated studies, then
    non-interventional designs, then studies with no informative phase. Each
    series is a subset of the one before it."""
    records = list(records)
    out: dict[str, dict[str, dict[int, int]]] = {}
    for axis in AUDIT_AXES:
        axis_series: dict[str, dict[int, int]] = {}
        for series in AUDIT_SERIES:
            counts: dict[int, int] = {}
            for record in records:
                year = getattr(record, axis)
                if year is None or not _passes(record, series):
                    continue
                counts[year] = counts.get(year, 0) + 1
            axis_series[series] = dict(sorted(counts.items()))
        out[axis] = axis_series
    return out


# ---------------------------------------------------------------------------
# TSV emission


def write_year_series_tsv(series: Mapping[int, object], path: str, value_name: str = "value") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"year\t{value_name}\n")
        for year in sorted(series):
            fh.write(f"{year}\t{series[year]!r}\n")


def write_shares_tsv(shares: Mapping[int, dict], path: str) -> None:
    cols = ("n", "public_funding_share", "ever_cited_share", "cited_given_funded_share")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("year\t" + "\t".join(cols) + "\n")
        for year in sorted(shares):
            row = shares[year]
            cells = ["" if row[c] is None else repr(row[c]) for c in cols]
            fh.write(f"{year}\t" + "\t".join(cells) + "\n")


def write_quantiles_tsv(quantiles: Mapping[int, dict], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("year\tn\tzero_share\tpercentile\tcitations\n")
        for year in sorted(quantiles):
            row = quantiles[year]
            if row["quantiles"] is None:
                fh.write(f"{year}\t{row['n']}\t{row['zero_share']!r}\t\t\n")
                continue
            for pct in sorted(row["quantiles"]):
                fh.write(
                    f"{year}\t{row['n']}\t{row['zero_share']!r}\t{pct!r}\t{row['quantiles'][pct]}\n"
                )


def write_country_growth_tsv(rows: Sequence[dict], path: str) -> None:
    if not rows:
        raise AnalyticsError("no growth rows to write")
    cols = list(rows[0].keys())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(cols) + "\n")
        for row in rows:
            fh.write(
                "\t".join("" if row[c] is None else str(row[c]) for c in cols) + "\n"
            )


def write_audit_tsv(audit: Mapping[str, Mapping[str, Mapping[int, int]]], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("axis\tseries\tyear\tcount\n")
        for axis in AUDIT_AXES:
            for series in AUDIT_SERIES:
                for year, count in sorted(audit[axis][series].items()):
                    fh.write(f"{axis}\t{series}\t{year}\t{count}\n")


def write_citing_sample_tsv(citing: Mapping[int, set[str]], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("year\tcount\n")
        for year in sorted(citing):
            fh.write(f"{year}\t{len(citing[year])}\n")
