"""Shared fixtures: a synthetic bibliographic corpus with planted ground truth.

The generator plants two overlapping vocabularies so that a bag-of-words
model can separate the classes, gives most records rule-family evidence
(tags, registry ids, keywords), wires citations to strictly earlier years,
and routes a slice of the corpus through two flagship journals so the
citation analytics have something to find.
"""

from __future__ import annotations

import random

import pytest

from trialcensus.corpus import Corpus, PublicationRecord

COMMON_TOKENS = (
    "patients study results methods analysis data baseline outcome outcomes "
    "hospital clinical followup months weeks assessment measured primary "
    "secondary significant reported conducted included total mean median age "
    "women men adults children health care treatment therapy disease chronic "
    "acute severity improvement change compared versus standard usual"
).split()

TRIAL_TOKENS = (
    "randomized randomised placebo blind doubleblind enrollment enrolled arm "
    "arms efficacy dose dosing intervention trial protocol endpoint allocation "
    "recruited multicenter phase adherence washout crossover randomization "
    "masking intention treat superiority"
).split()

NONTRIAL_TOKENS = (
    "cohort retrospective prevalence association expression cells mice murine "
    "survey registry crosssectional biomarker incidence gene imaging assay "
    "cultured antibodies sequencing prognostic observational correlation "
    "epidemiology specimens histology receptor pathway"
).split()

JOURNALS = (
    "Lancet", "BMJ", "Trials", "J Clin Oncol", "Circulation", "Diabetes Care",
    "Ann Intern Med", "Eur Heart J", "Chest", "Blood", "Gut", "Thorax",
    "Pediatrics", "Neurology", "J Hepatol", "Kidney Int",
)

TRUNK_JOURNALS = ("JAMA", "N Engl J Med")

COUNTRIES = (
    ["U.S.A."] * 5 + ["China"] * 3 + ["United Kingdom"] * 2
    + ["Germany", "Japan", "Brazil", "India", None]
)


def _abstract(rng: random.Random, is_trial: bool) -> str:
    length = rng.randint(40, 70)
    pool = TRIAL_TOKENS if is_trial else NONTRIAL_TOKENS
    words = [
        rng.choice(pool) if rng.random() < 0.45 else rng.choice(COMMON_TOKENS)
        for _ in range(length)
    ]
    text = " ".join(words)
    if is_trial and rng.random() < 0.30:
        text += f". Registered under NCT{rng.randint(10000000, 99999999)}."
    return text.capitalize() + "."


def synthetic_corpus(
    n: int,
    seed: int = 0,
    positive_rate: float = 0.112,
    missing_abstract_rate: float = 0.08,
    year_lo: int = 2008,
    year_hi: int = 2024,
) -> tuple[Corpus, dict[str, bool]]:
    """Build n records plus a {pmid: is_trial} gold map."""
    rng = random.Random(seed)
    gold: dict[str, bool] = {}
    records: list[PublicationRecord] = []
    by_year: dict[int, list[str]] = {}
    trial_pmids: list[str] = []

    for i in range(n):
        pmid = str(100000 + i)
        is_trial = rng.random() < positive_rate
        year = rng.randint(year_lo, year_hi)
        abstract = None if rng.random() < missing_abstract_rate else _abstract(rng, is_trial)

        if is_trial:
            pubtypes = ["randomized controlled trial", "journal article"]
            if rng.random() < 0.3:
                pubtypes.append("clinical trial, phase 3")
            journal_pool = JOURNALS + TRUNK_JOURNALS
        else:
            roll = rng.random()
            if roll < 0.45:
                pubtypes = ["observational study", "journal article"]
            elif roll < 0.70:
                pubtypes = ["comparative study", "journal article"]
            else:
                pubtypes = ["journal article"]  # in universe only via keywords, if any
            journal_pool = JOURNALS
        journal = rng.choice(journal_pool)
        # a dedicated slice of non-trials publishes in the trunk journals so
        # that leading-journal discovery has citation events to count
        if not is_trial and rng.random() < 0.06:
            journal = rng.choice(TRUNK_JOURNALS)

        funded = rng.random() < (0.35 if is_trial else 0.12)
        country = rng.choice(COUNTRIES)
        records.append(
            PublicationRecord(
                pmid=pmid,
                year=year,
                title=f"Synthetic record {pmid}",
                abstract=abstract,
                journal=journal,
                pubtypes=frozenset(pubtypes),
                us_public_funding=funded,
                nih_grant_ids=(f"R01HL{i:05d}",) if funded else (),
                author_countries=(country,) if country else (),
            )
        )
        gold[pmid] = is_trial
        by_year.setdefault(year, []).append(pmid)
        if is_trial:
            trial_pmids.append(pmid)

    # citations point strictly backwards in time; trunk-journal records cite
    # trials heavily so the flagship-seeded journal list is non-trivial
    earlier: dict[int, list[str]] = {}
    running: list[str] = []
    for year in sorted(by_year):
        earlier[year] = list(running)
        running.extend(by_year[year])
    earlier_trials: dict[int, list[str]] = {}
    running = []
    for year in sorted(by_year):
        earlier_trials[year] = list(running)
        running.extend(p for p in by_year[year] if gold[p])

    cited: dict[str, tuple[str, ...]] = {}
    for rec in records:
        pool = earlier.get(rec.year, [])
        if not pool:
            continue
        k = rng.randint(0, min(6, len(pool)))
        refs = rng.sample(pool, k) if k else []
        if rec.journal in TRUNK_JOURNALS:
            trials = earlier_trials.get(rec.year, [])
            if trials:
                extra = rng.sample(trials, min(len(trials), rng.randint(2, 8)))
                refs = list(dict.fromkeys(refs + extra))
        if refs:
            cited[rec.pmid] = tuple(refs)

    final = [
        PublicationRecord(
            pmid=r.pmid,
            year=r.year,
            title=r.title,
            abstract=r.abstract,
            journal=r.journal,
            pubtypes=r.pubtypes,
            us_public_funding=r.us_public_funding,
            nih_grant_ids=r.nih_grant_ids,
            author_countries=r.author_countries,
            cited_pmids=cited.get(r.pmid, ()),
        )
        for r in records
    ]
    return Corpus(final), gold


@pytest.fixture(scope="session")
def small_corpus() -> tuple[Corpus, dict[str, bool]]:
    return synthetic_corpus(600, seed=11)


@pytest.fixture(scope="session")
def medium_corpus() -> tuple[Corpus, dict[str, bool]]:
    return synthetic_corpus(2000, seed=23)
