"""Rule-scan tests backed by a from-scratch matching oracle.

The oracle walks strings by hand (no regular expressions) so that a shared
mistake between implementation and test is unlikely.
"""

import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trialcensus.corpus import Corpus, PublicationRecord
from trialcensus.universe import (
    DEFAULT_KEYWORDS,
    DEFAULT_NLM_TAGS,
    DEFAULT_REGISTRY_PREFIXES,
    RuleSet,
    build_universe,
    family_summary,
    flag_record,
    load_flags,
    overlap_report,
    scan_keywords,
    scan_nlm_tags,
    scan_registry_ids,
    write_flags,
)

from conftest import synthetic_corpus


# ---------------------------------------------------------------------------
# Oracle: independent matching, character by character


def oracle_tags(record, tags):
    have = {p.strip().lower() for p in record.pubtypes}
    return {t for t in tags if t.strip().lower() in have}


def oracle_registries(record, prefixes, mode):
    if not record.abstract:
        return set()
    text = record.abstract.lower()
    found = set()
    for prefix in prefixes:
        needle = prefix.lower()
        for i in range(len(text) - len(needle) + 1):
            if text[i : i + len(needle)] != needle:
                continue
            rest = text[i + len(needle) :]
            strict_hit = False
            for skip in (0, 1):
                if skip == 1 and not (rest[:1] and rest[0] in " :-#"):
                    continue
                seg = rest[skip:]
                digits = 0
                while digits < len(seg) and seg[digits].isdigit():
                    digits += 1
                if digits >= 4:
                    strict_hit = True
                    break
            loose_hit = bool(rest) and (rest[0] in string.punctuation or rest[0].isalnum())
            if strict_hit or (mode == "paper_loose" and loose_hit):
                found.add(prefix)
                break
    return found


def oracle_keywords(record, keywords, boundaries=False):
    if not record.abstract:
        return set()
    text = record.abstract.lower()
    found = set()
    for kw in keywords:
        needle = kw.lower()
        start = 0
        while True:
            pos = text.find(needle, start)
            if pos < 0:
                break
            if not boundaries:
                found.add(kw)
                break
            before = text[pos - 1] if pos > 0 else " "
            after_idx = pos + len(needle)
            after = text[after_idx] if after_idx < len(text) else " "

            def wordish(ch):
                return ch.isalnum() or ch == "_"

            if not wordish(before) and not wordish(after):
                found.add(kw)
                break
            start = pos + 1
    return found


def record_with(abstract=None, pubtypes=(), pmid="1", year=2015):
    return PublicationRecord(
        pmid=pmid,
        year=year,
        title="t",
        abstract=abstract,
        journal="J",
        pubtypes=frozenset(pubtypes),
    )


# ---------------------------------------------------------------------------
# Directed cases


class TestTagScan:
    def test_case_and_whitespace_insensitive(self):
        rec = record_with(pubtypes={"  Randomized Controlled Trial ", "JOURNAL ARTICLE"})
        assert scan_nlm_tags(rec, RuleSet()) == {"randomized controlled trial"}

    def test_non_matching_tags_ignored(self):
        rec = record_with(pubtypes={"editorial", "letter"})
        assert scan_nlm_tags(rec, RuleSet()) == set()


class TestRegistryScan:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("Registered as NCT01234567 in 2010.", {"NCT"}),
            ("Registered as NCT 01234567.", {"NCT"}),
            ("Registered as NCT-01234567.", {"NCT"}),
            ("Registered as NCT:01234567.", {"NCT"}),
            ("Registered as NCT#01234567.", {"NCT"}),
            ("nct01234567 lowercase works", {"NCT"}),
            ("NCT123 has too few digits", set()),
            ("the word 'nctuariam' is not an id", set()),
            ("ISRCTN49286123 and EUDRACT 2010-019348-31", {"ISRCTN", "EUDRACT"}),
            ("ACTRN12613000456719 antipodean", {"ACTRN"}),
            ("no ids at all", set()),
        ],
    )
    def test_strict_matching(self, text, expected):
        assert scan_registry_ids(record_with(abstract=text), RuleSet()) == expected

    def test_loose_mode_adds_but_never_removes(self):
        # letters after the prefix only count in paper_loose mode
        rec = record_with(abstract="see NCTA register")
        assert scan_registry_ids(rec, RuleSet(match_mode="strict")) == set()
        assert scan_registry_ids(rec, RuleSet(match_mode="paper_loose")) == {"NCT"}

    def test_no_abstract_no_match(self):
        assert scan_registry_ids(record_with(abstract=None), RuleSet()) == set()


class TestKeywordScan:
    def test_substring_semantics(self):
        rec = record_with(abstract="An interventional cohort")
        assert "intervention" in scan_keywords(rec, RuleSet())

    def test_boundary_mode_requires_whole_words(self):
        rec = record_with(abstract="An interventional cohort")
        assert scan_keywords(rec, RuleSet(keyword_boundaries=True)) == set()
        rec2 = record_with(abstract="An intervention, applied")
        assert "intervention" in scan_keywords(rec2, RuleSet(keyword_boundaries=True))

    def test_multiword_keywords(self):
        rec = record_with(abstract="a large controlled trial of tea")
        hits = scan_keywords(rec, RuleSet())
        assert "controlled trial" in hits and "clinical trial" not in hits


# ---------------------------------------------------------------------------
# Oracle equivalence on synthetic data


@pytest.mark.parametrize("mode", ["strict", "paper_loose"])
def test_scans_match_oracle_on_synthetic_corpus(mode):
    corpus, _ = synthetic_corpus(800, seed=5)
    rules = RuleSet(match_mode=mode)
    for rec in corpus:
        assert scan_nlm_tags(rec, rules) == oracle_tags(rec, rules.nlm_tags)
        assert scan_registry_ids(rec, rules) == oracle_registries(
            rec, rules.registry_prefixes, mode
        )
        assert scan_keywords(rec, rules) == oracle_keywords(rec, rules.keywords)


def test_summary_and_overlaps_match_set_oracle():
    corpus, _ = synthetic_corpus(1500, seed=9)
    rules = RuleSet()
    window = (2010, 2022)
    flags = build_universe(corpus, rules, window)

    tag_set, reg_set, kw_set = set(), set(), set()
    per_rule: dict[tuple[str, str], set] = {}
    for rec in corpus:
        if rec.year is None or not (window[0] <= rec.year <= window[1]):
            continue
        for t in oracle_tags(rec, rules.nlm_tags):
            tag_set.add(rec.pmid)
            per_rule.setdefault(("nlm_tag", t), set()).add(rec.pmid)
        for p in oracle_registries(rec, rules.registry_prefixes, rules.match_mode):
            reg_set.add(rec.pmid)
            per_rule.setdefault(("registry_id", p), set()).add(rec.pmid)
        for k in oracle_keywords(rec, rules.keywords):
            kw_set.add(rec.pmid)
            per_rule.setdefault(("keyword", k), set()).add(rec.pmid)

    summary = {(fam, sub): n for fam, sub, n in family_summary(flags, rules)}
    assert summary[("nlm_tag", "any")] == len(tag_set)
    assert summary[("registry_id", "any")] == len(reg_set)
    assert summary[("keyword", "any")] == len(kw_set)
    assert summary[("universe", "any")] == len(tag_set | reg_set | kw_set)
    for (fam, sub), members in per_rule.items():
        assert summary[(fam, sub)] == len(members), (fam, sub)

    by_name = {"nlm_tag": tag_set, "registry_id": reg_set, "keyword": kw_set}
    overlaps = {(fam, other): n for fam, other, n in overlap_report(flags)}
    for fam, fam_set in by_name.items():
        assert overlaps[(fam, "any")] == len(fam_set)
        for other, other_set in by_name.items():
            if other != fam:
                assert overlaps[(fam, other)] == len(fam_set & other_set)


def test_overlap_report_rejects_empty():
    with pytest.raises(ValueError):
        overlap_report([])


# ---------------------------------------------------------------------------
# Properties


registry_fragments = st.sampled_from(
    [
        "NCT01234567", "NCT 0123", "NCT0123", "nct99887766", "NCT-44556677",
        "ISRCTN12345678", "ISRCTN", "ACTRN12613000456719", "EUDRACT 2010-019348-31",
        "eudract2004", "NCTA", "NCT.", "plain words", "randomized",
        "clinical trial", "treatment group", "controlled", "trial",
    ]
)
abstract_texts = st.lists(registry_fragments, min_size=0, max_size=8).map(" ".join) | st.text(
    alphabet=string.ascii_letters + string.digits + " :-#.,;()", max_size=120
)


@settings(max_examples=200, deadline=None)
@given(text=abstract_texts)
def test_strict_matches_are_a_subset_of_loose(text):
    rec = record_with(abstract=text or None)
    strict = scan_registry_ids(rec, RuleSet(match_mode="strict"))
    loose = scan_registry_ids(rec, RuleSet(match_mode="paper_loose"))
    assert strict <= loose
    assert strict == oracle_registries(rec, DEFAULT_REGISTRY_PREFIXES, "strict")
    assert loose == oracle_registries(rec, DEFAULT_REGISTRY_PREFIXES, "paper_loose")


@settings(max_examples=150, deadline=None)
@given(text=abstract_texts, suffix=abstract_texts)
def test_keyword_matches_grow_with_text(text, suffix):
    shorter = record_with(abstract=text or None)
    longer = record_with(abstract=(text + " " + suffix).strip() or None)
    assert scan_keywords(shorter, RuleSet()) <= scan_keywords(longer, RuleSet())


@settings(max_examples=100, deadline=None)
@given(text=abstract_texts, pubtypes=st.sets(st.sampled_from(DEFAULT_NLM_TAGS + ("editorial",)), max_size=3))
def test_membership_is_union_of_families(text, pubtypes):
    rec = record_with(abstract=text or None, pubtypes=pubtypes)
    flags = flag_record(rec, RuleSet())
    assert flags.in_universe == bool(
        flags.matched_tags or flags.matched_registries or flags.matched_keywords
    )


def test_keyword_subset_rule_monotone():
    # fewer keywords can only ever match less
    few = RuleSet(keywords=DEFAULT_KEYWORDS[:3])
    rec = record_with(abstract="a randomized clinical trial with a control group")
    assert scan_keywords(rec, few) <= scan_keywords(rec, RuleSet())


def test_flags_round_trip(tmp_path):
    corpus, _ = synthetic_corpus(120, seed=3)
    flags = build_universe(corpus, RuleSet(), (2008, 2024))
    path = str(tmp_path / "flags.jsonl")
    write_flags(flags, path)
    assert load_flags(path) == flags
