import json
import logging

import pytest

from trainer.data import (
    DataError,
    join_training_examples,
    load_corpus_abstracts,
    load_weak_labels,
)

from conftest import make_records, write_corpus, write_weak_labels


def _write_lines(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


class TestWeakLabels:
    def test_round_trip(self, tmp_path):
        rows = make_records(20, seed=1)
        path = str(tmp_path / "weak.jsonl")
        written = write_weak_labels(rows, path)
        pairs = load_weak_labels(path)
        assert len(pairs) == written == 20
        assert pairs[0] == (rows[0]["pmid"], rows[0]["gold"])

    def test_unknown_verdict(self, tmp_path):
        path = str(tmp_path / "weak.jsonl")
        _write_lines(path, [{"pmid": "1", "verdict": "maybe"}])
        with pytest.raises(DataError, match="line 1: unknown verdict 'maybe'"):
            load_weak_labels(path)

    def test_duplicate_pmid(self, tmp_path):
        path = str(tmp_path / "weak.jsonl")
        _write_lines(
            path,
            [{"pmid": "1", "verdict": "include"}, {"pmid": "1", "verdict": "exclude"}],
        )
        with pytest.raises(DataError, match="line 2: duplicate pmid '1'"):
            load_weak_labels(path)

    def test_missing_field(self, tmp_path):
        path = str(tmp_path / "weak.jsonl")
        _write_lines(path, [{"pmid": "1"}])
        with pytest.raises(DataError, match="needs pmid and verdict"):
            load_weak_labels(path)

    def test_empty_file(self, tmp_path):
        path = str(tmp_path / "weak.jsonl")
        path_obj = tmp_path / "weak.jsonl"
        path_obj.write_text("", encoding="utf-8")
        with pytest.raises(DataError, match="no weak labels"):
            load_weak_labels(path)

    def test_broken_json(self, tmp_path):
        (tmp_path / "weak.jsonl").write_text("{not json\n", encoding="utf-8")
        with pytest.raises(DataError, match="line 1: not valid JSON"):
            load_weak_labels(str(tmp_path / "weak.jsonl"))


class TestCorpus:
    def test_abstracts_and_missing(self, tmp_path):
        rows = make_records(30, seed=2, missing_abstract_rate=0.3)
        path = str(tmp_path / "corpus.jsonl")
        write_corpus(rows, path)
        abstracts = load_corpus_abstracts(path)
        assert len(abstracts) == 30
        expected_missing = sum(1 for r in rows if r["abstract"] is None)
        assert sum(1 for a in abstracts.values() if a is None) == expected_missing

    def test_empty_abstract_treated_as_missing(self, tmp_path):
        path = str(tmp_path / "corpus.jsonl")
        _write_lines(path, [{"pmid": "1", "abstract": ""}])
        assert load_corpus_abstracts(path) == {"1": None}

    def test_duplicate_pmid(self, tmp_path):
        path = str(tmp_path / "corpus.jsonl")
        _write_lines(path, [{"pmid": "1", "abstract": "a"}, {"pmid": "1", "abstract": "b"}])
        with pytest.raises(DataError, match="duplicate pmid"):
            load_corpus_abstracts(path)


class TestJoin:
    def test_label_absent_from_corpus_is_fatal(self):
        with pytest.raises(DataError, match="absent from the corpus, first '2'"):
            join_training_examples([("1", "include"), ("2", "exclude")], {"1": "text"})

    def test_abstractless_labels_dropped_with_warning(self, caplog):
        labels = [("1", "include"), ("2", "exclude"), ("3", "exclude")]
        abstracts = {"1": "alpha", "2": None, "3": "gamma"}
        with caplog.at_level(logging.WARNING, logger="trainer.data"):
            texts, targets = join_training_examples(labels, abstracts)
        assert texts == ["alpha", "gamma"]
        assert targets == [1, 0]
        assert "dropped 1 weak label(s)" in caplog.text

    def test_single_class_is_fatal(self):
        labels = [("1", "include"), ("2", "include")]
        with pytest.raises(DataError, match="single class"):
            join_training_examples(labels, {"1": "a", "2": "b"})

    def test_all_abstractless_is_fatal(self):
        labels = [("1", "include"), ("2", "exclude")]
        with pytest.raises(DataError, match="no trainable examples"):
            join_training_examples(labels, {"1": None, "2": None})
