import json
import logging
import os

import pytest

from trainer.finetune import TrainerError, export_scores, fine_tune, read_summary
from trainer.spec import TrainSpec

from conftest import make_records, write_corpus, write_weak_labels


def _spec(tmp_path, checkpoint: str, rows, out_name="model", **overrides) -> TrainSpec:
    tmp_path.mkdir(parents=True, exist_ok=True)
    corpus = str(tmp_path / "corpus.jsonl")
    weak = str(tmp_path / "weak.jsonl")
    write_corpus(rows, corpus)
    write_weak_labels(rows, weak)
    fields = dict(
        checkpoint=checkpoint,
        weak_labels=weak,
        corpus=corpus,
        output_dir=str(tmp_path / out_name),
        scorer_id="tiny",
        epochs=1,
        batch_size=16,
        seed=5,
    )
    fields.update(overrides)
    return TrainSpec(**fields)


def _read_scores(path: str) -> dict[str, float]:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            out[row["pmid"]] = row["prob"]
    return out


@pytest.fixture(scope="module")
def trained(tmp_path_factory, tiny_checkpoint):
    """One artifact shared by the read-only tests below."""
    tmp_path = tmp_path_factory.mktemp("trained")
    rows = make_records(40, seed=3)
    spec = _spec(tmp_path, tiny_checkpoint, rows)
    artifact = fine_tune(spec)
    return artifact, rows, tmp_path


class TestFineTune:
    def test_artifact_layout(self, trained):
        artifact, _, _ = trained
        names = set(os.listdir(artifact))
        assert "config.json" in names
        assert "train_summary.json" in names
        assert any(n.endswith(".safetensors") for n in names)
        summary = read_summary(artifact)
        assert summary["n_examples"] == 40
        assert summary["scorer_id"] == "tiny"
        assert len(summary["epoch_mean_loss"]) == summary["epochs"] == 1

    def test_sequence_cap_comes_from_checkpoint(self, trained):
        # the spec default of 4096 exceeds the tiny model's positions
        artifact, _, _ = trained
        assert read_summary(artifact)["max_sequence_tokens"] == 128

    def test_scores_are_probabilities(self, trained, tmp_path):
        artifact, rows, _ = trained
        out = str(tmp_path / "scores.jsonl")
        written = export_scores(artifact, [(r["pmid"], r["abstract"]) for r in rows[:3]], out)
        assert written == 3
        scores = _read_scores(out)
        assert len(scores) == 3
        assert all(0.0 <= p <= 1.0 for p in scores.values())

    def test_single_class_labels_rejected(self, tmp_path, tiny_checkpoint):
        rows = make_records(10, seed=4, positive_rate=1.0)
        spec = _spec(tmp_path, tiny_checkpoint, rows)
        with pytest.raises(TrainerError, match="single class"):
            fine_tune(spec)

    def test_unloadable_checkpoint_rejected(self, tmp_path):
        rows = make_records(10, seed=4)
        bogus = tmp_path / "not-a-checkpoint"
        bogus.mkdir()
        spec = _spec(tmp_path, str(bogus), rows)
        with pytest.raises(TrainerError, match="cannot load checkpoint"):
            fine_tune(spec)

    def test_same_seed_reproduces_scores(self, tmp_path, tiny_checkpoint):
        rows = make_records(30, seed=6)
        score_rows = [(r["pmid"], r["abstract"]) for r in make_records(10, seed=7)]
        paths = []
        for name in ("run_a", "run_b"):
            spec = _spec(tmp_path / name, tiny_checkpoint, rows, seed=21)
            artifact = fine_tune(spec)
            out = str(tmp_path / f"{name}.jsonl")
            export_scores(artifact, score_rows, out)
            paths.append(out)
        a, b = _read_scores(paths[0]), _read_scores(paths[1])
        assert a.keys() == b.keys()
        assert all(abs(a[k] - b[k]) <= 1e-5 for k in a)

    def test_different_seed_changes_the_model(self, tmp_path, tiny_checkpoint):
        rows = make_records(30, seed=6)
        score_rows = [(r["pmid"], r["abstract"]) for r in make_records(10, seed=7)]
        outs = []
        for seed in (21, 22):
            spec = _spec(tmp_path / f"s{seed}", tiny_checkpoint, rows, seed=seed)
            out = str(tmp_path / f"s{seed}.jsonl")
            export_scores(fine_tune(spec), score_rows, out)
            outs.append(_read_scores(out))
        assert any(abs(outs[0][k] - outs[1][k]) > 1e-9 for k in outs[0])


class TestExport:
    def test_reexport_is_byte_identical(self, trained, tmp_path):
        artifact, rows, _ = trained
        records = [(r["pmid"], r["abstract"]) for r in rows[:8]]
        first = tmp_path / "first.jsonl"
        second = tmp_path / "second.jsonl"
        export_scores(artifact, records, str(first))
        export_scores(artifact, records, str(second))
        assert first.read_bytes() == second.read_bytes()

    def test_abstractless_records_omitted_with_warning(self, trained, tmp_path, caplog):
        artifact, rows, _ = trained
        records = [
            (rows[0]["pmid"], rows[0]["abstract"]),
            ("555", None),
            (rows[1]["pmid"], rows[1]["abstract"]),
        ]
        out = str(tmp_path / "scores.jsonl")
        with caplog.at_level(logging.WARNING, logger="trainer.finetune"):
            written = export_scores(artifact, records, out)
        assert written == 2
        assert "skipped 1 record(s) with no abstract" in caplog.text
        assert set(_read_scores(out)) == {rows[0]["pmid"], rows[1]["pmid"]}

    def test_rows_sorted_by_pmid(self, trained, tmp_path):
        artifact, rows, _ = trained
        records = [(r["pmid"], r["abstract"]) for r in reversed(rows[:5])]
        out = tmp_path / "scores.jsonl"
        export_scores(artifact, records, str(out))
        pmids = [json.loads(line)["pmid"] for line in out.read_text().splitlines()]
        assert pmids == sorted(pmids)

    def test_duplicate_record_rejected(self, trained, tmp_path):
        artifact, rows, _ = trained
        records = [(rows[0]["pmid"], "text"), (rows[0]["pmid"], "text")]
        with pytest.raises(TrainerError, match="duplicate pmid"):
            export_scores(artifact, records, str(tmp_path / "scores.jsonl"))

    def test_scorer_id_override(self, trained, tmp_path):
        artifact, rows, _ = trained
        out = tmp_path / "scores.jsonl"
        export_scores(artifact, [(rows[0]["pmid"], rows[0]["abstract"])], str(out), scorer_id="alt")
        assert json.loads(out.read_text())["scorer_id"] == "alt"

    def test_plain_directory_is_not_an_artifact(self, tmp_path):
        with pytest.raises(TrainerError, match="train_summary"):
            export_scores(str(tmp_path), [("1", "text")], str(tmp_path / "out.jsonl"))


def _rank_auc(pairs: list[tuple[float, int]]) -> float:
    positives = [s for s, y in pairs if y == 1]
    negatives = [s for s, y in pairs if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in positives for n in negatives)
    return wins / (len(positives) * len(negatives))


def test_more_weak_labels_help_reported_not_enforced(tmp_path, tiny_checkpoint):
    """Training-set size should usually help held-out AUC, but at this toy
    scale the comparison is reported, not asserted."""
    pool = make_records(240, seed=8)
    held_out = make_records(80, seed=9)
    aucs = {}
    for size in (60, 240):
        spec = _spec(tmp_path / f"n{size}", tiny_checkpoint, pool[:size], epochs=2, seed=31)
        artifact = fine_tune(spec)
        out = str(tmp_path / f"n{size}.jsonl")
        export_scores(artifact, [(r["pmid"], r["abstract"]) for r in held_out], out)
        scores = _read_scores(out)
        pairs = [(scores[r["pmid"]], 1 if r["gold"] == "include" else 0) for r in held_out]
        aucs[size] = _rank_auc(pairs)
    print(f"held-out AUC by training size: {aucs}")
    assert all(0.0 <= a <= 1.0 for a in aucs.values())
