"""Contract gate: score files written here must be accepted verbatim by the
pipeline package that consumes them. The test crosses the package boundary
on purpose; nothing else in this suite imports the consumer."""

import json
import time

from trialcensus.distill import import_scores

from trainer.finetune import export_scores, fine_tune
from trainer.spec import TrainSpec

from conftest import make_records, write_corpus, write_weak_labels


def test_score_file_passes_consumer_validation(tmp_path, tiny_checkpoint):
    started = time.monotonic()

    rows = make_records(100, seed=77, missing_abstract_rate=0.07)
    corpus_path = str(tmp_path / "corpus.jsonl")
    weak_path = str(tmp_path / "weak.jsonl")
    write_corpus(rows, corpus_path)
    n_weak = write_weak_labels(rows, weak_path, flip_rate=0.05, seed=1)

    spec = TrainSpec(
        checkpoint=tiny_checkpoint,
        weak_labels=weak_path,
        corpus=corpus_path,
        output_dir=str(tmp_path / "model"),
        scorer_id="tiny-encoder",
        seed=13,
    )
    artifact = fine_tune(spec)

    out_path = str(tmp_path / "scores.jsonl")
    written = export_scores(artifact, [(r["pmid"], r["abstract"]) for r in rows], out_path)

    eligible = [r for r in rows if r["abstract"] is not None]
    assert len(rows) == 100
    assert n_weak == len(eligible)
    assert written == len(eligible)

    score_set = import_scores(out_path, "tiny-encoder")
    assert len(score_set.probs) == len(eligible), "consumer rejected some rows"
    assert set(score_set.probs) == {r["pmid"] for r in eligible}
    assert all(0.0 <= p <= 1.0 for p in score_set.probs.values())

    # the file itself, not just the parsed view, stays within range
    for line in open(out_path, encoding="utf-8"):
        row = json.loads(line)
        assert 0.0 <= row["prob"] <= 1.0
        assert row["scorer_id"] == "tiny-encoder"

    elapsed = time.monotonic() - started
    assert elapsed < 300.0, f"contract run took {elapsed:.1f}s"
    print(f"PASS trainer contract: {written} rows validated in {elapsed:.1f}s")
