import json

from click.testing import CliRunner

from trainer.cli import main

from conftest import make_records, write_corpus, write_weak_labels


def _all_output(result) -> str:
    try:
        return result.output + result.stderr
    except (ValueError, AttributeError):
        return result.output


def _write_spec(tmp_path, checkpoint: str, epochs: int = 1) -> str:
    rows = make_records(24, seed=12)
    write_corpus(rows, str(tmp_path / "corpus.jsonl"))
    write_weak_labels(rows, str(tmp_path / "weak.jsonl"))
    spec = tmp_path / "spec.toml"
    spec.write_text(
        f'checkpoint = "{checkpoint}"\n'
        'weak_labels = "weak.jsonl"\n'
        'corpus = "corpus.jsonl"\n'
        'output_dir = "model"\n'
        'scorer_id = "tiny"\n'
        f"epochs = {epochs}\n"
        "batch_size = 8\n"
        "seed = 3\n",
        encoding="utf-8",
    )
    return str(spec)


def test_train_then_score(tmp_path, tiny_checkpoint):
    runner = CliRunner()
    spec = _write_spec(tmp_path, tiny_checkpoint)
    result = runner.invoke(main, ["train", "--spec", spec])
    assert result.exit_code == 0, _all_output(result)
    assert "model written to" in result.output

    out = tmp_path / "scores.jsonl"
    result = runner.invoke(
        main,
        [
            "score",
            "--model", str(tmp_path / "model"),
            "--corpus", str(tmp_path / "corpus.jsonl"),
            "--out", str(out),
        ],
    )
    assert result.exit_code == 0, _all_output(result)
    assert "wrote 24 score(s)" in result.output
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(rows) == 24
    assert all(row["scorer_id"] == "tiny" for row in rows)


def test_bad_spec_exits_2(tmp_path):
    spec = tmp_path / "spec.toml"
    spec.write_text('checkpoint = "x"\n', encoding="utf-8")
    result = runner_result = CliRunner().invoke(main, ["train", "--spec", str(spec)])
    assert result.exit_code == 2
    assert "spec error:" in _all_output(result)
    assert "weak_labels is required" in _all_output(result)


def test_missing_model_exits_3(tmp_path):
    (tmp_path / "corpus.jsonl").write_text('{"pmid": "1", "abstract": "a"}\n', encoding="utf-8")
    result = CliRunner().invoke(
        main,
        [
            "score",
            "--model", str(tmp_path / "nowhere"),
            "--corpus", str(tmp_path / "corpus.jsonl"),
            "--out", str(tmp_path / "out.jsonl"),
        ],
    )
    assert result.exit_code == 3
    assert "error:" in _all_output(result)


def test_scorer_id_override_flag(tmp_path, tiny_checkpoint):
    runner = CliRunner()
    spec = _write_spec(tmp_path, tiny_checkpoint)
    assert runner.invoke(main, ["train", "--spec", spec]).exit_code == 0
    out = tmp_path / "scores.jsonl"
    result = runner.invoke(
        main,
        [
            "score",
            "--model", str(tmp_path / "model"),
            "--corpus", str(tmp_path / "corpus.jsonl"),
            "--out", str(out),
            "--scorer-id", "renamed",
        ],
    )
    assert result.exit_code == 0, _all_output(result)
    first = json.loads(out.read_text().splitlines()[0])
    assert first["scorer_id"] == "renamed"
