import os

import pytest

from trainer.spec import SpecError, TrainSpec, load_spec


def _write(tmp_path, body: str) -> str:
    path = tmp_path / "spec.toml"
    path.write_text(body, encoding="utf-8")
    return str(path)


MINIMAL = """
checkpoint = "ckpt"
weak_labels = "weak.jsonl"
corpus = "corpus.jsonl"
output_dir = "out"
"""


class TestDefaults:
    def test_hyperparameter_defaults(self, tmp_path):
        spec = load_spec(_write(tmp_path, MINIMAL))
        assert spec.max_sequence_tokens == 4096
        assert spec.learning_rate == 1e-4
        assert spec.adam_beta1 == 0.9
        assert spec.adam_beta2 == 0.999
        assert spec.epochs == 3
        assert spec.batch_size == 16
        assert spec.seed == 0

    def test_scorer_id_defaults_to_checkpoint_basename(self, tmp_path):
        spec = load_spec(_write(tmp_path, MINIMAL))
        assert spec.scorer_id == "ckpt"

    def test_explicit_scorer_id_wins(self, tmp_path):
        spec = load_spec(_write(tmp_path, MINIMAL + 'scorer_id = "bird-base"\n'))
        assert spec.scorer_id == "bird-base"

    def test_relative_paths_resolve_against_spec_dir(self, tmp_path):
        spec = load_spec(_write(tmp_path, MINIMAL))
        assert spec.checkpoint == str(tmp_path / "ckpt")
        assert spec.weak_labels == str(tmp_path / "weak.jsonl")
        assert spec.corpus == str(tmp_path / "corpus.jsonl")
        assert spec.output_dir == str(tmp_path / "out")

    def test_absolute_paths_kept(self, tmp_path):
        body = MINIMAL.replace('"ckpt"', '"/elsewhere/ckpt"')
        spec = load_spec(_write(tmp_path, body))
        assert spec.checkpoint == os.path.normpath("/elsewhere/ckpt")

    def test_integer_learning_rate_coerces_to_float(self, tmp_path):
        spec = load_spec(_write(tmp_path, MINIMAL + "learning_rate = 1\n"))
        assert spec.learning_rate == 1.0
        assert isinstance(spec.learning_rate, float)


class TestValidation:
    def test_missing_file(self, tmp_path):
        with pytest.raises(SpecError, match="not found"):
            load_spec(str(tmp_path / "absent.toml"))

    def test_invalid_toml(self, tmp_path):
        with pytest.raises(SpecError, match="not valid TOML"):
            load_spec(_write(tmp_path, "checkpoint = "))

    def test_all_errors_reported_at_once(self, tmp_path):
        body = 'weak_labels = "weak.jsonl"\ncorpus = "corpus.jsonl"\nbatch = 4\n'
        with pytest.raises(SpecError) as exc:
            load_spec(_write(tmp_path, body))
        message = str(exc.value)
        assert "checkpoint is required" in message
        assert "output_dir is required" in message
        assert "unknown key 'batch'" in message

    @pytest.mark.parametrize(
        "line,fragment",
        [
            ("epochs = 0", "epochs must be positive"),
            ("epochs = 2.5", "expected int"),
            ("batch_size = -1", "batch_size must be positive"),
            ("learning_rate = 0.0", "learning_rate must be positive"),
            ("adam_beta1 = 1.0", "adam_beta1 must lie in [0, 1)"),
            ("adam_beta2 = -0.1", "adam_beta2 must lie in [0, 1)"),
            ("max_sequence_tokens = 0", "max_sequence_tokens must be positive"),
            ("seed = true", "expected int"),
            ("checkpoint = 3", "expected string"),
        ],
    )
    def test_rejects_bad_values(self, tmp_path, line, fragment):
        base = MINIMAL if not line.startswith("checkpoint") else MINIMAL.replace(
            'checkpoint = "ckpt"\n', ""
        )
        with pytest.raises(SpecError) as exc:
            load_spec(_write(tmp_path, base + line + "\n"))
        assert fragment in str(exc.value)

    def test_spec_is_a_plain_dataclass(self, tmp_path):
        spec = load_spec(_write(tmp_path, MINIMAL + "seed = 7\n"))
        assert isinstance(spec, TrainSpec)
        assert spec.seed == 7
