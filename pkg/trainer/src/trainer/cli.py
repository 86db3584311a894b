"""Command line entry points.

Exit codes: 0 on success, 2 for spec problems, 3 when training or scoring
fails while running.
"""

from __future__ import annotations

import logging
import sys

import click

from .data import DataError
from .finetune import TrainerError, export_corpus_scores, fine_tune
from .spec import SpecError, load_spec


def _quiet_transformers() -> None:
    # shard progress bars belong in notebooks, not batch logs
    try:
        import transformers

        transformers.utils.logging.disable_progress_bar()
        transformers.utils.logging.set_verbosity_error()
    except ImportError:
        pass


@click.group()
@click.option("--verbose", is_flag=True, help="Log per-epoch losses and data warnings.")
def main(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    _quiet_transformers()


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(), help="TOML training spec.")
def train(spec_path: str) -> None:
    """Fine-tune the spec's checkpoint on its weak labels."""
    try:
        spec = load_spec(spec_path)
    except SpecError as exc:
        click.echo(f"spec error: {exc}", err=True)
        sys.exit(2)
    try:
        artifact = fine_tune(spec)
    except (TrainerError, DataError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    click.echo(f"model written to {artifact}")


@main.command()
@click.option("--model", "model_dir", required=True, type=click.Path(), help="fine_tune artifact directory.")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(), help="Corpus JSONL with pmid and abstract fields.")
@click.option("--out", "out_path", required=True, type=click.Path(), help="Score file to write.")
@click.option("--scorer-id", default=None, help="Override the scorer_id recorded at training time.")
def score(model_dir: str, corpus_path: str, out_path: str, scorer_id: str | None) -> None:
    """Write one probability row per abstract-bearing corpus record."""
    try:
        written = export_corpus_scores(model_dir, corpus_path, out_path, scorer_id=scorer_id)
    except (TrainerError, DataError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    click.echo(f"wrote {written} score(s) to {out_path}")


if __name__ == "__main__":
    main()
