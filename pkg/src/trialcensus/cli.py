"""Command line entry points.

Exit codes: 0 on success, 2 for configuration problems, 3 when a stage or
verb fails while running.
"""

from __future__ import annotations

import functools
import logging
import os
import sys
from dataclasses import dataclass

import click

from . import __version__
from .analytics import AnalyticsError
from .config import ConfigError, PipelineConfig, load_config
from .corpus import Corpus, CorpusError, load_jsonl, parse_medline_xml
from .distill import DistillError, fit_ensemble, import_scores, write_scores
from .evaluation import EvalError, roc, write_roc_tsv
from .gateway import GatewayError, estimate_cost
from .labels import LabelError, LabelStore, load_splits
from .pipeline import (
    STAGE_ORDER,
    StageError,
    _load_gold,
    plan_pipeline,
    run_analytics,
    run_audit,
    run_pipeline,
)
from .prompts import PromptError, load_templates, render_prompt
from .universe import (
    DEFAULT_KEYWORDS,
    DEFAULT_NLM_TAGS,
    DEFAULT_REGISTRY_PREFIXES,
    RuleSet,
    build_universe,
    family_summary,
    load_flags,
    overlap_report,
    write_flags,
)

_RUNTIME_ERRORS = (
    StageError,
    CorpusError,
    LabelError,
    PromptError,
    GatewayError,
    DistillError,
    EvalError,
    AnalyticsError,
)


@dataclass
class CliState:
    config_path: str | None = None
    seed: int | None = None
    dry_run: bool = False
    force: bool = False

    def load(self) -> PipelineConfig:
        if not self.config_path:
            raise ConfigError("pass --config with a pipeline configuration file")
        cfg = load_config(self.config_path)
        if self.seed is not None:
            cfg.seed = self.seed
        return cfg


def handles_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(2)
        except FileNotFoundError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)
        except _RUNTIME_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)

    return wrapper


@click.group()
@click.version_option(version=__version__)
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Pipeline configuration (TOML).")
@click.option("--seed", type=int, default=None, help="Override the configured seed.")
@click.option("--dry-run", is_flag=True, help="Report what would run; change nothing.")
@click.option("--force", is_flag=True, help="Rerun stages even when up to date.")
@click.option("--verbose", is_flag=True, help="Log at INFO level.")
@click.pass_context
def main(ctx, config_path, seed, dry_run, force, verbose):
    """Build a census of published drug trials from a bibliographic corpus."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    ctx.obj = CliState(config_path=config_path, seed=seed, dry_run=dry_run, force=force)


def _run_stages(state: CliState, stages: list[str] | None) -> None:
    cfg = state.load()
    if state.dry_run:
        for stage, action in plan_pipeline(cfg, stages, force=state.force):
            click.echo(f"{stage}: {action}")
        return
    for stage, action in run_pipeline(cfg, stages, force=state.force):
        click.echo(f"{stage}: {action}")


@main.command()
@click.option("--stages", default=None,
              help="Comma-separated subset of: " + ", ".join(STAGE_ORDER))
@click.pass_obj
@handles_errors
def run(state: CliState, stages):
    """Run the pipeline end to end (or a subset of stages)."""
    wanted = [s.strip() for s in stages.split(",") if s.strip()] if stages else None
    _run_stages(state, wanted)


def _stage_command(name: str, help_text: str):
    @main.command(name=name, help=help_text)
    @click.pass_obj
    @handles_errors
    def _cmd(state: CliState):
        _run_stages(state, [name])

    return _cmd


_stage_command("ingest", "Parse the source corpus into canonical JSONL.")
_stage_command("splits", "Draw disjoint train/validation/test splits.")
_stage_command("distill", "Train distilled scorers from completions and fit the ensemble.")
_stage_command("census", "Materialize the census lists at each stringency.")


@main.group(invoke_without_command=True)
@click.pass_context
def universe(ctx):
    """Apply the inclusion rules (as a stage, or on explicit files)."""
    if ctx.invoked_subcommand is None:
        handles_errors(_run_stages)(ctx.obj, ["universe"])


@universe.command("build")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--from", "year_from", required=True, type=int)
@click.option("--to", "year_to", required=True, type=int)
@click.option("--mode", type=click.Choice(["strict", "paper_loose"]), default="strict")
@click.option("--keyword-boundaries", is_flag=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@handles_errors
def universe_build(corpus_path, year_from, year_to, mode, keyword_boundaries, out_path):
    """Flag every record in a corpus file against the inclusion rules."""
    corpus = _read_corpus(corpus_path)
    rules = RuleSet(
        nlm_tags=DEFAULT_NLM_TAGS,
        registry_prefixes=DEFAULT_REGISTRY_PREFIXES,
        keywords=DEFAULT_KEYWORDS,
        match_mode=mode,
        keyword_boundaries=keyword_boundaries,
    )
    flags = build_universe(corpus, rules, (year_from, year_to))
    write_flags(flags, out_path)
    click.echo(f"{sum(1 for f in flags if f.in_universe)} of {len(flags)} records in universe")


@universe.command("report")
@click.option("--flags", "flags_path", required=True, type=click.Path())
@handles_errors
def universe_report(flags_path):
    """Membership counts per rule family, and family overlaps."""
    flags = load_flags(flags_path)
    rules = RuleSet(
        nlm_tags=DEFAULT_NLM_TAGS,
        registry_prefixes=DEFAULT_REGISTRY_PREFIXES,
        keywords=DEFAULT_KEYWORDS,
    )
    click.echo("block\tfamily\tkey\tcount")
    for fam, sub, count in family_summary(flags, rules):
        click.echo(f"membership\t{fam}\t{sub}\t{count}")
    for fam, other, count in overlap_report(flags):
        click.echo(f"overlap\t{fam}\t{other}\t{count}")


@main.command()
@click.option("--estimate-only", is_flag=True,
              help="Print the projected spend for the sample and exit.")
@click.pass_obj
@handles_errors
def annotate(state: CliState, estimate_only):
    """Collect completions for the annotation sample."""
    if not estimate_only:
        _run_stages(state, ["annotate"])
        return
    cfg = state.load()
    corpus = load_jsonl(cfg.workpath("corpus.jsonl"))
    flags = load_flags(cfg.workpath("universe_flags.jsonl"))
    template = load_templates()[cfg.annotate.prompt_id]
    pool = [
        f.pmid for f in flags
        if f.in_universe and f.pmid in corpus and corpus.get(f.pmid).abstract
    ]
    n = min(cfg.annotate.sample_size, len(pool))
    sampled = pool[:n]
    from .gateway import _estimate_tokens

    tokens = [
        _estimate_tokens(render_prompt(template, corpus.get(p))) for p in sampled
    ]
    mean_in = sum(tokens) / len(tokens) if tokens else 0.0
    cost = estimate_cost(n, mean_in, cfg.provider.estimated_completion_tokens, cfg.provider)
    click.echo(f"records\t{n}")
    click.echo(f"mean_prompt_tokens\t{mean_in:.1f}")
    click.echo(f"estimated_spend\t{cost:.2f}")


@main.group(name="eval", invoke_without_command=True)
@click.pass_context
def eval_group(ctx):
    """Evaluate the census scorer (as a stage, or on explicit files)."""
    if ctx.invoked_subcommand is None:
        handles_errors(_run_stages)(ctx.obj, ["eval"])


@eval_group.command("roc")
@click.option("--scores", "scores_path", required=True, type=click.Path())
@click.option("--labels", "labels_path", required=True, type=click.Path(),
              help="JSONL with pmid and verdict per line; last line wins per pmid.")
@click.option("--scorer-id", default="ensemble")
@click.option("--out", "out_path", required=True, type=click.Path())
@handles_errors
def eval_roc(scores_path, labels_path, scorer_id, out_path):
    """Write the ROC sweep for a score file against gold verdicts."""
    scores = import_scores(scores_path, scorer_id)
    gold = _load_gold(labels_path)
    curve = roc(scores.probs, gold)
    write_roc_tsv(curve, out_path)
    click.echo(f"auc\t{curve.auc!r}")


@main.command()
@click.option("--scores", "score_specs", multiple=True, required=True,
              help="scorer_id=path, repeated once per scorer.")
@click.option("--labels", "labels_path", required=True, type=click.Path())
@click.option("--out-model", required=True, type=click.Path())
@click.option("--out-scores", required=True, type=click.Path())
@handles_errors
def ensemble(score_specs, labels_path, out_model, out_scores):
    """Fit the logistic ensemble over score files and hand labels."""
    sets = []
    for spec in score_specs:
        scorer_id, sep, path = spec.partition("=")
        if not sep or not scorer_id or not path:
            raise StageError(f"--scores takes scorer_id=path, got {spec!r}")
        sets.append(import_scores(path, scorer_id))
    gold = _load_gold(labels_path)
    hand = {p: v for p, v in gold.items() if all(p in s.probs for s in sets)}
    dropped = len(gold) - len(hand)
    if dropped:
        click.echo(f"dropped {dropped} labeled pmid(s) not covered by every scorer", err=True)
    model = fit_ensemble(sets, hand)
    model.save(out_model)
    write_scores(model.apply(sets), out_scores)
    flags = []
    if model.separation_flag:
        flags.append("separation")
    if model.rank_deficient:
        flags.append("rank_deficient")
    click.echo(
        f"n\t{model.n}\nlog_loss\t{model.log_loss!r}\nflags\t{','.join(flags) or '-'}"
    )


@main.command()
@click.option("--stringency", type=click.Choice(["conservative", "moderate", "liberal"]),
              default="conservative")
@click.pass_obj
@handles_errors
def analytics(state: CliState, stringency):
    """Produce trend reports for one census stringency."""
    cfg = state.load()
    if state.dry_run:
        click.echo(f"analytics: would write reports under {cfg.workpath('analytics')}")
        return
    for path in run_analytics(cfg, stringency):
        click.echo(path)


@main.command()
@click.pass_obj
@handles_errors
def audit(state: CliState):
    """Cross-check census trends against a trial registry export."""
    cfg = state.load()
    if state.dry_run:
        click.echo(f"audit: would write {cfg.workpath('audit.tsv')}")
        return
    click.echo(run_audit(cfg))


@main.command(name="serve-labels")
@click.pass_obj
@handles_errors
def serve_labels(state: CliState):
    """Serve the hand-labeling HTTP API over the configured splits."""
    cfg = state.load()
    corpus = load_jsonl(cfg.workpath("corpus.jsonl"))
    assignments = load_splits(cfg.workpath("splits.jsonl"))
    labels_path = cfg.paths.labels
    if labels_path is None:
        raise StageError("paths.labels is not configured")
    store = LabelStore(labels_path, known_pmids={a.pmid for a in assignments})
    token = os.environ.get(cfg.serve.token_env) or None
    from .labels_service import create_app

    app = create_app(store, assignments, corpus, token=token)
    if state.dry_run:
        click.echo(f"serve-labels: would listen on {cfg.serve.host}:{cfg.serve.port}")
        return
    import uvicorn

    uvicorn.run(app, host=cfg.serve.host, port=cfg.serve.port, log_level="warning")


def _read_corpus(path: str) -> Corpus:
    if path.endswith(".xml"):
        with open(path, "rb") as fh:
            return Corpus(parse_medline_xml(fh.read()))
    return load_jsonl(path)


if __name__ == "__main__":
    main()
