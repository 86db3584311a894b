"""Stage orchestration: a linear chain of resumable, digest-checked stages.

Each stage declares its input and output files up front. On completion a
manifest (JSON, one per stage) records a sha256 digest of every declared
file. A stage is skipped when its manifest says it completed and every
digest still matches; a corrupted or edited file forces a rerun. Outputs
are written deterministically, so two fresh runs of the same configuration
produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
from dataclasses import dataclass, field
from typing import Callable

from . import analytics as an
from . import distill as ds
from .config import PipelineConfig
from .corpus import Corpus, load_jsonl, parse_medline_xml, write_jsonl
from .evaluation import (
    EvalError,
    OperatingPoint,
    confusion_at,
    roc,
    select_operating_points,
    write_operating_points_tsv,
    write_roc_tsv,
)
from .gateway import CompletionCache, GatewayError, HttpProvider, MockProvider
from .labels import LabelStore, assign_splits, load_splits, utc_now_iso, write_splits
from .prompts import load_templates
from .universe import build_universe, family_summary, load_flags, overlap_report, write_flags

logger = logging.getLogger(__name__)

STAGE_ORDER = ("ingest", "universe", "splits", "annotate", "distill", "eval", "census")

CENSUS_STRINGENCIES = ("conservative", "moderate", "liberal")


class StageError(Exception):
    """A stage could not run or did not finish."""


def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    stage: str
    status: str  # "complete" or "failed"
    seed: int
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    started_at: str = ""
    finished_at: str = ""
    error: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "stage": self.stage,
            "status": self.status,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "error": self.error,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "RunManifest":
        return cls(
            stage=obj["stage"],
            status=obj["status"],
            seed=obj["seed"],
            inputs=dict(obj.get("inputs", {})),
            outputs=dict(obj.get("outputs", {})),
            started_at=obj.get("started_at", ""),
            finished_at=obj.get("finished_at", ""),
            error=obj.get("error"),
        )


@dataclass
class StagePlan:
    name: str
    inputs: list[str]
    outputs: list[str]
    run: Callable[[], None]


def manifest_path(cfg: PipelineConfig, stage: str) -> str:
    return cfg.workpath("manifests", f"{stage}.json")


def load_manifest(cfg: PipelineConfig, stage: str) -> RunManifest | None:
    path = manifest_path(cfg, stage)
    if not os.path.exists(path):
        return None
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return RunManifest.from_json_dict(json.load(fh))
    except (json.JSONDecodeError, KeyError):
        logger.warning("manifest %s is unreadable; the stage will rerun", path)
        return None


def _write_manifest(cfg: PipelineConfig, manifest: RunManifest) -> None:
    path = manifest_path(cfg, manifest.stage)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _digests_if_present(paths: list[str]) -> dict[str, str] | None:
    out = {}
    for p in paths:
        if not os.path.exists(p):
            return None
        out[p] = file_digest(p)
    return out


def can_skip(cfg: PipelineConfig, plan: StagePlan) -> bool:
    manifest = load_manifest(cfg, plan.name)
    if manifest is None or manifest.status != "complete":
        return False
    if set(manifest.inputs) != set(plan.inputs) or set(manifest.outputs) != set(plan.outputs):
        return False
    current_in = _digests_if_present(plan.inputs)
    current_out = _digests_if_present(plan.outputs)
    if current_in is None or current_out is None:
        return False
    return current_in == manifest.inputs and current_out == manifest.outputs


# ---------------------------------------------------------------------------
# Stage bodies


def _require(path: str | None, what: str) -> str:
    if path is None:
        raise StageError(f"{what} is not configured")
    return path


def _require_exists(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise StageError(f"{what} not found: {path}")
    return path


def _plan_ingest(cfg: PipelineConfig) -> StagePlan:
    source = _require(cfg.paths.source, "paths.source")
    out = cfg.workpath("corpus.jsonl")

    def run() -> None:
        _require_exists(source, "source corpus")
        if source.endswith(".xml"):
            with open(source, "rb") as fh:
                records = parse_medline_xml(fh.read())
            corpus = Corpus(records)
        else:
            corpus = load_jsonl(source)
        write_jsonl(corpus, out)
        logger.info("ingest: %d records", len(corpus))

    return StagePlan("ingest", [source], [out], run)


def _plan_universe(cfg: PipelineConfig) -> StagePlan:
    corpus_path = cfg.workpath("corpus.jsonl")
    flags_path = cfg.workpath("universe_flags.jsonl")
    report_path = cfg.workpath("universe_report.tsv")

    def run() -> None:
        corpus = load_jsonl(_require_exists(corpus_path, "ingested corpus"))
        flags = build_universe(corpus, cfg.rules, cfg.window)
        write_flags(flags, flags_path)
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write("block\tfamily\tkey\tcount\n")
            for fam, sub, count in family_summary(flags, cfg.rules):
                fh.write(f"membership\t{fam}\t{sub}\t{count}\n")
            for fam, other, count in overlap_report(flags):
                fh.write(f"overlap\t{fam}\t{other}\t{count}\n")

    return StagePlan("universe", [corpus_path], [flags_path, report_path], run)


def _plan_splits(cfg: PipelineConfig) -> StagePlan:
    corpus_path = cfg.workpath("corpus.jsonl")
    flags_path = cfg.workpath("universe_flags.jsonl")
    out = cfg.workpath("splits.jsonl")

    def run() -> None:
        corpus = load_jsonl(_require_exists(corpus_path, "ingested corpus"))
        flags = load_flags(_require_exists(flags_path, "universe flags"))
        assignments = assign_splits(flags, corpus, sizes=cfg.splits, seed=cfg.seed)
        write_splits(assignments, out)
        for split in ("train", "validation", "test"):
            n = sum(1 for a in assignments if a.split == split)
            logger.info("splits: %s has %d records", split, n)

    return StagePlan("splits", [corpus_path, flags_path], [out], run)


def _load_gold(path: str) -> dict[str, object]:
    gold: dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            value = obj.get("verdict", obj.get("gold", obj.get("label")))
            if "pmid" not in obj or value is None:
                raise StageError(f"{path} line {line_no}: needs pmid and verdict")
            gold[obj["pmid"]] = value
    return gold


def _plan_annotate(cfg: PipelineConfig) -> StagePlan:
    corpus_path = cfg.workpath("corpus.jsonl")
    flags_path = cfg.workpath("universe_flags.jsonl")
    splits_path = cfg.workpath("splits.jsonl")
    completions_path = cfg.workpath("completions.jsonl")
    log_path = cfg.workpath("annotate_log.json")
    inputs = [corpus_path, flags_path, splits_path]
    if cfg.provider_kind == "mock" and cfg.mock.gold_path:
        inputs.append(cfg.mock.gold_path)

    def run() -> None:
        corpus = load_jsonl(_require_exists(corpus_path, "ingested corpus"))
        flags = load_flags(_require_exists(flags_path, "universe flags"))
        assignments = load_splits(_require_exists(splits_path, "splits"))

        held_out = {a.pmid for a in assignments if a.split == "test"} if cfg.annotate.exclude_test else set()
        pool = [
            f.pmid
            for f in flags
            if f.in_universe
            and f.pmid not in held_out
            and f.pmid in corpus
            and corpus.get(f.pmid).abstract
        ]
        size = cfg.annotate.sample_size
        if size >= len(pool):
            sample = pool
        else:
            sample = random.Random(f"annotate:{cfg.seed}").sample(pool, size)

        templates = load_templates()
        if cfg.annotate.prompt_id not in templates:
            raise StageError(
                f"unknown prompt id {cfg.annotate.prompt_id!r}; "
                f"available: {sorted(templates)}"
            )
        template = templates[cfg.annotate.prompt_id]

        if cfg.provider_kind == "mock":
            gold_path = _require(cfg.mock.gold_path, "provider.mock.gold_path")
            gold = _load_gold(_require_exists(gold_path, "gold verdicts"))
            provider = MockProvider(
                seed=cfg.seed, tpr=cfg.mock.tpr, fpr=cfg.mock.fpr, gold=gold
            )
        else:
            provider = HttpProvider(cfg.provider)

        cache = CompletionCache(cfg.paths.cache)
        records = [corpus.get(p) for p in sample]
        try:
            result = gateway_annotate(records, template, provider, cache, cfg)
        except GatewayError as exc:
            raise StageError(f"annotation failed: {exc}") from exc

        with open(completions_path, "w", encoding="utf-8") as fh:
            for pmid, raw in result.completions:
                fh.write(
                    json.dumps(
                        {
                            "pmid": pmid,
                            "raw": raw,
                            "model_id": cfg.provider.model_id,
                            "prompt_id": template.id,
                        },
                        ensure_ascii=False,
                    )
                )
                fh.write("\n")
        with open(log_path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "requested": result.requested,
                    "completed": len(result.completions),
                    "from_cache": result.from_cache,
                    "errors": result.errors,
                    "pending": result.pending,
                    "spend": result.spend,
                },
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")
        if result.errors:
            logger.warning("annotate: %d record(s) failed permanently", len(result.errors))
        if result.budget_stopped:
            raise StageError(
                f"budget cap stopped annotation with {len(result.pending)} record(s) "
                "pending; completed work is cached, raise provider.budget_cap and rerun"
            )

    # the log reports cache hits and spend, which vary across reruns of the
    # same work; like cache.jsonl it stays out of the declared outputs
    return StagePlan("annotate", inputs, [completions_path], run)


def gateway_annotate(records, template, provider, cache, cfg: PipelineConfig):
    # separated for monkeypatching in tests
    from .gateway import annotate_batch

    return annotate_batch(records, template, provider, cache, cfg.provider)


def _distill_outputs(cfg: PipelineConfig) -> tuple[list[str], bool, list[str]]:
    outputs = []
    for size in cfg.distill.schedule:
        outputs.append(cfg.workpath(f"weak_labels_{size}.jsonl"))
    scorer_ids = list(cfg.distill.algorithms)
    for ext in cfg.distill.external_scores:
        scorer_ids.append(ext["scorer_id"])
    if len(scorer_ids) != len(set(scorer_ids)) or "ensemble" in scorer_ids:
        raise StageError(f"scorer ids must be distinct and not 'ensemble': {scorer_ids}")
    for alg in cfg.distill.algorithms:
        outputs.append(cfg.workpath(f"model_{alg}.json"))
        outputs.append(cfg.workpath(f"scores_{alg}.jsonl"))
    for ext in cfg.distill.external_scores:
        outputs.append(cfg.workpath(f"scores_{ext['scorer_id']}.jsonl"))
    ensemble_feasible = len(scorer_ids) >= 2 and cfg.paths.labels is not None
    if ensemble_feasible:
        outputs.append(cfg.workpath("ensemble.json"))
        outputs.append(cfg.workpath("scores_ensemble.jsonl"))
    return outputs, ensemble_feasible, scorer_ids


def _plan_distill(cfg: PipelineConfig) -> StagePlan:
    corpus_path = cfg.workpath("corpus.jsonl")
    flags_path = cfg.workpath("universe_flags.jsonl")
    splits_path = cfg.workpath("splits.jsonl")
    completions_path = cfg.workpath("completions.jsonl")
    outputs, ensemble_feasible, _ = _distill_outputs(cfg)
    inputs = [corpus_path, flags_path, splits_path, completions_path]
    inputs.extend(ext["path"] for ext in cfg.distill.external_scores)
    if ensemble_feasible and cfg.paths.labels is not None:
        inputs.append(cfg.paths.labels)

    def run() -> None:
        corpus = load_jsonl(_require_exists(corpus_path, "ingested corpus"))
        flags = load_flags(_require_exists(flags_path, "universe flags"))
        _require_exists(completions_path, "completions")

        completions: list[tuple[str, str]] = []
        model_id = prompt_id = ""
        with open(completions_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                completions.append((obj["pmid"], obj["raw"]))
                model_id = obj.get("model_id", model_id)
                prompt_id = obj.get("prompt_id", prompt_id)
        if not completions:
            raise StageError("no completions to distill from")

        templates = load_templates()
        if prompt_id not in templates:
            raise StageError(f"completions carry unknown prompt id {prompt_id!r}")
        family = templates[prompt_id].family

        try:
            weak_sets = ds.assemble_weak_labels(
                completions,
                family,
                sizes=cfg.distill.schedule,
                seed=cfg.seed,
                model_id=model_id,
                prompt_id=prompt_id,
            )
        except ds.DistillError as exc:
            raise StageError(str(exc)) from exc
        for wls in weak_sets:
            ds.write_weak_labels(wls, cfg.workpath(f"weak_labels_{wls.size}.jsonl"))

        largest = weak_sets[-1]
        verdicts = largest.verdicts()
        train_records = [corpus.get(p) for p in verdicts if p in corpus]
        universe_records = [
            corpus.get(f.pmid)
            for f in flags
            if f.in_universe and f.pmid in corpus and corpus.get(f.pmid).abstract
        ]

        score_sets: list[ds.ScoreSet] = []
        for alg in cfg.distill.algorithms:
            try:
                model = ds.fit_distilled(
                    train_records,
                    verdicts,
                    scorer_id=alg,
                    algorithm=alg,
                    folds=cfg.distill.folds,
                    seed=cfg.seed,
                )
            except ds.DistillError as exc:
                raise StageError(f"training {alg} failed: {exc}") from exc
            model.save(cfg.workpath(f"model_{alg}.json"))
            scores = ds.score_records(model, universe_records)
            ds.write_scores(scores, cfg.workpath(f"scores_{alg}.jsonl"))
            score_sets.append(scores)
            logger.info(
                "distill: %s grid pick %s, CV losses %s",
                alg, model.head.strength, model.head.cv_losses,
            )

        for ext in cfg.distill.external_scores:
            try:
                scores = ds.import_scores(
                    _require_exists(ext["path"], f"external scores {ext['scorer_id']}"),
                    ext["scorer_id"],
                )
            except ds.DistillError as exc:
                raise StageError(str(exc)) from exc
            ds.write_scores(scores, cfg.workpath(f"scores_{ext['scorer_id']}.jsonl"))
            score_sets.append(scores)

        if not ensemble_feasible:
            logger.info("distill: ensemble skipped (needs two scorers and a labels file)")
            return
        labels_path = _require(cfg.paths.labels, "paths.labels")
        _require_exists(labels_path, "hand labels")
        assignments = load_splits(_require_exists(splits_path, "splits"))
        train_pmids = {a.pmid for a in assignments if a.split == "train"}
        store = LabelStore(labels_path)
        hand = {
            pmid: rec.verdict
            for pmid, rec in store.effective_labels().items()
            if pmid in train_pmids
        }
        if not hand:
            raise StageError("no hand labels fall in the train split")
        try:
            ensemble = ds.fit_ensemble(score_sets, hand)
        except ds.DistillError as exc:
            raise StageError(f"ensemble fit failed: {exc}") from exc
        ensemble.save(cfg.workpath("ensemble.json"))
        ds.write_scores(ensemble.apply(score_sets), cfg.workpath("scores_ensemble.jsonl"))
        if ensemble.separation_flag or ensemble.rank_deficient:
            logger.warning(
                "distill: ensemble stabilized (separation=%s, rank_deficient=%s)",
                ensemble.separation_flag, ensemble.rank_deficient,
            )

    return StagePlan("distill", inputs, outputs, run)


def _gold_for_split(
    store: LabelStore, assignments, split: str
) -> dict[str, str]:
    member = {a.pmid for a in assignments if a.split == split}
    return {
        pmid: rec.verdict
        for pmid, rec in store.effective_labels().items()
        if pmid in member
    }


def _plan_eval(cfg: PipelineConfig) -> StagePlan:
    scorer = cfg.census.scorer
    scores_path = cfg.workpath(f"scores_{scorer}.jsonl")
    splits_path = cfg.workpath("splits.jsonl")
    labels_path = _require(cfg.paths.labels, "paths.labels")
    roc_path = cfg.workpath("roc_validation.tsv")
    points_path = cfg.workpath("operating_points.tsv")
    report_path = cfg.workpath("test_report.tsv")

    def run() -> None:
        scores = ds.import_scores(_require_exists(scores_path, f"scores for {scorer!r}"), scorer)
        assignments = load_splits(_require_exists(splits_path, "splits"))
        store = LabelStore(_require_exists(labels_path, "hand labels"))
        gold_val = _gold_for_split(store, assignments, "validation")
        gold_test = _gold_for_split(store, assignments, "test")
        if not gold_val:
            raise StageError("no hand labels fall in the validation split")
        try:
            curve = roc(scores.probs, gold_val)
            points = select_operating_points(scores.probs, gold_val, cfg.policy)
        except EvalError as exc:
            raise StageError(str(exc)) from exc
        write_roc_tsv(curve, roc_path)
        write_operating_points_tsv(points, points_path)

        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write("split\tname\tthreshold\ttp\tfp\ttn\tfn\ttpr\tfpr\tprecision\n")

            def write_rows(split: str, gold: dict[str, str]) -> None:
                for name in CENSUS_STRINGENCIES:
                    op = points[name]
                    c = confusion_at(scores.probs, gold, op.threshold)
                    cells = [
                        split, name, repr(op.threshold),
                        str(c["tp"]), str(c["fp"]), str(c["tn"]), str(c["fn"]),
                    ]
                    for key in ("tpr", "fpr", "precision"):
                        cells.append("" if c[key] is None else repr(c[key]))
                    fh.write("\t".join(cells) + "\n")

            write_rows("validation", gold_val)
            if gold_test:
                write_rows("test", gold_test)
            else:
                logger.warning("eval: no labeled test records; test rows omitted")

    return StagePlan(
        "eval", [scores_path, splits_path, labels_path], [roc_path, points_path, report_path], run
    )


def read_operating_points(path: str) -> dict[str, OperatingPoint]:
    points: dict[str, OperatingPoint] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        for line in fh:
            if not line.strip():
                continue
            row = dict(zip(header, line.rstrip("\n").split("\t")))
            points[row["name"]] = OperatingPoint(
                name=row["name"],
                threshold=float(row["threshold"]),
                tpr=float(row["tpr"]),
                fpr=float(row["fpr"]),
                precision=float(row["precision"]) if row["precision"] else None,
            )
    missing = [n for n in CENSUS_STRINGENCIES if n not in points]
    if missing:
        raise StageError(f"{path} lacks operating point(s) {missing}")
    return points


def _plan_census(cfg: PipelineConfig) -> StagePlan:
    scorer = cfg.census.scorer
    scores_path = cfg.workpath(f"scores_{scorer}.jsonl")
    points_path = cfg.workpath("operating_points.tsv")
    list_paths = {n: cfg.workpath(f"census_{n}.txt") for n in CENSUS_STRINGENCIES}
    summary_path = cfg.workpath("census_summary.tsv")

    def run() -> None:
        scores = ds.import_scores(_require_exists(scores_path, f"scores for {scorer!r}"), scorer)
        points = read_operating_points(_require_exists(points_path, "operating points"))
        samples = an.build_census(scores, points, source=scorer)
        with open(summary_path, "w", encoding="utf-8") as fh:
            fh.write("stringency\tthreshold\tcount\n")
            for name in CENSUS_STRINGENCIES:
                sample = samples[name]
                with open(list_paths[name], "w", encoding="utf-8") as out:
                    for pmid in sorted(sample.pmids):
                        out.write(pmid + "\n")
                fh.write(f"{name}\t{points[name].threshold!r}\t{len(sample.pmids)}\n")

    return StagePlan(
        "census",
        [scores_path, points_path],
        list(list_paths.values()) + [summary_path],
        run,
    )


_PLANNERS: dict[str, Callable[[PipelineConfig], StagePlan]] = {
    "ingest": _plan_ingest,
    "universe": _plan_universe,
    "splits": _plan_splits,
    "annotate": _plan_annotate,
    "distill": _plan_distill,
    "eval": _plan_eval,
    "census": _plan_census,
}


# ---------------------------------------------------------------------------
# Running


def build_plan(cfg: PipelineConfig, stage: str) -> StagePlan:
    if stage not in _PLANNERS:
        raise StageError(f"unknown stage {stage!r}; stages are {', '.join(STAGE_ORDER)}")
    return _PLANNERS[stage](cfg)


def _check_upstream(cfg: PipelineConfig, stage: str) -> None:
    idx = STAGE_ORDER.index(stage)
    if idx == 0:
        return
    dep = STAGE_ORDER[idx - 1]
    manifest = load_manifest(cfg, dep)
    if manifest is None or manifest.status != "complete":
        raise StageError(
            f"stage {stage!r} needs stage {dep!r} to have completed first"
        )


def run_stage(cfg: PipelineConfig, stage: str, force: bool = False) -> str:
    """Run one stage. Returns "complete" or "skipped"."""
    os.makedirs(cfg.paths.workdir, exist_ok=True)
    plan = build_plan(cfg, stage)
    if not force and can_skip(cfg, plan):
        logger.info("%s: up to date, skipped", stage)
        return "skipped"
    _check_upstream(cfg, stage)
    for p in plan.inputs:
        _require_exists(p, f"input of stage {stage!r}")
    manifest = RunManifest(stage=stage, status="failed", seed=cfg.seed, started_at=utc_now_iso())
    try:
        plan.run()
    except StageError as exc:
        manifest.error = str(exc)
        manifest.finished_at = utc_now_iso()
        _write_manifest(cfg, manifest)
        raise
    missing = [p for p in plan.outputs if not os.path.exists(p)]
    if missing:
        manifest.error = f"stage did not produce {missing}"
        manifest.finished_at = utc_now_iso()
        _write_manifest(cfg, manifest)
        raise StageError(manifest.error)
    manifest.status = "complete"
    manifest.inputs = {p: file_digest(p) for p in plan.inputs}
    manifest.outputs = {p: file_digest(p) for p in plan.outputs}
    manifest.finished_at = utc_now_iso()
    _write_manifest(cfg, manifest)
    logger.info("%s: complete", stage)
    return "complete"


def run_pipeline(
    cfg: PipelineConfig, stages: list[str] | None = None, force: bool = False
) -> list[tuple[str, str]]:
    wanted = list(STAGE_ORDER) if stages is None else list(stages)
    for s in wanted:
        if s not in STAGE_ORDER:
            raise StageError(f"unknown stage {s!r}")
    wanted.sort(key=STAGE_ORDER.index)
    return [(s, run_stage(cfg, s, force=force)) for s in wanted]


def plan_pipeline(
    cfg: PipelineConfig, stages: list[str] | None = None, force: bool = False
) -> list[tuple[str, str]]:
    """Dry run: report what run_pipeline would do, without side effects."""
    wanted = list(STAGE_ORDER) if stages is None else list(stages)
    for s in wanted:
        if s not in STAGE_ORDER:
            raise StageError(f"unknown stage {s!r}")
    wanted.sort(key=STAGE_ORDER.index)
    out = []
    for s in wanted:
        plan = build_plan(cfg, s)
        out.append((s, "would skip" if not force and can_skip(cfg, plan) else "would run"))
    return out


# ---------------------------------------------------------------------------
# Report generation (manifest-less verbs)


def run_analytics(cfg: PipelineConfig, stringency: str = "conservative") -> list[str]:
    """Produce the trend reports for one census stringency. Returns the paths
    written, all under <workdir>/analytics."""
    if stringency not in CENSUS_STRINGENCIES:
        raise StageError(f"unknown stringency {stringency!r}")
    corpus = load_jsonl(_require_exists(cfg.workpath("corpus.jsonl"), "ingested corpus"))
    census_path = _require_exists(
        cfg.workpath(f"census_{stringency}.txt"), f"census list for {stringency!r}"
    )
    with open(census_path, "r", encoding="utf-8") as fh:
        census_pmids = [line.strip() for line in fh if line.strip()]

    outdir = cfg.workpath("analytics")
    os.makedirs(outdir, exist_ok=True)
    acfg = cfg.analytics
    written: list[str] = []

    def record(path: str) -> str:
        written.append(path)
        return path

    an.write_year_series_tsv(
        an.counts_by_year(census_pmids, corpus),
        record(os.path.join(outdir, "trials_by_year.tsv")),
        value_name="count",
    )
    an.write_year_series_tsv(
        an.counts_by_year(census_pmids, corpus, normalize=True),
        record(os.path.join(outdir, "trials_growth.tsv")),
        value_name="pct_change_from_first_year",
    )

    citing = an.build_citing_sample(census_pmids, corpus, t=acfg.citation_horizon)
    an.write_citing_sample_tsv(citing, record(os.path.join(outdir, "citing_sample.tsv")))

    journals = an.leading_journals(
        corpus, trunk=acfg.trunk_journals, min_citations=acfg.min_trunk_citations
    )
    with open(record(os.path.join(outdir, "leading_journals.txt")), "w", encoding="utf-8") as fh:
        for j in sorted(journals):
            fh.write(j + "\n")

    an.write_quantiles_tsv(
        an.citation_quantiles(census_pmids, corpus, journals, t=acfg.citation_horizon),
        record(os.path.join(outdir, "citation_quantiles.tsv")),
    )
    an.write_shares_tsv(
        an.funding_and_citation_shares(census_pmids, corpus, journals, t=acfg.citation_horizon),
        record(os.path.join(outdir, "funding_citation_shares.tsv")),
    )

    _, growth_rows = an.country_trends(
        census_pmids,
        corpus,
        anchor_years=acfg.country_anchor_years,
        min_count=acfg.country_min_count,
    )
    an.write_country_growth_tsv(
        growth_rows, record(os.path.join(outdir, "country_growth.tsv"))
    )

    meta_path = record(os.path.join(outdir, "meta_analysis_share.tsv"))
    with open(meta_path, "w", encoding="utf-8") as fh:
        fh.write("year\tn\tflagged\tshare\n")
        for year in sorted(citing):
            records = [corpus.get(p) for p in citing[year] if p in corpus]
            flagged = an.flag_meta_analyses(records, acfg.meta_method)
            n = len(records)
            share = repr(len(flagged) / n) if n else ""
            fh.write(f"{year}\t{n}\t{len(flagged)}\t{share}\n")

    return written


def run_audit(cfg: PipelineConfig) -> str:
    registry = _require(cfg.paths.registry, "paths.registry")
    records = an.load_registry_csv(_require_exists(registry, "registry export"))
    audit = an.registry_audit(records)
    out = cfg.workpath("audit.tsv")
    os.makedirs(cfg.paths.workdir, exist_ok=True)
    an.write_audit_tsv(audit, out)
    return out
