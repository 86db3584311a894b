"""Pipeline configuration: a TOML file validated strictly, all errors at once.

Unknown keys are rejected everywhere: a misspelled option must fail loudly
instead of silently falling back to a default. The seed is mandatory because
every stage that draws randomness derives from it.
"""

from __future__ import annotations

import math
import os
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .evaluation import OperatingPointPolicy
from .gateway import ProviderConfig
from .labels import DEFAULT_SPLIT_SIZES
from .universe import DEFAULT_KEYWORDS, DEFAULT_NLM_TAGS, DEFAULT_REGISTRY_PREFIXES, RuleSet


class ConfigError(Exception):
    """One or more configuration problems; the message lists all of them."""


@dataclass
class PathsConfig:
    workdir: str
    source: str | None = None
    labels: str | None = None
    cache: str | None = None
    registry: str | None = None


@dataclass
class AnnotateConfig:
    prompt_id: str = "1.2"
    sample_size: int = 1000
    exclude_test: bool = True


@dataclass
class MockProviderConfig:
    tpr: float = 0.934
    fpr: float = 0.049
    gold_path: str | None = None


@dataclass
class DistillConfig:
    schedule: list[int] = field(default_factory=lambda: [1000])
    algorithms: list[str] = field(default_factory=lambda: ["logreg", "nb"])
    folds: int = 10
    external_scores: list[dict] = field(default_factory=list)


@dataclass
class CensusConfig:
    scorer: str = "ensemble"


@dataclass
class AnalyticsConfig:
    citation_horizon: int = 3
    trunk_journals: list[str] = field(default_factory=lambda: ["JAMA", "N Engl J Med"])
    min_trunk_citations: int = 100
    country_anchor_years: tuple[int, int] = (2013, 2019)
    country_min_count: int = 200
    meta_method: str = "keyword"


@dataclass
class ServeConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    token_env: str = "LABELS_TOKEN"
    split: str = "train"


@dataclass
class PipelineConfig:
    seed: int
    paths: PathsConfig
    rules: RuleSet
    window: tuple[int, int]
    splits: dict[str, int]
    annotate: AnnotateConfig
    provider_kind: str
    provider: ProviderConfig
    mock: MockProviderConfig
    distill: DistillConfig
    policy: OperatingPointPolicy
    census: CensusConfig
    analytics: AnalyticsConfig
    serve: ServeConfig

    def workpath(self, *parts: str) -> str:
        return os.path.join(self.paths.workdir, *parts)


# Schema: section -> key -> (checker name, default). Checkers live below.
_SCHEMA: dict[str, dict[str, str]] = {
    "": {"seed": "int"},
    "paths": {
        "workdir": "str",
        "source": "str",
        "labels": "str",
        "cache": "str",
        "registry": "str",
    },
    "universe": {
        "from": "int",
        "to": "int",
        "mode": "str",
        "keyword_boundaries": "bool",
        "nlm_tags": "str_list",
        "registry_prefixes": "str_list",
        "keywords": "str_list",
    },
    "splits": {"train": "int", "validation": "int", "test": "int"},
    "annotate": {"prompt_id": "str", "sample_size": "int", "exclude_test": "bool"},
    "provider": {
        "kind": "str",
        "endpoint": "str",
        "model_id": "str",
        "max_in_flight": "int",
        "requests_per_minute": "number",
        "price_per_1k_input_tokens": "number",
        "price_per_1k_output_tokens": "number",
        "budget_cap": "number",
        "api_key_env": "str",
        "temperature": "number",
        "max_completion_tokens": "int",
        "estimated_completion_tokens": "int",
        "retry_base_seconds": "number",
        "timeout_seconds": "number",
    },
    "provider.mock": {"tpr": "number", "fpr": "number", "gold_path": "str"},
    "distill": {
        "schedule": "int_list",
        "algorithms": "str_list",
        "folds": "int",
        "external_scores": "table_list",
    },
    "operating_points": {"liberal_tpr": "number", "conservative_precision": "number"},
    "census": {"scorer": "str"},
    "analytics": {
        "citation_horizon": "int",
        "trunk_journals": "str_list",
        "min_trunk_citations": "int",
        "country_anchor_years": "int_list",
        "country_min_count": "int",
        "meta_method": "str",
    },
    "serve": {"host": "str", "port": "int", "token_env": "str", "split": "str"},
}


def _type_ok(kind: str, value: object) -> bool:
    if kind == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "number":
        return (isinstance(value, (int, float)) and not isinstance(value, bool))
    if kind == "str":
        return isinstance(value, str)
    if kind == "bool":
        return isinstance(value, bool)
    if kind == "str_list":
        return isinstance(value, list) and all(isinstance(v, str) for v in value)
    if kind == "int_list":
        return isinstance(value, list) and all(
            isinstance(v, int) and not isinstance(v, bool) for v in value
        )
    if kind == "table_list":
        return isinstance(value, list) and all(isinstance(v, dict) for v in value)
    raise AssertionError(kind)


def load_config(path: str) -> PipelineConfig:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return validate_config(data, base_dir=os.path.dirname(os.path.abspath(path)))


def validate_config(data: dict, base_dir: str = ".") -> PipelineConfig:
    """Check the parsed TOML against the schema and build the typed config.
    Raises ConfigError listing every problem found, not just the first."""
    errors: list[str] = []

    def check_section(section_name: str, obj: dict) -> dict:
        schema = _SCHEMA[section_name]
        clean: dict = {}
        for key, value in obj.items():
            if isinstance(value, dict):
                continue  # nested sections are dispatched by the caller
            if key not in schema:
                where = section_name or "top level"
                errors.append(f"unknown key {key!r} in {where}")
                continue
            kind = schema[key]
            if not _type_ok(kind, value):
                errors.append(f"{section_name + '.' if section_name else ''}{key}: expected {kind}, got {value!r}")
                continue
            clean[key] = value
        return clean

    known_sections = {"paths", "universe", "splits", "annotate", "provider",
                      "distill", "operating_points", "census", "analytics", "serve"}
    top = check_section("", data)
    for key, value in data.items():
        if isinstance(value, dict) and key not in known_sections:
            errors.append(f"unknown section [{key}]")

    def section(name: str) -> dict:
        raw = data.get(name, {})
        if not isinstance(raw, dict):
            errors.append(f"[{name}] must be a section")
            return {}
        return check_section(name, raw)

    paths_raw = section("paths")
    universe_raw = section("universe")
    splits_raw = section("splits")
    annotate_raw = section("annotate")
    provider_raw = section("provider")
    mock_raw = {}
    if isinstance(data.get("provider"), dict):
        for key, value in data["provider"].items():
            if isinstance(value, dict):
                if key != "mock":
                    errors.append(f"unknown section [provider.{key}]")
                else:
                    mock_raw = check_section("provider.mock", value)
    distill_raw = section("distill")
    policy_raw = section("operating_points")
    census_raw = section("census")
    analytics_raw = section("analytics")
    serve_raw = section("serve")
    for name in ("paths", "universe", "splits", "annotate", "distill",
                 "operating_points", "census", "analytics", "serve"):
        if isinstance(data.get(name), dict):
            for key, value in data[name].items():
                if isinstance(value, dict):
                    errors.append(f"unknown section [{name}.{key}]")

    if "seed" not in top:
        errors.append("seed is required at the top level")
    if "workdir" not in paths_raw:
        errors.append("paths.workdir is required")

    mode = universe_raw.get("mode", "strict")
    if mode not in ("strict", "paper_loose"):
        errors.append(f"universe.mode must be 'strict' or 'paper_loose', got {mode!r}")
    window = (universe_raw.get("from", 2010), universe_raw.get("to", 2022))
    if window[0] > window[1]:
        errors.append(f"universe window is empty: from {window[0]} to {window[1]}")

    for key in ("tpr", "fpr"):
        if key in mock_raw and not (0.0 <= mock_raw[key] <= 1.0):
            errors.append(f"provider.mock.{key} must lie in [0, 1]")
    provider_kind = provider_raw.get("kind", "mock")
    if provider_kind not in ("mock", "http"):
        errors.append(f"provider.kind must be 'mock' or 'http', got {provider_kind!r}")
    if provider_kind == "http" and not provider_raw.get("endpoint"):
        errors.append("provider.endpoint is required when provider.kind = 'http'")

    schedule = distill_raw.get("schedule", [1000])
    if schedule != sorted(schedule) or any(s <= 0 for s in schedule):
        errors.append("distill.schedule must be ascending positive integers")
    for algorithm in distill_raw.get("algorithms", ["logreg", "nb"]):
        if algorithm not in ("logreg", "nb"):
            errors.append(f"distill.algorithms: unknown algorithm {algorithm!r}")
    for i, ext in enumerate(distill_raw.get("external_scores", [])):
        extra = set(ext) - {"scorer_id", "path"}
        if extra or "scorer_id" not in ext or "path" not in ext:
            errors.append(
                f"distill.external_scores[{i}] needs exactly 'scorer_id' and 'path'"
            )

    for key in ("liberal_tpr", "conservative_precision"):
        if key in policy_raw and not (0.0 < policy_raw[key] <= 1.0):
            errors.append(f"operating_points.{key} must lie in (0, 1]")

    anchors = analytics_raw.get("country_anchor_years", [2013, 2019])
    if len(anchors) != 2 or anchors[0] >= anchors[1]:
        errors.append("analytics.country_anchor_years must be two increasing years")
    if analytics_raw.get("meta_method", "keyword") not in ("keyword", "nlm_tag"):
        errors.append("analytics.meta_method must be 'keyword' or 'nlm_tag'")
    if serve_raw.get("split", "train") not in ("train", "validation", "test"):
        errors.append("serve.split must be one of train, validation, test")

    split_sizes = dict(DEFAULT_SPLIT_SIZES)
    split_sizes.update(splits_raw)
    for name, size in split_sizes.items():
        if size < 0:
            errors.append(f"splits.{name} must be non-negative")

    if errors:
        raise ConfigError("invalid configuration:\n  - " + "\n  - ".join(errors))

    def resolve(p: str | None) -> str | None:
        if p is None:
            return None
        return p if os.path.isabs(p) else os.path.join(base_dir, p)

    workdir = resolve(paths_raw["workdir"]) or "."
    paths = PathsConfig(
        workdir=workdir,
        source=resolve(paths_raw.get("source")),
        labels=resolve(paths_raw.get("labels")),
        cache=resolve(paths_raw.get("cache")) or os.path.join(workdir, "cache.jsonl"),
        registry=resolve(paths_raw.get("registry")),
    )
    rules = RuleSet(
        nlm_tags=tuple(universe_raw.get("nlm_tags", DEFAULT_NLM_TAGS)),
        registry_prefixes=tuple(universe_raw.get("registry_prefixes", DEFAULT_REGISTRY_PREFIXES)),
        keywords=tuple(universe_raw.get("keywords", DEFAULT_KEYWORDS)),
        match_mode=mode,
        keyword_boundaries=universe_raw.get("keyword_boundaries", False),
    )
    provider = ProviderConfig(
        endpoint=provider_raw.get("endpoint", ""),
        model_id=provider_raw.get("model_id", "mock-annotator"),
        max_in_flight=provider_raw.get("max_in_flight", 4),
        requests_per_minute=float(provider_raw.get("requests_per_minute", 6000.0)),
        price_per_1k_input_tokens=float(provider_raw.get("price_per_1k_input_tokens", 0.0)),
        price_per_1k_output_tokens=float(provider_raw.get("price_per_1k_output_tokens", 0.0)),
        budget_cap=float(provider_raw.get("budget_cap", math.inf)),
        api_key_env=provider_raw.get("api_key_env", "ANNOTATION_API_KEY"),
        temperature=float(provider_raw.get("temperature", 0.0)),
        max_completion_tokens=provider_raw.get("max_completion_tokens", 64),
        estimated_completion_tokens=provider_raw.get("estimated_completion_tokens", 16),
        retry_base_seconds=float(provider_raw.get("retry_base_seconds", 0.5)),
        timeout_seconds=float(provider_raw.get("timeout_seconds", 60.0)),
    )
    mock = MockProviderConfig(
        tpr=float(mock_raw.get("tpr", 0.934)),
        fpr=float(mock_raw.get("fpr", 0.049)),
        gold_path=resolve(mock_raw.get("gold_path")),
    )
    return PipelineConfig(
        seed=top["seed"],
        paths=paths,
        rules=rules,
        window=window,
        splits=split_sizes,
        annotate=AnnotateConfig(
            prompt_id=annotate_raw.get("prompt_id", "1.2"),
            sample_size=annotate_raw.get("sample_size", 1000),
            exclude_test=annotate_raw.get("exclude_test", True),
        ),
        provider_kind=provider_kind,
        provider=provider,
        mock=mock,
        distill=DistillConfig(
            schedule=list(schedule),
            algorithms=list(distill_raw.get("algorithms", ["logreg", "nb"])),
            folds=distill_raw.get("folds", 10),
            external_scores=[
                {"scorer_id": e["scorer_id"], "path": resolve(e["path"])}
                for e in distill_raw.get("external_scores", [])
            ],
        ),
        policy=OperatingPointPolicy(
            liberal_tpr=float(policy_raw.get("liberal_tpr", 0.99)),
            conservative_precision=float(policy_raw.get("conservative_precision", 0.82)),
        ),
        census=CensusConfig(scorer=census_raw.get("scorer", "ensemble")),
        analytics=AnalyticsConfig(
            citation_horizon=analytics_raw.get("citation_horizon", 3),
            trunk_journals=list(analytics_raw.get("trunk_journals", ["JAMA", "N Engl J Med"])),
            min_trunk_citations=analytics_raw.get("min_trunk_citations", 100),
            country_anchor_years=(anchors[0], anchors[1]),
            country_min_count=analytics_raw.get("country_min_count", 200),
            meta_method=analytics_raw.get("meta_method", "keyword"),
        ),
        serve=ServeConfig(
            host=serve_raw.get("host", "127.0.0.1"),
            port=serve_raw.get("port", 8765),
            token_env=serve_raw.get("token_env", "LABELS_TOKEN"),
            split=serve_raw.get("split", "train"),
        ),
    )
