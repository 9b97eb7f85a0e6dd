"""Run engine.

Wires datasets -> prompts -> backend -> sandbox -> metrics. Work is split
into resumable stages (transform, solve incl. back-translation, eval); every
stage persists keyed events to the run record before moving on, and skips
keys that are already persisted, so rerunning a finished stage issues zero
backend calls. All randomness flows from the three named seeds; backend
nondeterminism is quarantined in the persisted raw outputs.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from narbench import analyses
from narbench.backend import (
    BackendError,
    ChatBackend,
    GenerationRequest,
    HTTPBackend,
    MockBackend,
    ProviderConfig,
    RoleTag,
)
from narbench.categories import parse_category
from narbench.dataset import (
    DatasetFilterSpec,
    Problem,
    Source,
    apply_filter,
    load_problems,
    problem_to_record,
)
from narbench.prompts import (
    DEFAULT_MISALIGNED_GENRES,
    NARRATIVE_KINDS,
    NarrativeVariant,
    PromptStrategy,
    StrategyKind,
    TemplateRegistry,
    Validity,
    build_misaligned_prompt,
    build_backtranslation_prompt,
    build_paraphrase_prompt,
    build_solver_prompt,
    build_transformation_prompt,
    builtin_registry,
    concat_paraphrases,
    genre_collisions,
    misaligned_genre_for,
    parse_narrative,
    permute_variants,
    strip_example_io,
    strip_examples,
)
from narbench.record import RunLock, RunRecord
from narbench.sandbox import CandidateSolution, ExecutionLimits, Sandbox, extract_code

log = logging.getLogger("narbench")

NO_IO_SUFFIX = "[no_io]"


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    dataset_path: str
    output_dir: str
    strategies: tuple[PromptStrategy, ...]
    backends: dict = field(default_factory=dict)
    narr_backend: str = "mock"
    solve_backend: str = "mock"
    alg_backend: str = ""
    source: Source = Source.CUSTOM
    filter: DatasetFilterSpec = DatasetFilterSpec()
    n_variants: int = 5
    samples_per_strategy: int = 10
    samples_per_variant: int = 1
    temperature_narrative: float = 1.0
    temperature_code: float = 0.2
    max_tokens_narrative: int = 4096
    max_tokens_code: int = 4096
    max_tokens_backtranslate: int = 256
    seed_sampling: int = 0
    seed_permutation: int = 0
    seed_misalignment: int = 0
    limits: ExecutionLimits = ExecutionLimits()
    max_in_flight: int = 4
    parallel_exec: int = 4
    exact_match: bool = False
    example_io_ablation: bool = False
    backtranslate_arms: tuple[str, ...] = ("RepeatedSampling", "NarrativeOnly", "NarrativeConcat")
    report_ks: tuple[int, ...] = (1, 5, 10)
    language: str = "Python 3"
    language_tag: str = "python"
    template_dir: str = ""
    probe_command: tuple[str, ...] = ()

    def __post_init__(self):
        if self.n_variants < 1:
            raise ConfigError("n_variants must be >= 1")
        if self.samples_per_strategy < 1 or self.samples_per_variant < 1:
            raise ConfigError("sample counts must be >= 1")
        if not self.strategies:
            raise ConfigError("at least one strategy is required")

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as handle:
                raw = json.load(handle)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        try:
            strategies = tuple(
                PromptStrategy(kind=StrategyKind(s), template_id=raw.get("template_ids", {}).get(s, ""))
                if isinstance(s, str)
                else PromptStrategy(kind=StrategyKind(s["kind"]), template_id=s.get("template_id", ""))
                for s in raw["strategies"]
            )
            filter_spec = DatasetFilterSpec(
                max_length=raw.get("filter", {}).get("max_length"),
                min_rating=raw.get("filter", {}).get("min_rating"),
                require_examples=raw.get("filter", {}).get("require_examples", False),
                id_allowlist=tuple(raw["filter"]["id_allowlist"])
                if raw.get("filter", {}).get("id_allowlist")
                else None,
            )
            limits_raw = raw.get("limits", {})
            temps = raw.get("temperatures", {})
            seeds = raw.get("seeds", {})
            tokens = raw.get("max_tokens", {})
            return cls(
                dataset_path=raw["dataset_path"],
                output_dir=raw["output_dir"],
                strategies=strategies,
                backends=raw.get("backends", {}),
                narr_backend=raw.get("narr_backend", "mock"),
                solve_backend=raw.get("solve_backend", "mock"),
                alg_backend=raw.get("alg_backend", ""),
                source=Source(raw.get("source", "Custom")),
                filter=filter_spec,
                n_variants=raw.get("n_variants", 5),
                samples_per_strategy=raw.get("samples_per_strategy", 10),
                samples_per_variant=raw.get("samples_per_variant", 1),
                temperature_narrative=temps.get("narrative", 1.0),
                temperature_code=temps.get("code", 0.2),
                max_tokens_narrative=tokens.get("narrative", 4096),
                max_tokens_code=tokens.get("code", 4096),
                max_tokens_backtranslate=tokens.get("backtranslate", 256),
                seed_sampling=seeds.get("sampling", 0),
                seed_permutation=seeds.get("permutation", 0),
                seed_misalignment=seeds.get("misalignment", 0),
                limits=ExecutionLimits(
                    time_ms=limits_raw.get("time_ms", 10_000),
                    memory_mb=limits_raw.get("memory_mb", 512),
                ),
                max_in_flight=raw.get("max_in_flight", 4),
                parallel_exec=raw.get("parallel_exec", 4),
                exact_match=raw.get("exact_match", False),
                example_io_ablation=raw.get("example_io_ablation", False),
                backtranslate_arms=tuple(
                    raw.get("backtranslate_arms", ["RepeatedSampling", "NarrativeOnly", "NarrativeConcat"])
                ),
                report_ks=tuple(raw.get("report_ks", [1, 5, 10])),
                language=raw.get("language", "Python 3"),
                language_tag=raw.get("language_tag", "python"),
                template_dir=raw.get("template_dir", ""),
                probe_command=tuple(raw.get("probe_command", [])),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad config: {exc}") from None

    def snapshot(self) -> dict:
        return {
            "dataset_path": self.dataset_path,
            "output_dir": self.output_dir,
            "strategies": [s.label for s in self.strategies],
            "narr_backend": self.narr_backend,
            "solve_backend": self.solve_backend,
            "alg_backend": self.alg_backend,
            "source": self.source.value,
            "n_variants": self.n_variants,
            "samples_per_strategy": self.samples_per_strategy,
            "samples_per_variant": self.samples_per_variant,
            "temperatures": {"narrative": self.temperature_narrative, "code": self.temperature_code},
            "seeds": {
                "sampling": self.seed_sampling,
                "permutation": self.seed_permutation,
                "misalignment": self.seed_misalignment,
            },
            "limits": {"time_ms": self.limits.time_ms, "memory_mb": self.limits.memory_mb},
            "example_io_ablation": self.example_io_ablation,
            "report_ks": list(self.report_ks),
        }

    def registry(self) -> TemplateRegistry:
        if self.template_dir:
            return TemplateRegistry.from_dir(self.template_dir)
        return builtin_registry()


def make_backend(config: RunConfig, backend_id: str, sink=None) -> ChatBackend:
    try:
        raw = config.backends[backend_id]
    except KeyError:
        raise ConfigError(f"no backend named {backend_id!r} in config") from None
    kind = raw.get("type", "openai-chat")
    if kind == "mock":
        backend = MockBackend.from_script_file(raw["script"], sink=sink)
        backend.backend_id = backend_id
        return backend
    if kind == "openai-chat":
        return HTTPBackend(
            ProviderConfig(
                backend_id=backend_id,
                base_url=raw["base_url"],
                model_name=raw["model_name"],
                credential_env_var=raw["credential_env_var"],
                requests_per_minute=raw.get("requests_per_minute", 60),
                max_tokens=raw.get("max_tokens", 4096),
            ),
            sink=sink,
        )
    raise ConfigError(f"unknown backend type {kind!r}")


# ---------------------------------------------------------------------------
# Task enumeration
# ---------------------------------------------------------------------------

_FAMILY_OF_KIND = {
    StrategyKind.NARRATIVE_ONLY: "tagged",
    StrategyKind.NARRATIVE_CONCAT: "tagged",
    StrategyKind.PERMUTED: "tagged",
    StrategyKind.NO_TAG_NARRATIVE: "notag",
    StrategyKind.MISALIGNED: "misaligned",
    StrategyKind.PARAPHRASE: "paraphrase",
    StrategyKind.PARAPHRASE_CONCAT: "paraphrase",
}


def transform_families(config: RunConfig) -> list[str]:
    families = []
    for strategy in config.strategies:
        family = _FAMILY_OF_KIND.get(strategy.kind)
        if family and family not in families:
            families.append(family)
    return families


def flat_arm(strategy: PromptStrategy) -> bool:
    return strategy.kind not in NARRATIVE_KINDS


def intended_samples(config: RunConfig, strategy: PromptStrategy) -> int:
    if flat_arm(strategy):
        return config.samples_per_strategy
    return config.n_variants * config.samples_per_variant


def call_plan(config: RunConfig, n_problems: int) -> dict:
    """Upper-bound call counts per stage (assumes every narrative valid and
    every solution extractable), for --dry-run budgeting."""
    transforms = len(transform_families(config)) * n_problems * config.n_variants
    solves = sum(intended_samples(config, s) for s in config.strategies) * n_problems
    if config.example_io_ablation:
        for strategy in config.strategies:
            if strategy.kind in (
                StrategyKind.REPEATED_SAMPLING,
                StrategyKind.NARRATIVE_ONLY,
                StrategyKind.NARRATIVE_CONCAT,
            ):
                solves += intended_samples(config, strategy) * n_problems
    backtranslations = 0
    if config.alg_backend:
        labels = {s.label: s for s in config.strategies}
        backtranslations = sum(
            intended_samples(config, labels[arm]) for arm in config.backtranslate_arms if arm in labels
        ) * n_problems
    return {
        "transforms": transforms,
        "solves": solves,
        "backtranslations": backtranslations,
        "total": transforms + solves + backtranslations,
    }


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------

class Pipeline:
    def __init__(self, config: RunConfig):
        self.config = config
        self.record = RunRecord.open(config.output_dir)
        self.registry = config.registry()
        self._problems: list[Problem] | None = None

    # -- shared helpers ------------------------------------------------------

    def load_dataset(self) -> list[Problem]:
        if self._problems is None:
            problems = load_problems(self.config.dataset_path, self.config.source)
            problems = apply_filter(problems, self.config.filter)
            if not self.record.has("config"):
                self.record.append("config", key="config", config=self.config.snapshot())
            for problem in problems:
                key = f"problem:{problem.id}"
                if not self.record.has(key):
                    self.record.append("problem", key=key, problem=problem_to_record(problem))
            self._problems = problems
        return self._problems

    def _sink(self, event: dict):
        self.record.append("backend_io", **event)

    def _run_batch(self, backend: ChatBackend, tasks: list[tuple[str, dict, GenerationRequest]]):
        """Issue pending requests and persist one keyed generation event per
        slot (or a stage_error event for failed slots)."""
        pending = [(key, meta, request) for key, meta, request in tasks if not self.record.has(key)]
        if not pending:
            return
        responses = backend.generate_batch([r for _, _, r in pending], self.config.max_in_flight)
        for (key, meta, request), response in zip(pending, responses):
            if isinstance(response, BackendError):
                self.record.append(
                    "stage_error",
                    key=key,
                    error=type(response).__name__,
                    message=str(response),
                    **meta,
                )
                continue
            self.record.append(
                "generation",
                key=key,
                prompt=request.prompt,
                response={
                    "text": response.text,
                    "token_count": response.token_count,
                    "backend_id": response.backend_id,
                    "latency_ms": response.latency_ms,
                    "truncated": response.truncated,
                },
                **meta,
            )

    # -- transform -----------------------------------------------------------

    def stage_transform(self) -> None:
        config = self.config
        problems = self.load_dataset()
        families = transform_families(config)
        if not families:
            return
        backend = make_backend(config, config.narr_backend, sink=self._sink)
        tasks = []
        for family in families:
            for problem in problems:
                for j in range(1, config.n_variants + 1):
                    key = f"gen:transform:{family}:{problem.id}:{j}"
                    prompt = self._transform_prompt(family, problem)
                    request = GenerationRequest(
                        prompt=prompt,
                        role_tag=RoleTag.NARRATIVE_GEN,
                        temperature=config.temperature_narrative,
                        max_tokens=config.max_tokens_narrative,
                        seed=config.seed_sampling,
                        tag=key,
                    )
                    meta = {"stage": "transform", "family": family, "problem_id": problem.id, "index": j}
                    tasks.append((key, meta, request))
        self._run_batch(backend, tasks)
        self._parse_transforms(families, problems)

    def _transform_prompt(self, family: str, problem: Problem) -> str:
        config = self.config
        if family == "tagged":
            return build_transformation_prompt(problem, include_tags=True, registry=self.registry)
        if family == "notag":
            return build_transformation_prompt(problem, include_tags=False, registry=self.registry)
        if family == "misaligned":
            return build_misaligned_prompt(
                problem, DEFAULT_MISALIGNED_GENRES, config.seed_misalignment, registry=self.registry
            )
        if family == "paraphrase":
            return build_paraphrase_prompt(problem, registry=self.registry)
        raise ConfigError(f"unknown transform family {family}")

    def _parse_transforms(self, families: Sequence[str], problems: Sequence[Problem]) -> None:
        config = self.config
        for family in families:
            for problem in problems:
                for j in range(1, config.n_variants + 1):
                    gen = self.record.get(f"gen:transform:{family}:{problem.id}:{j}")
                    if gen is None:
                        continue
                    if family == "paraphrase":
                        key = f"paraphrase:{problem.id}:{j}"
                        if not self.record.has(key):
                            self.record.append(
                                "paraphrase", key=key, problem_id=problem.id, index=j,
                                text=gen["response"]["text"],
                            )
                        continue
                    key = f"narrative:{family}:{problem.id}:{j}"
                    if self.record.has(key):
                        continue
                    variant = parse_narrative(
                        gen["response"]["text"],
                        max_generation_tokens=config.max_tokens_narrative,
                        include_tags=family != "notag",
                        problem_id=problem.id,
                        variant_index=j,
                    )
                    event = analyses.narrative_to_event(variant)
                    if family == "misaligned":
                        event["injected_genre"] = misaligned_genre_for(
                            problem.id, DEFAULT_MISALIGNED_GENRES, config.seed_misalignment
                        )
                    self.record.append("narrative", key=key, family=family, **event)
        self._warn_on_genre_collisions()

    def _warn_on_genre_collisions(self):
        free = [
            e.get("genre") or ""
            for e in self.record.events("narrative")
            if e.get("family") == "tagged"
        ]
        collisions = genre_collisions(free, DEFAULT_MISALIGNED_GENRES)
        for genre in sorted(collisions):
            log.warning("injected misaligned genre %r also appears as a freely chosen genre", genre)

    # -- solve (including back-translation) -----------------------------------

    def _variants(self, family: str, problem_id: str) -> list[NarrativeVariant]:
        out = []
        for j in range(1, self.config.n_variants + 1):
            event = self.record.get(f"narrative:{family}:{problem_id}:{j}")
            if event is not None:
                out.append(analyses.event_to_narrative(event))
        return out

    def _paraphrases(self, problem_id: str) -> list[str]:
        out = []
        for j in range(1, self.config.n_variants + 1):
            event = self.record.get(f"paraphrase:{problem_id}:{j}")
            if event is not None:
                out.append(event["text"])
        return out

    def _solve_tasks_for(self, strategy: PromptStrategy, problem: Problem) -> list[tuple[str, dict, str]]:
        """(arm, sample_key, prompt) triples for one strategy on one problem,
        in deterministic order. Invalid narratives never yield a task."""
        config = self.config
        kind = strategy.kind
        arms: list[tuple[str, dict, str]] = []

        def add(arm: str, sample_key: str, prompt: str, **meta):
            arms.append((arm, {"sample_key": sample_key, **meta}, prompt))

        if flat_arm(strategy) and kind not in (StrategyKind.PARAPHRASE, StrategyKind.PARAPHRASE_CONCAT):
            prompt = build_solver_prompt(strategy, problem, registry=self.registry, language=config.language)
            for i in range(config.samples_per_strategy):
                add(strategy.label, f"s{i:03d}", prompt)
            if config.example_io_ablation and kind is StrategyKind.REPEATED_SAMPLING:
                stripped = build_solver_prompt(
                    strategy, strip_examples(problem), registry=self.registry, language=config.language
                )
                for i in range(config.samples_per_strategy):
                    add(strategy.label + NO_IO_SUFFIX, f"s{i:03d}", stripped, ablation="no_io")
            return arms

        if kind is StrategyKind.PARAPHRASE:
            texts = self._paraphrases(problem.id)
            if not texts:
                return arms
            for i in range(config.samples_per_strategy):
                prompt = build_solver_prompt(
                    strategy, problem, statement_override=texts[i % len(texts)],
                    registry=self.registry, language=config.language,
                )
                add(strategy.label, f"s{i:03d}", prompt, paraphrase_index=i % len(texts) + 1)
            return arms

        if kind is StrategyKind.PARAPHRASE_CONCAT:
            texts = self._paraphrases(problem.id)
            if len(texts) < 5:
                self._note(f"{problem.id}: only {len(texts)} paraphrases; ParaphraseConcat skipped")
                return arms
            joined = concat_paraphrases(texts, k=5)
            prompt = build_solver_prompt(
                strategy, problem, statement_override=joined,
                registry=self.registry, language=config.language,
            )
            for i in range(config.samples_per_strategy):
                add(strategy.label, f"s{i:03d}", prompt)
            return arms

        # Narrative-family strategies.
        family = _FAMILY_OF_KIND[kind]
        variants = [v for v in self._variants(family, problem.id) if v.validity is Validity.VALID]
        if kind is StrategyKind.PERMUTED:
            variants = self._permuted_variants(problem.id, variants)
        for variant in variants:
            prompt = build_solver_prompt(
                strategy, problem, variant, registry=self.registry, language=config.language
            )
            for s in range(config.samples_per_variant):
                add(
                    strategy.label,
                    f"v{variant.variant_index:02d}.{s}",
                    prompt,
                    variant_index=variant.variant_index,
                    family=family if kind is not StrategyKind.PERMUTED else "permuted",
                )
            if config.example_io_ablation and kind in (
                StrategyKind.NARRATIVE_ONLY, StrategyKind.NARRATIVE_CONCAT
            ):
                stripped_problem = (
                    strip_examples(problem) if kind is StrategyKind.NARRATIVE_CONCAT else problem
                )
                stripped_prompt = build_solver_prompt(
                    strategy, stripped_problem, strip_example_io(variant),
                    registry=self.registry, language=config.language,
                )
                for s in range(config.samples_per_variant):
                    add(
                        strategy.label + NO_IO_SUFFIX,
                        f"v{variant.variant_index:02d}.{s}",
                        stripped_prompt,
                        variant_index=variant.variant_index,
                        family=family,
                        ablation="no_io",
                    )
        return arms

    def _permuted_variants(self, problem_id: str, valid: list[NarrativeVariant]) -> list[NarrativeVariant]:
        if len(valid) < 3:
            self._note(f"{problem_id}: {len(valid)} valid variants; Permuted skipped (needs 3)")
            return []
        permuted = permute_variants(valid, self.config.seed_permutation)
        for variant in permuted:
            key = f"narrative:permuted:{problem_id}:{variant.variant_index}"
            if not self.record.has(key):
                self.record.append(
                    "narrative", key=key, family="permuted", **analyses.narrative_to_event(variant)
                )
        return permuted

    def _note(self, message: str):
        log.info(message)
        self.record.append("note", message=message)

    def stage_solve(self) -> None:
        config = self.config
        problems = self.load_dataset()
        backend = make_backend(config, config.solve_backend, sink=self._sink)
        tasks = []
        for strategy in config.strategies:
            for problem in problems:
                for arm, meta, prompt in self._solve_tasks_for(strategy, problem):
                    key = f"gen:solve:{arm}:{problem.id}:{meta['sample_key']}"
                    request = GenerationRequest(
                        prompt=prompt,
                        role_tag=RoleTag.SOLVER,
                        temperature=config.temperature_code,
                        max_tokens=config.max_tokens_code,
                        seed=config.seed_sampling,
                        tag=key,
                    )
                    full_meta = {
                        "stage": "solve",
                        "arm": arm,
                        "strategy": strategy.label,
                        "problem_id": problem.id,
                        **meta,
                    }
                    tasks.append((key, full_meta, request))
        self._run_batch(backend, tasks)
        if config.alg_backend:
            self._stage_backtranslate(problems)

    def _stage_backtranslate(self, problems: Sequence[Problem]) -> None:
        config = self.config
        backend = make_backend(config, config.alg_backend, sink=self._sink)
        solve_events = [
            e
            for e in self.record.events("generation")
            if e.get("stage") == "solve" and e.get("arm") in config.backtranslate_arms
        ]
        tasks = []
        no_code_keys = []
        for event in solve_events:
            key = f"alg:{event['arm']}:{event['problem_id']}:{event['sample_key']}"
            if self.record.has(key):
                continue
            code, ok = extract_code(event["response"]["text"], config.language_tag)
            if not ok:
                no_code_keys.append((key, event))
                continue
            request = GenerationRequest(
                prompt=build_backtranslation_prompt(code, registry=self.registry),
                role_tag=RoleTag.BACK_TRANSLATOR,
                max_tokens=config.max_tokens_backtranslate,
                tag=key,
            )
            meta = {
                "stage": "backtranslate",
                "arm": event["arm"],
                "problem_id": event["problem_id"],
                "sample_key": event["sample_key"],
            }
            tasks.append((key, meta, request))
        for key, event in no_code_keys:
            self.record.append(
                "backtranslation", key=key, arm=event["arm"], problem_id=event["problem_id"],
                sample_key=event["sample_key"], category=None, reason="no_code",
            )
        self._run_batch_backtranslate(backend, tasks)

    def _run_batch_backtranslate(self, backend: ChatBackend, tasks):
        """Back-translations parse to a category by exact name match, with a
        single reprompt for answers that fail to parse."""
        pending = [(key, meta, request) for key, meta, request in tasks if not self.record.has(key)]
        if not pending:
            return
        responses = backend.generate_batch([r for _, _, r in pending], self.config.max_in_flight)
        retry = []
        for (key, meta, request), response in zip(pending, responses):
            if isinstance(response, BackendError):
                self.record.append(
                    "backtranslation", key=key, category=None, reason=type(response).__name__, **meta
                )
                continue
            category = parse_category(response.text)
            if category is None:
                retry.append((key, meta, request))
                continue
            self.record.append(
                "backtranslation", key=key, category=category.label, raw=response.text, **meta
            )
        if retry:
            responses = backend.generate_batch([r for _, _, r in retry], self.config.max_in_flight)
            for (key, meta, request), response in zip(retry, responses):
                if isinstance(response, BackendError):
                    self.record.append(
                        "backtranslation", key=key, category=None, reason=type(response).__name__, **meta
                    )
                    continue
                category = parse_category(response.text)
                self.record.append(
                    "backtranslation",
                    key=key,
                    category=category.label if category else None,
                    raw=response.text,
                    **({"reason": "unparseable"} if category is None else {}),
                    **meta,
                )

    # -- eval ------------------------------------------------------------------

    def stage_eval(self) -> None:
        config = self.config
        problems = {p.id: p for p in self.load_dataset()}
        sandbox = Sandbox(config.limits, exact_match=config.exact_match)
        solve_events = [e for e in self.record.events("generation") if e.get("stage") == "solve"]
        todo = []
        for event in solve_events:
            verdict_key = f"verdict:{event['arm']}:{event['problem_id']}:{event['sample_key']}"
            if self.record.has(verdict_key):
                continue
            extract_key = f"extract:{event['arm']}:{event['problem_id']}:{event['sample_key']}"
            extraction = self.record.get(extract_key)
            if extraction is None:
                code, ok = extract_code(event["response"]["text"], config.language_tag)
                extraction = self.record.append(
                    "extraction", key=extract_key, arm=event["arm"], problem_id=event["problem_id"],
                    sample_key=event["sample_key"], source_code=code, extraction_ok=ok,
                )
            strategy = next(s for s in config.strategies if s.label == event["strategy"])
            todo.append(
                (
                    verdict_key,
                    event,
                    CandidateSolution(
                        problem_id=event["problem_id"],
                        strategy=strategy,
                        sample_index=0,
                        source_code=extraction["source_code"],
                        language_tag=config.language_tag,
                        extraction_ok=extraction["extraction_ok"],
                    ),
                )
            )
        if todo:
            verdicts = sandbox.run_all([c for _, _, c in todo], problems, config.parallel_exec)
            for (verdict_key, event, _), verdict in zip(todo, verdicts):
                self.record.append(
                    "verdict",
                    key=verdict_key,
                    arm=event["arm"],
                    problem_id=event["problem_id"],
                    sample_key=event["sample_key"],
                    per_test=[v.value for v in verdict.per_test],
                    overall_correct=verdict.overall_correct,
                    wall_ms_per_test=list(verdict.wall_ms_per_test),
                )
        analyses.write_summary(self.record, self.config)

    # -- whole pipeline ----------------------------------------------------------

    def run(self) -> RunRecord:
        with RunLock(self.config.output_dir):
            self.stage_transform()
            self.stage_solve()
            self.stage_eval()
        return self.record


def run_pipeline(config: RunConfig) -> RunRecord:
    return Pipeline(config).run()
