"""Derived tables: the eval summary, the discussion analyses, and replay.

Everything here is a pure function of the run record's raw events (plus the
config), so `replay` regenerates byte-identical tables on any machine.
Tables are tab-separated files under output_dir/reports/ with all floats
rendered at fixed precision.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from narbench.categories import AlgorithmCategory, parse_category
from narbench.metrics import (
    Classification,
    MannWhitneyResult,
    NoCorrectSamples,
    SampleOutcome,
    SampleSet,
    coverage,
    decompose,
    golden_algorithm,
    mann_whitney_u_one_sided,
    pass_at_k_capped,
)
from narbench.probe import ProbeFailure, default_probe_command, run_probe
from narbench.prompts import NARRATIVE_KINDS, NarrativeVariant, Validity
from narbench.record import RunRecord

NO_IO_SUFFIX = "[no_io]"
AGGREGATE_ARM = "Narrative"

ANALYSIS_NAMES = (
    "Agreement",
    "Decomposition",
    "Permuted",
    "Misaligned",
    "ExampleIOAblation",
    "NoTag",
    "AstMetrics",
)


class AnalysisError(Exception):
    pass


class MissingField(AnalysisError):
    def __init__(self, analysis: str, field: str):
        super().__init__(f"{analysis}: record lacks {field}")
        self.analysis = analysis
        self.field = field


# ---------------------------------------------------------------------------
# Record schema helpers
# ---------------------------------------------------------------------------

def narrative_to_event(variant: NarrativeVariant) -> dict:
    return {
        "problem_id": variant.problem_id,
        "index": variant.variant_index,
        "algorithm_category": variant.algorithm_category.label if variant.algorithm_category else None,
        "genre": variant.genre,
        "task_overview": variant.task_overview,
        "constraints": variant.constraints,
        "example_io": variant.example_io,
        "raw_output": variant.raw_output,
        "validity": variant.validity.value,
        "ablation_io_stripped": variant.ablation_io_stripped,
        "source_indices": list(variant.source_indices) if variant.source_indices else None,
    }


def event_to_narrative(event: dict) -> NarrativeVariant:
    category = parse_category(event["algorithm_category"]) if event.get("algorithm_category") else None
    return NarrativeVariant(
        problem_id=event["problem_id"],
        variant_index=event["index"],
        algorithm_category=category,
        genre=event.get("genre"),
        task_overview=event["task_overview"],
        constraints=event["constraints"],
        example_io=event["example_io"],
        raw_output=event.get("raw_output", ""),
        validity=Validity(event["validity"]),
        ablation_io_stripped=event.get("ablation_io_stripped", False),
        source_indices=tuple(event["source_indices"]) if event.get("source_indices") else None,
    )


def problem_order(record: RunRecord) -> list[str]:
    return [e["problem"]["id"] for e in record.events("problem")]


def arms_present(record: RunRecord) -> list[str]:
    seen: list[str] = []
    for event in record.events("generation"):
        if event.get("stage") == "solve" and event["arm"] not in seen:
            seen.append(event["arm"])
    return seen


@dataclass(frozen=True)
class ArmSample:
    problem_id: str
    sample_key: str
    arm: str
    correct: bool
    category: AlgorithmCategory | None
    variant_index: int | None
    source_code: str
    extraction_ok: bool


def collect_samples(record: RunRecord, arm: str) -> dict[str, list[ArmSample]]:
    """Per-problem scored samples of one arm, in deterministic order.

    Only samples with a persisted verdict count; sample keys are zero-padded
    so lexicographic order is generation order.
    """
    by_problem: dict[str, list[ArmSample]] = {pid: [] for pid in problem_order(record)}
    rows = []
    for event in record.events("generation"):
        if event.get("stage") != "solve" or event.get("arm") != arm:
            continue
        pid, sample_key = event["problem_id"], event["sample_key"]
        verdict = record.get(f"verdict:{arm}:{pid}:{sample_key}")
        if verdict is None:
            continue
        extraction = record.get(f"extract:{arm}:{pid}:{sample_key}") or {}
        alg = record.get(f"alg:{arm}:{pid}:{sample_key}")
        category = parse_category(alg["category"]) if alg and alg.get("category") else None
        rows.append(
            ArmSample(
                problem_id=pid,
                sample_key=sample_key,
                arm=arm,
                correct=verdict["overall_correct"],
                category=category,
                variant_index=event.get("variant_index"),
                source_code=extraction.get("source_code", ""),
                extraction_ok=extraction.get("extraction_ok", False),
            )
        )
    for row in sorted(rows, key=lambda r: (r.problem_id, r.sample_key)):
        if row.problem_id in by_problem:
            by_problem[row.problem_id].append(row)
    return by_problem


def collect_aggregate(record: RunRecord, arms: Sequence[str]) -> dict[str, list[ArmSample]]:
    """Pool several arms per problem (e.g. narrative-only + concatenated)."""
    pooled: dict[str, list[ArmSample]] = {pid: [] for pid in problem_order(record)}
    for arm in arms:
        for pid, samples in collect_samples(record, arm).items():
            pooled[pid].extend(samples)
    return pooled


def intended_category(record: RunRecord, family: str, problem_id: str, variant_index: int):
    event = record.get(f"narrative:{family}:{problem_id}:{variant_index}")
    if event is None or not event.get("algorithm_category"):
        return None
    return parse_category(event["algorithm_category"])


def to_sample_sets(by_problem: Mapping[str, list[ArmSample]]) -> list[SampleSet]:
    sets = []
    for pid, samples in by_problem.items():
        sets.append(
            SampleSet.from_samples(
                pid,
                [SampleOutcome(strategy=s.arm, correct=s.correct, back_translated=s.category) for s in samples],
            )
        )
    return sets


# ---------------------------------------------------------------------------
# Table rendering
# ---------------------------------------------------------------------------

def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6f}"
    if value is None:
        return ""
    return str(value)


def write_table(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["\t".join(header)]
    lines.extend("\t".join(fmt(cell) for cell in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def reports_dir(config) -> Path:
    return Path(config.output_dir) / "reports"


# ---------------------------------------------------------------------------
# Eval summary
# ---------------------------------------------------------------------------

def _strategy_for_arm(config, arm: str):
    base = arm[: -len(NO_IO_SUFFIX)] if arm.endswith(NO_IO_SUFFIX) else arm
    for strategy in config.strategies:
        if strategy.label == base:
            return strategy
    return None


def _intended_per_problem(config, arm: str) -> int:
    strategy = _strategy_for_arm(config, arm)
    if strategy is None:
        return 0
    if strategy.kind in NARRATIVE_KINDS:
        return config.n_variants * config.samples_per_variant
    return config.samples_per_strategy


def _summary_rows(record: RunRecord, config, arm: str, by_problem) -> list:
    sets = [SampleSet.from_samples(pid, [
        SampleOutcome(strategy=arm, correct=s.correct) for s in samples
    ]) for pid, samples in by_problem.items()]
    scored = [s for s in sets if s.n >= 1]
    intended = _intended_per_problem(config, arm) * len(sets)
    if arm == AGGREGATE_ARM:
        intended = (
            _intended_per_problem(config, "NarrativeOnly") + _intended_per_problem(config, "NarrativeConcat")
        ) * len(sets)
    used = sum(s.n for s in sets)
    row = [
        config.source.value,
        arm,
        config.solve_backend,
        len(sets),
        len(scored),
        (used / intended) if intended else 0.0,
        coverage(scored) if scored else 0.0,
    ]
    for k in config.report_ks:
        if scored:
            row.append(sum(pass_at_k_capped(s.n, s.c, k) for s in scored) / len(scored))
        else:
            row.append(0.0)
    return row


def summary_table(record: RunRecord, config) -> tuple[list[str], list[list]]:
    header = ["benchmark", "arm", "model", "problems", "problems_scored", "used_samples_ratio", "coverage"]
    header += [f"pass@{k}" for k in config.report_ks]
    arms = arms_present(record)
    rows = []
    for arm in arms:
        rows.append(_summary_rows(record, config, arm, collect_samples(record, arm)))
    if "NarrativeOnly" in arms and "NarrativeConcat" in arms:
        pooled = collect_aggregate(record, ["NarrativeOnly", "NarrativeConcat"])
        rows.append(_summary_rows(record, config, AGGREGATE_ARM, pooled))
    return header, rows


def write_summary(record: RunRecord, config) -> Path:
    header, rows = summary_table(record, config)
    path = reports_dir(config) / "summary.tsv"
    write_table(path, header, rows)
    return path


# ---------------------------------------------------------------------------
# Analyses
# ---------------------------------------------------------------------------

def _require_arm(record: RunRecord, analysis: str, arm: str) -> dict[str, list[ArmSample]]:
    if arm not in arms_present(record):
        raise MissingField(analysis, f"solve samples for arm {arm!r}")
    return collect_samples(record, arm)


def _narrative_pool(record: RunRecord, analysis: str) -> dict[str, list[ArmSample]]:
    arms = [a for a in ("NarrativeOnly", "NarrativeConcat") if a in arms_present(record)]
    if not arms:
        raise MissingField(analysis, "narrative solve samples")
    return collect_aggregate(record, arms)


def analysis_agreement(record: RunRecord, config) -> tuple[list[str], list[list]]:
    """Coverage plus back-translation agreement per arm. Agreement is only
    defined for narrative arms (their samples carry an intended category)."""
    header = ["arm", "problems_scored", "coverage", "correct_samples", "matching", "agreement"]
    rows = []
    arm_pools: list[tuple[str, dict]] = []
    for arm in ("RepeatedSampling", "NarrativeOnly", "NarrativeConcat"):
        if arm in arms_present(record):
            arm_pools.append((arm, collect_samples(record, arm)))
    narrative_arms = [arm for arm, _ in arm_pools if arm != "RepeatedSampling"]
    if not narrative_arms:
        raise MissingField("Agreement", "narrative solve samples")
    arm_pools.append((AGGREGATE_ARM, collect_aggregate(record, narrative_arms)))

    for arm, pool in arm_pools:
        sets = to_sample_sets(pool)
        scored = [s for s in sets if s.n >= 1]
        cov = coverage(scored) if scored else 0.0
        correct = matching = 0
        agreement_cell: object
        if arm == "RepeatedSampling":
            agreement_cell = ""  # no intended category exists for plain prompts
            correct = sum(s.c for s in sets)
        else:
            for pid, samples in pool.items():
                for sample in samples:
                    if not sample.correct:
                        continue
                    correct += 1
                    if sample.variant_index is None:
                        raise MissingField("Agreement", f"variant_index on {pid}")
                    intended = intended_category(record, "tagged", pid, sample.variant_index)
                    if sample.category is None:
                        raise MissingField("Agreement", f"back-translation for {pid}:{sample.sample_key}")
                    if intended is not None and sample.category is intended:
                        matching += 1
            agreement_cell = (matching / correct) if correct else "NoCorrectSamples"
        rows.append([arm, len(scored), cov, correct, matching if arm != "RepeatedSampling" else "", agreement_cell])
    return header, rows


def analysis_decomposition(record: RunRecord, config) -> tuple[list[str], list[list]]:
    """Per-condition outcome counts against the per-problem golden algorithm,
    with the trivial problems excluded from the aggregate."""
    original = _require_arm(record, "Decomposition", "RepeatedSampling")
    narrative = _narrative_pool(record, "Decomposition")
    totals = {
        "original": {c: 0 for c in Classification},
        "narrative": {c: 0 for c in Classification},
    }
    unclassified = {"original": 0, "narrative": 0}
    included = excluded_trivial = skipped = ties = 0
    for pid in problem_order(record):
        orig, narr = original.get(pid, []), narrative.get(pid, [])
        if not orig or not narr:
            skipped += 1
            continue
        orig_all_c, narr_all_c = all(s.correct for s in orig), all(s.correct for s in narr)
        orig_all_i, narr_all_i = not any(s.correct for s in orig), not any(s.correct for s in narr)
        if (orig_all_c and narr_all_c) or (orig_all_i and narr_all_i):
            excluded_trivial += 1
            continue
        vote = golden_algorithm(
            pid, [s.category for s in orig + narr if s.correct and s.category is not None]
        )
        if vote.category is None:
            skipped += 1
            continue
        if vote.tied:
            ties += 1
        included += 1
        classifiable = {}
        for name, samples in (("original", orig), ("narrative", narr)):
            kept = []
            for sample in samples:
                if not sample.correct and sample.category is None:
                    unclassified[name] += 1  # nothing to back-translate (e.g. no code)
                    continue
                kept.append(SampleOutcome(strategy=sample.arm, correct=sample.correct,
                                          back_translated=sample.category))
            classifiable[name] = kept
        orig_outcome, narr_outcome = decompose(
            classifiable["original"], classifiable["narrative"], vote.category
        )
        for name, outcome in (("original", orig_outcome), ("narrative", narr_outcome)):
            for classification, count in outcome.counts.items():
                totals[name][classification] += count
    header = [
        "condition", "correct", "implementation_error", "wrong_algorithm",
        "classified", "unclassified", "problems_included", "excluded_trivial", "golden_ties", "skipped",
    ]
    rows = []
    for name in ("original", "narrative"):
        counts = totals[name]
        rows.append([
            name,
            counts[Classification.CORRECT_SOLUTION],
            counts[Classification.IMPLEMENTATION_ERROR],
            counts[Classification.WRONG_ALGORITHM],
            sum(counts.values()),
            unclassified[name],
            included,
            excluded_trivial,
            ties,
            skipped,
        ])
    return header, rows


def _curve_rows(record: RunRecord, config, arms: Sequence[tuple[str, dict]]) -> tuple[list[str], list[list]]:
    header = ["k", "arm", "pass_at_k", "problems"]
    rows = []
    k_max = max(config.report_ks) if config.report_ks else config.samples_per_strategy
    for k in range(1, k_max + 1):
        for label, pool in arms:
            sets = [s for s in to_sample_sets(pool) if s.n >= 1]
            if not sets:
                rows.append([k, label, 0.0, 0])
                continue
            value = sum(pass_at_k_capped(s.n, s.c, k) for s in sets) / len(sets)
            rows.append([k, label, value, len(sets)])
    return header, rows


def analysis_permuted(record: RunRecord, config) -> tuple[list[str], list[list]]:
    permuted = _require_arm(record, "Permuted", "Permuted")
    return _curve_rows(
        record,
        config,
        [
            ("Original", _require_arm(record, "Permuted", "RepeatedSampling")),
            ("Complete", _narrative_pool(record, "Permuted")),
            ("Permuted", permuted),
        ],
    )


def analysis_misaligned(record: RunRecord, config) -> tuple[list[str], list[list]]:
    misaligned = _require_arm(record, "Misaligned", "Misaligned")
    return _curve_rows(
        record,
        config,
        [
            ("Original", _require_arm(record, "Misaligned", "RepeatedSampling")),
            ("Complete", _narrative_pool(record, "Misaligned")),
            ("Misaligned", misaligned),
        ],
    )


def analysis_example_io(record: RunRecord, config) -> tuple[list[str], list[list]]:
    k = max(config.report_ks)
    header = ["arm", "k", "with_io", "without_io", "delta"]
    present = arms_present(record)
    if not any(arm.endswith(NO_IO_SUFFIX) for arm in present):
        raise MissingField("ExampleIOAblation", "no_io ablation arms")

    def mean_pass(pool) -> float:
        sets = [s for s in to_sample_sets(pool) if s.n >= 1]
        if not sets:
            return 0.0
        return sum(pass_at_k_capped(s.n, s.c, k) for s in sets) / len(sets)

    rows = []
    if "RepeatedSampling" in present and "RepeatedSampling" + NO_IO_SUFFIX in present:
        a = mean_pass(collect_samples(record, "RepeatedSampling"))
        b = mean_pass(collect_samples(record, "RepeatedSampling" + NO_IO_SUFFIX))
        rows.append(["RepeatedSampling", k, a, b, a - b])
    narr_with = [a for a in ("NarrativeOnly", "NarrativeConcat") if a in present]
    narr_without = [a + NO_IO_SUFFIX for a in narr_with if a + NO_IO_SUFFIX in present]
    if narr_with and narr_without:
        a = mean_pass(collect_aggregate(record, narr_with))
        b = mean_pass(collect_aggregate(record, narr_without))
        rows.append([AGGREGATE_ARM, k, a, b, a - b])
    return header, rows


def analysis_notag(record: RunRecord, config) -> tuple[list[str], list[list]]:
    notag = _require_arm(record, "NoTag", "NoTagNarrative")
    k = max(config.report_ks)
    header = ["arm", "k", "pass_at_k"]
    pools = [("RepeatedSampling", collect_samples(record, "RepeatedSampling"))] if (
        "RepeatedSampling" in arms_present(record)
    ) else []
    pools.append(("NoTagNarrative", notag))
    try:
        pools.append((AGGREGATE_ARM, _narrative_pool(record, "NoTag")))
    except MissingField:
        pass
    rows = []
    for label, pool in pools:
        sets = [s for s in to_sample_sets(pool) if s.n >= 1]
        value = sum(pass_at_k_capped(s.n, s.c, k) for s in sets) / len(sets) if sets else 0.0
        rows.append([label, k, value])
    return header, rows


def analysis_ast(record: RunRecord, config) -> tuple[list[str], list[list]]:
    """Structural metrics of correct solutions, via the syntax-tree probe,
    with a one-sided rank test of narrative > plain sampling."""
    command = list(config.probe_command) or default_probe_command()
    header = ["metric", "rs_mean", "narr_mean", "u", "p", "method", "rs_n", "narr_n", "probe_failures"]
    if command is None:
        return header, [["probe unavailable", "", "", "", "", "", "", "", ""]]
    original = _require_arm(record, "AstMetrics", "RepeatedSampling")
    narrative = _narrative_pool(record, "AstMetrics")
    values = {"rs": {"functions": [], "helper": [], "depth": []},
              "narr": {"functions": [], "helper": [], "depth": []}}
    failures = 0
    for name, pool in (("rs", original), ("narr", narrative)):
        for samples in pool.values():
            for sample in samples:
                if not sample.correct or not sample.extraction_ok:
                    continue
                metrics = run_probe(sample.source_code, command)
                if isinstance(metrics, ProbeFailure) or not metrics.parse_ok:
                    failures += 1  # flagged, never fatal
                    continue
                values[name]["functions"].append(float(metrics.function_count))
                values[name]["helper"].append(1.0 if metrics.has_helper else 0.0)
                values[name]["depth"].append(float(metrics.max_depth))
    rows = []
    for metric, label in (("functions", "avg_functions"), ("helper", "helper_rate"), ("depth", "ast_depth")):
        rs, narr = values["rs"][metric], values["narr"][metric]
        if not rs or not narr:
            rows.append([label, "", "", "", "", "no data", len(rs), len(narr), failures])
            continue
        test: MannWhitneyResult = mann_whitney_u_one_sided(narr, rs)
        rows.append([
            label,
            sum(rs) / len(rs),
            sum(narr) / len(narr),
            test.u,
            test.p,
            test.method,
            len(rs),
            len(narr),
            failures,
        ])
    return header, rows


_ANALYSES = {
    "Agreement": ("agreement.tsv", analysis_agreement),
    "Decomposition": ("decomposition.tsv", analysis_decomposition),
    "Permuted": ("permuted.tsv", analysis_permuted),
    "Misaligned": ("misaligned.tsv", analysis_misaligned),
    "ExampleIOAblation": ("example_io.tsv", analysis_example_io),
    "NoTag": ("notag.tsv", analysis_notag),
    "AstMetrics": ("ast_metrics.tsv", analysis_ast),
}


def run_analysis(record: RunRecord, config, names: Sequence[str]) -> dict[str, Path]:
    """Run the requested analyses, write their tables, update the manifest.

    Raises MissingField when the record lacks what an analysis needs.
    """
    written: dict[str, Path] = {}
    for name in names:
        if name not in _ANALYSES:
            raise AnalysisError(f"unknown analysis {name!r} (valid: {', '.join(ANALYSIS_NAMES)})")
        filename, fn = _ANALYSES[name]
        header, rows = fn(record, config)
        path = reports_dir(config) / filename
        write_table(path, header, rows)
        written[name] = path
    manifest_path = reports_dir(config) / "MANIFEST.json"
    previous = []
    if manifest_path.exists():
        previous = json.loads(manifest_path.read_text())["analyses"]
    merged = sorted(set(previous) | set(written))
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(json.dumps({"analyses": merged}, sort_keys=True) + "\n")
    return written


def replay(record: RunRecord, config) -> list[Path]:
    """Recompute every derived table from raw events alone."""
    paths = [write_summary(record, config)]
    manifest_path = reports_dir(config) / "MANIFEST.json"
    if manifest_path.exists():
        names = json.loads(manifest_path.read_text())["analyses"]
        paths.extend(run_analysis(record, config, names).values())
    return paths
