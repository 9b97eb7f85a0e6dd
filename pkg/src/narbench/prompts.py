"""Prompt construction and narrative parsing.

Every prompting strategy (plain repeated sampling, chain-of-thought variants,
the narrative reformulations and their ablations) is built here from plain
text templates with {{name}} placeholders. Model outputs for the narrative
transformation are parsed back into the five-section schema and classified
by the three-rule validity filter.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from narbench._random import HashStream
from narbench.categories import AlgorithmCategory, parse_category
from narbench.dataset import IOMode, Problem


class PromptError(Exception):
    pass


class UnknownPlaceholder(PromptError):
    pass


class UnknownTemplate(PromptError):
    pass


class StrategyNarrativeMismatch(PromptError):
    pass


class InsufficientVariants(PromptError):
    def __init__(self, needed: int, available: int):
        super().__init__(f"need {needed} valid variants, have {available}")
        self.needed = needed
        self.available = available


# ---------------------------------------------------------------------------
# Template registry
# ---------------------------------------------------------------------------

_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")


def render(template: str, values: Mapping[str, str]) -> str:
    """Substitute {{name}} placeholders in one pass.

    Substituted text is never rescanned, so statements containing template
    metacharacters pass through literally.
    """

    def _sub(match: re.Match) -> str:
        name = match.group(1)
        if name not in values:
            raise UnknownPlaceholder(f"template references unknown placeholder {{{{{name}}}}}")
        return values[name]

    return _PLACEHOLDER_RE.sub(_sub, template)


class TemplateRegistry:
    """Immutable name -> template text map, loaded once from a directory."""

    def __init__(self, texts: Mapping[str, str]):
        self._texts = dict(texts)

    @classmethod
    def from_dir(cls, path: str | Path) -> "TemplateRegistry":
        path = Path(path)
        texts = {f.stem: f.read_text(encoding="utf-8") for f in sorted(path.glob("*.txt"))}
        if not texts:
            raise UnknownTemplate(f"no *.txt templates under {path}")
        return cls(texts)

    @classmethod
    def builtin(cls) -> "TemplateRegistry":
        root = resources.files("narbench") / "templates"
        texts = {
            entry.name[: -len(".txt")]: entry.read_text(encoding="utf-8")
            for entry in root.iterdir()
            if entry.name.endswith(".txt")
        }
        return cls(texts)

    def get(self, name: str) -> str:
        try:
            return self._texts[name]
        except KeyError:
            raise UnknownTemplate(f"no template named {name!r}") from None

    def names(self) -> tuple[str, ...]:
        return tuple(sorted(self._texts))


_BUILTIN: TemplateRegistry | None = None


def builtin_registry() -> TemplateRegistry:
    global _BUILTIN
    if _BUILTIN is None:
        _BUILTIN = TemplateRegistry.builtin()
    return _BUILTIN


# ---------------------------------------------------------------------------
# Narrative variants
# ---------------------------------------------------------------------------

class Validity(Enum):
    VALID = "Valid"
    TOO_SHORT = "TooShort"
    DEGENERATE_REPETITION = "DegenerateRepetition"
    MISSING_COMPONENTS = "MissingComponents"


# Minimum whitespace-token count below which an output is near-empty, and the
# fraction of the generation limit above which it is degenerate repetition.
MIN_NARRATIVE_TOKENS = 50
DEGENERATE_LIMIT_FRACTION = 0.99


@dataclass(frozen=True)
class NarrativeVariant:
    problem_id: str
    variant_index: int
    algorithm_category: AlgorithmCategory | None
    genre: str | None
    task_overview: str
    constraints: str
    example_io: str
    raw_output: str
    validity: Validity
    # Set by the example-I/O ablation; a stripped variant stays usable.
    ablation_io_stripped: bool = False
    # (j1, j2, j3) provenance for permuted variants.
    source_indices: tuple[int, int, int] | None = None


def count_tokens(text: str) -> int:
    """Whitespace-delimited token count: the backend-independent rule the
    validity thresholds are defined over."""
    return len(text.split())


_SECTION_NAMES = {
    "algorithm category": "algorithm_category",
    "narrative genre": "genre",
    "task overview": "task_overview",
    "constraints": "constraints",
    "example input/output": "example_io",
}

# Headers match at line starts, case-insensitively, tolerating list markers
# ("- Task Overview:"), markdown heading/bold wrappers (colon inside or
# outside the bold), and spacing around the slash in "Input/Output".
_HEADER_RE = re.compile(
    r"^\s*(?:[-*•]+\s*)?(?:#+\s*)?(?:\*\*)?\s*"
    r"(algorithm\s+category|narrative\s+genre|task\s+overview|constraints|"
    r"example\s+input\s*/\s*output)\s*(?:\*\*)?\s*:\s*(?:\*\*)?\s*(.*)$",
    re.IGNORECASE,
)


def _extract_sections(raw: str) -> dict[str, str]:
    sections: dict[str, list[str]] = {}
    current: str | None = None
    for line in raw.splitlines():
        match = _HEADER_RE.match(line)
        if match:
            name = _SECTION_NAMES[re.sub(r"\s+", " ", match.group(1).lower()).replace(" /", "/").replace("/ ", "/")]
            sections[name] = [match.group(2)]
            current = name
        elif current is not None:
            sections[current].append(line)
    return {name: "\n".join(lines).strip() for name, lines in sections.items()}


def parse_narrative(
    raw: str,
    max_generation_tokens: int,
    include_tags: bool = True,
    *,
    problem_id: str = "",
    variant_index: int = 1,
) -> NarrativeVariant:
    """Parse a transformation output and classify its validity.

    The three rejection rules apply in fixed priority order: near-empty
    output (< 50 tokens), degenerate repetition (> 99% of the generation
    limit), then missing required sections.
    """
    if max_generation_tokens <= 0:
        raise PromptError("max_generation_tokens must be positive")
    sections = _extract_sections(raw)
    task_overview = sections.get("task_overview", "")
    constraints = sections.get("constraints", "")
    example_io = sections.get("example_io", "")
    category = parse_category(sections.get("algorithm_category", "")) if include_tags else None
    genre = sections.get("genre") or None if include_tags else None

    tokens = count_tokens(raw)
    if tokens < MIN_NARRATIVE_TOKENS:
        validity = Validity.TOO_SHORT
    elif tokens > DEGENERATE_LIMIT_FRACTION * max_generation_tokens:
        validity = Validity.DEGENERATE_REPETITION
    elif not (task_overview and constraints and example_io):
        validity = Validity.MISSING_COMPONENTS
    else:
        validity = Validity.VALID

    return NarrativeVariant(
        problem_id=problem_id,
        variant_index=variant_index,
        algorithm_category=category,
        genre=genre,
        task_overview=task_overview,
        constraints=constraints,
        example_io=example_io,
        raw_output=raw,
        validity=validity,
    )


def narrative_body(variant: NarrativeVariant) -> str:
    """The solver-facing text: the three content sections only. Category and
    genre tags steer the generator and are not shown to the solver."""
    return (
        f"- Task Overview: {variant.task_overview}\n\n"
        f"- Constraints: {variant.constraints}\n\n"
        f"- Example Input/Output: {variant.example_io}"
    )


def serialize_narrative(variant: NarrativeVariant) -> str:
    """Canonical five-section rendering; parse_narrative inverts it."""
    category = variant.algorithm_category.label if variant.algorithm_category else ""
    genre = variant.genre or ""
    return (
        f"- Algorithm Category: {category}\n\n"
        f"- Narrative Genre: {genre}\n\n" + narrative_body(variant)
    )


# ---------------------------------------------------------------------------
# Strategies and solver prompts
# ---------------------------------------------------------------------------

class StrategyKind(Enum):
    REPEATED_SAMPLING = "RepeatedSampling"
    COT = "CoT"
    SCOT = "SCoT"
    NARRATIVE_ONLY = "NarrativeOnly"
    NARRATIVE_CONCAT = "NarrativeConcat"
    NO_TAG_NARRATIVE = "NoTagNarrative"
    PERMUTED = "Permuted"
    MISALIGNED = "Misaligned"
    PARAPHRASE = "Paraphrase"
    PARAPHRASE_CONCAT = "ParaphraseConcat"
    EXTERNAL_TEMPLATE = "ExternalTemplate"


# Strategies whose solver prompt is built from a narrative variant.
NARRATIVE_KINDS = frozenset(
    {
        StrategyKind.NARRATIVE_ONLY,
        StrategyKind.NARRATIVE_CONCAT,
        StrategyKind.PERMUTED,
        StrategyKind.MISALIGNED,
        StrategyKind.NO_TAG_NARRATIVE,
    }
)

# Strategies whose solver prompt is built from model-produced statement text.
PARAPHRASE_KINDS = frozenset({StrategyKind.PARAPHRASE, StrategyKind.PARAPHRASE_CONCAT})

_DEFAULT_TEMPLATE = {
    StrategyKind.REPEATED_SAMPLING: "solve_plain",
    StrategyKind.COT: "solve_cot",
    StrategyKind.SCOT: "solve_scot",
    StrategyKind.NARRATIVE_ONLY: "solve_narrative",
    StrategyKind.NARRATIVE_CONCAT: "solve_narrative_concat",
    StrategyKind.NO_TAG_NARRATIVE: "solve_narrative",
    StrategyKind.PERMUTED: "solve_narrative",
    StrategyKind.MISALIGNED: "solve_narrative",
    StrategyKind.PARAPHRASE: "solve_plain",
    StrategyKind.PARAPHRASE_CONCAT: "solve_plain",
}


@dataclass(frozen=True)
class PromptStrategy:
    kind: StrategyKind
    template_id: str = ""

    def __post_init__(self):
        if not self.template_id:
            default = _DEFAULT_TEMPLATE.get(self.kind)
            if default is None:
                raise PromptError(f"{self.kind.value} requires an explicit template_id")
            object.__setattr__(self, "template_id", default)

    @property
    def label(self) -> str:
        return self.kind.value


def _examples_block(problem: Problem) -> str:
    if not problem.examples:
        return ""
    parts = []
    for i, case in enumerate(problem.examples, start=1):
        parts.append(f"Example {i}\nInput:\n{case.input}\nOutput:\n{case.output}")
    return "\n\n".join(parts) + "\n\n"


def _io_instructions(problem: Problem) -> str:
    if problem.io_mode is IOMode.STDIN_STDOUT:
        return "Read the input from standard input and write the answer to standard output."
    return (
        "Implement a function with exactly this signature and return the result "
        f"(do not print it):\n{problem.function_signature}"
    )


def build_transformation_prompt(
    problem: Problem,
    include_tags: bool = True,
    *,
    registry: TemplateRegistry | None = None,
) -> str:
    registry = registry or builtin_registry()
    template = registry.get("transform_tagged" if include_tags else "transform_no_tag")
    return render(template, {"statement": problem.statement})


def build_solver_prompt(
    strategy: PromptStrategy,
    problem: Problem,
    narrative: NarrativeVariant | None = None,
    *,
    statement_override: str | None = None,
    registry: TemplateRegistry | None = None,
    language: str = "Python 3",
) -> str:
    """Build the prompt a solver model sees for one strategy.

    A narrative must be supplied exactly for the narrative-family strategies,
    and must be Valid (or explicitly I/O-stripped by the ablation).
    """
    registry = registry or builtin_registry()
    kind = strategy.kind
    if kind in NARRATIVE_KINDS:
        if narrative is None:
            raise StrategyNarrativeMismatch(f"{kind.value} requires a narrative variant")
        if narrative.validity is not Validity.VALID:
            raise StrategyNarrativeMismatch(
                f"{kind.value} requires a Valid narrative, got {narrative.validity.value}"
            )
    elif narrative is not None:
        raise StrategyNarrativeMismatch(f"{kind.value} does not take a narrative variant")
    if kind in PARAPHRASE_KINDS and statement_override is None:
        raise StrategyNarrativeMismatch(f"{kind.value} requires paraphrase text")

    values = {
        "statement": statement_override if statement_override is not None else problem.statement,
        "examples": _examples_block(problem),
        "io_instructions": _io_instructions(problem),
        "language": language,
    }
    if narrative is not None:
        values["narrative"] = narrative_body(narrative)
    return render(registry.get(strategy.template_id), values)


def build_backtranslation_prompt(source_code: str, *, registry: TemplateRegistry | None = None) -> str:
    registry = registry or builtin_registry()
    return render(registry.get("backtranslate"), {"code": source_code})


# ---------------------------------------------------------------------------
# Ablation constructions
# ---------------------------------------------------------------------------

def permute_variants(variants: Sequence[NarrativeVariant], seed: int) -> list[NarrativeVariant]:
    """Reassemble narratives with each section drawn from a distinct variant.

    Output slot i takes the task overview from variant j1, constraints from
    j2 and example I/O from j3, with (j1, j2, j3) pairwise distinct, drawn
    uniformly over ordered distinct triples of the Valid variants.
    """
    if not variants:
        raise InsufficientVariants(needed=3, available=0)
    valid = [v for v in variants if v.validity is Validity.VALID]
    if len(valid) < 3:
        raise InsufficientVariants(needed=3, available=len(valid))
    by_index = {v.variant_index: v for v in valid}
    problem_id = variants[0].problem_id
    stream = HashStream(seed, f"permute:{problem_id}")
    permuted = []
    for slot in range(len(variants)):
        pool = sorted(by_index)
        j1 = stream.choice(pool)
        pool.remove(j1)
        j2 = stream.choice(pool)
        pool.remove(j2)
        j3 = stream.choice(pool)
        permuted.append(
            NarrativeVariant(
                problem_id=problem_id,
                variant_index=slot + 1,
                algorithm_category=by_index[j1].algorithm_category,
                genre=by_index[j1].genre,
                task_overview=by_index[j1].task_overview,
                constraints=by_index[j2].constraints,
                example_io=by_index[j3].example_io,
                raw_output="",
                validity=Validity.VALID,
                source_indices=(j1, j2, j3),
            )
        )
    return permuted


@dataclass(frozen=True)
class MisalignedGenreSet:
    """Twenty deliberately incongruent genres, grouped into four categories."""

    groups: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        if len(self.genres) != 20:
            raise ValueError(f"misaligned genre set must hold exactly 20 genres, got {len(self.genres)}")

    @property
    def genres(self) -> tuple[str, ...]:
        return tuple(g for _, members in self.groups for g in members)


DEFAULT_MISALIGNED_GENRES = MisalignedGenreSet(
    groups=(
        (
            "Practical / Administrative Documents",
            (
                "Hospital Intake Form",
                "Medical Prescription Form",
                "Personal Information Consent Form",
                "Insurance Claim Form",
                "Visa Application Form",
                "Tax Return Form",
            ),
        ),
        (
            "Legal / Public Records",
            (
                "Court Transcript of an Extortion Case",
                "Heavy Machinery Operator License",
                "Military Service Exemption Certificate",
                "Divorce Decree",
                "Bank Loan Agreement",
            ),
        ),
        (
            "Industrial / Media Contexts",
            (
                "Billboard Advertisement for a Toothbrush",
                "Radio Weather Forecast",
                "Model Agency Contract",
            ),
        ),
        (
            "Funerary / Ritual Records",
            (
                "Funeral Service Program",
                "Memorial Tribute Writing",
                "Obituary Column",
                "Eulogy",
                "Gravestone Inscription",
                "Condolence Letter",
            ),
        ),
    )
)


def misaligned_genre_for(problem_id: str, genre_set: MisalignedGenreSet, seed: int) -> str:
    """Seeded, per-problem draw from the misaligned set."""
    stream = HashStream(seed, f"misaligned:{problem_id}")
    return genre_set.genres[stream.randbelow(len(genre_set.genres))]


def build_misaligned_prompt(
    problem: Problem,
    genre_set: MisalignedGenreSet = DEFAULT_MISALIGNED_GENRES,
    seed: int = 0,
    *,
    registry: TemplateRegistry | None = None,
) -> str:
    """Transformation prompt with a forced genre; algorithm choice stays free."""
    registry = registry or builtin_registry()
    genre = misaligned_genre_for(problem.id, genre_set, seed)
    return render(
        registry.get("transform_misaligned"),
        {"statement": problem.statement, "genre": genre},
    )


def genre_collisions(free_genres: Sequence[str], genre_set: MisalignedGenreSet) -> set[str]:
    """Injected genres that also occur among freely chosen genres; callers
    log these — semantic disjointness is curated, not enforced."""
    injected = {g.strip().lower() for g in genre_set.genres}
    return {g for g in free_genres if g and g.strip().lower() in injected}


PARAPHRASE_SEPARATOR = "\n\n---\n\n"


def build_paraphrase_prompt(problem: Problem, *, registry: TemplateRegistry | None = None) -> str:
    registry = registry or builtin_registry()
    return render(registry.get("paraphrase"), {"statement": problem.statement})


def concat_paraphrases(paraphrases: Sequence[str], k: int = 5) -> str:
    """Join the first k paraphrases, in order, with a fixed separator."""
    if len(paraphrases) < k:
        raise InsufficientVariants(needed=k, available=len(paraphrases))
    return PARAPHRASE_SEPARATOR.join(paraphrases[:k])


def strip_example_io(narrative: NarrativeVariant) -> NarrativeVariant:
    """Example-I/O ablation: empty the example section but keep the variant
    usable (the missing-components check is deliberately skipped here)."""
    if narrative.validity is not Validity.VALID:
        raise StrategyNarrativeMismatch("can only strip a Valid narrative")
    return replace(narrative, example_io="", ablation_io_stripped=True)


def strip_examples(problem: Problem) -> Problem:
    """Problem copy with example I/O removed, for the no-I/O baseline arm."""
    return replace(problem, examples=())
