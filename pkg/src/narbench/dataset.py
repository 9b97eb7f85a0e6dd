"""Benchmark problem loading and filtering.

Problems live in line-delimited JSON files, one record per line (see
docs/problem_format.md for the frozen field names). Filtering reproduces the
evaluation-set construction rules: a length bound (inclusive), a rating
bound, an example-I/O requirement, and an optional id allowlist, plus a
seeded draw of a long-statement subset.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

from narbench._random import draw_key


class IOMode(Enum):
    FUNCTION_COMPLETION = "FunctionCompletion"
    STDIN_STDOUT = "StdinStdout"


class Source(Enum):
    HUMAN_EVAL = "HumanEval"
    LIVE_CODE_BENCH = "LiveCodeBench"
    CODE_FORCES = "CodeForces"
    CUSTOM = "Custom"


class DatasetError(Exception):
    pass


class MalformedRecord(DatasetError):
    """A problem record that does not satisfy the documented schema."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class InsufficientPool(DatasetError):
    def __init__(self, needed: int, available: int):
        super().__init__(f"need {needed} qualifying problems, pool has {available}")
        self.needed = needed
        self.available = available


@dataclass(frozen=True)
class IOCase:
    input: str
    output: str


@dataclass(frozen=True)
class Problem:
    """One benchmark task. `statement_length` is derived, never stored stale."""

    id: str
    statement: str
    io_mode: IOMode
    function_signature: str | None
    examples: tuple[IOCase, ...]
    hidden_tests: tuple[IOCase, ...]
    rating: int | None
    source: Source
    # Unknown record fields, preserved verbatim for round-trips.
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.io_mode is IOMode.FUNCTION_COMPLETION and not self.function_signature:
            raise ValueError(f"problem {self.id}: FunctionCompletion requires a function_signature")

    @property
    def statement_length(self) -> int:
        return len(self.statement)


@dataclass(frozen=True)
class DatasetFilterSpec:
    max_length: int | None = None
    min_rating: int | None = None
    require_examples: bool = False
    id_allowlist: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.max_length is not None and self.max_length < 1:
            raise ValueError("max_length must be >= 1")
        if self.min_rating is not None and self.min_rating < 0:
            raise ValueError("min_rating must be >= 0")


_KNOWN_FIELDS = {
    "id", "statement", "io_mode", "function_signature", "examples",
    "hidden_tests", "rating", "source", "statement_length",
}


def _parse_cases(raw, line: int, name: str) -> tuple[IOCase, ...]:
    if not isinstance(raw, list):
        raise MalformedRecord(line, f"{name} must be a list")
    cases = []
    for entry in raw:
        if not isinstance(entry, dict) or "input" not in entry or "output" not in entry:
            raise MalformedRecord(line, f"{name} entries need input and output fields")
        cases.append(IOCase(input=str(entry["input"]), output=str(entry["output"])))
    return tuple(cases)


def _parse_record(raw: dict, line: int, default_source: Source) -> Problem:
    for required in ("id", "statement", "io_mode"):
        if required not in raw:
            raise MalformedRecord(line, f"missing required field '{required}'")
    try:
        io_mode = IOMode(raw["io_mode"])
    except ValueError:
        raise MalformedRecord(line, f"unknown io_mode {raw['io_mode']!r}") from None
    source = default_source
    if "source" in raw:
        try:
            source = Source(raw["source"])
        except ValueError:
            raise MalformedRecord(line, f"unknown source {raw['source']!r}") from None
    rating = raw.get("rating")
    if rating is not None and not isinstance(rating, int):
        raise MalformedRecord(line, "rating must be an integer")
    try:
        return Problem(
            id=str(raw["id"]),
            statement=str(raw["statement"]),
            io_mode=io_mode,
            function_signature=raw.get("function_signature"),
            examples=_parse_cases(raw.get("examples", []), line, "examples"),
            hidden_tests=_parse_cases(raw.get("hidden_tests", []), line, "hidden_tests"),
            rating=rating,
            source=source,
            extra={k: v for k, v in raw.items() if k not in _KNOWN_FIELDS},
        )
    except ValueError as exc:
        raise MalformedRecord(line, str(exc)) from None


def load_problems(
    path: str | Path,
    source: Source = Source.CUSTOM,
    *,
    errors: list[MalformedRecord] | None = None,
) -> list[Problem]:
    """Load one Problem per JSONL record.

    Malformed records are never dropped silently: by default the first one
    raises (naming its line); pass `errors=[]` to collect them all and keep
    the well-formed remainder.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    problems: list[Problem] = []
    with path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                try:
                    raw = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from None
                if not isinstance(raw, dict):
                    raise MalformedRecord(line_no, "record is not an object")
                problems.append(_parse_record(raw, line_no, source))
            except MalformedRecord as bad:
                if errors is None:
                    raise
                errors.append(bad)
    return problems


def problem_to_record(problem: Problem) -> dict:
    record = {
        "id": problem.id,
        "statement": problem.statement,
        "io_mode": problem.io_mode.value,
        "examples": [dataclasses.asdict(c) for c in problem.examples],
        "hidden_tests": [dataclasses.asdict(c) for c in problem.hidden_tests],
        "source": problem.source.value,
        "statement_length": problem.statement_length,
    }
    if problem.function_signature is not None:
        record["function_signature"] = problem.function_signature
    if problem.rating is not None:
        record["rating"] = problem.rating
    record.update(problem.extra)
    return record


def save_problems(problems: Iterable[Problem], path: str | Path) -> None:
    """Write problems back out as JSONL; unknown fields round-trip."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for problem in problems:
            handle.write(json.dumps(problem_to_record(problem), sort_keys=True, ensure_ascii=False) + "\n")


def apply_filter(problems: list[Problem], spec: DatasetFilterSpec) -> list[Problem]:
    """Keep exactly the problems satisfying every present predicate, in order.

    The length bound is inclusive (length <= max_length); problems with no
    rating fail a min_rating bound.
    """
    allow = set(spec.id_allowlist) if spec.id_allowlist is not None else None
    kept = []
    for problem in problems:
        if spec.max_length is not None and problem.statement_length > spec.max_length:
            continue
        if spec.min_rating is not None and (problem.rating is None or problem.rating < spec.min_rating):
            continue
        if spec.require_examples and not problem.examples:
            continue
        if allow is not None and problem.id not in allow:
            continue
        kept.append(problem)
    return kept


def sample_long_subset(
    problems: list[Problem],
    min_length_exclusive: int,
    count: int,
    seed: int,
) -> list[Problem]:
    """Seeded draw of `count` problems with statement_length > the bound.

    Selection picks the `count` smallest SHA-256(seed:id) keys, so the result
    is a pure function of (pool, seed, count); pool order is preserved.
    """
    qualifying = [p for p in problems if p.statement_length > min_length_exclusive]
    if count > len(qualifying):
        raise InsufficientPool(needed=count, available=len(qualifying))
    ranked = sorted(range(len(qualifying)), key=lambda i: (draw_key(seed, qualifying[i].id), i))
    chosen = set(ranked[:count])
    return [p for i, p in enumerate(qualifying) if i in chosen]
