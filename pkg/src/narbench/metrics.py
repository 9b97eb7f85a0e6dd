"""Evaluation metrics.

pass@k is the unbiased estimator 1 - C(n-c, k)/C(n, k), computed with the
stable product form so small cases are exact and large ones never overflow.
Coverage, agreement ratio, golden-algorithm voting and the error
decomposition follow from per-sample verdicts plus back-translated algorithm
categories. The one-sided Mann-Whitney U test uses exact enumeration for
small samples and a tie-corrected, continuity-corrected normal approximation
otherwise.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Iterable, Mapping, Sequence

from narbench.categories import CANONICAL_ORDER, AlgorithmCategory


class MetricError(Exception):
    pass


class DomainError(MetricError):
    pass


class EmptyInput(MetricError):
    pass


class NoCorrectSamples(MetricError):
    pass


class MissingBackTranslation(MetricError):
    def __init__(self, sample):
        super().__init__(f"sample {sample!r} has no back-translated algorithm")
        self.sample = sample


# ---------------------------------------------------------------------------
# pass@k and coverage
# ---------------------------------------------------------------------------

def pass_at_k(n: int, c: int, k: int) -> float:
    """Probability that at least one of k draws (without replacement) from
    n samples containing c correct ones is correct."""
    if not 0 <= c <= n:
        raise DomainError(f"need 0 <= c <= n, got n={n} c={c}")
    if not 1 <= k <= n:
        raise DomainError(f"need 1 <= k <= n, got n={n} k={k}")
    if n - c < k:
        return 1.0
    product = 1.0
    for i in range(k):
        product *= (n - c - i) / (n - i)
    return 1.0 - product


def pass_at_k_capped(n: int, c: int, k: int) -> float:
    """pass@min(k, n): the per-problem score when fewer than k samples
    survived validity filtering."""
    return pass_at_k(n, c, min(k, n))


@dataclass(frozen=True)
class SampleOutcome:
    strategy: str
    correct: bool
    back_translated: AlgorithmCategory | None = None


@dataclass(frozen=True)
class SampleSet:
    """All scored samples of one problem under one prompting condition."""

    problem_id: str
    n: int
    c: int
    per_sample: tuple[SampleOutcome, ...] = ()

    def __post_init__(self):
        if not 0 <= self.c <= self.n:
            raise DomainError(f"{self.problem_id}: need 0 <= c <= n, got n={self.n} c={self.c}")
        if self.per_sample and (
            len(self.per_sample) != self.n
            or sum(1 for s in self.per_sample if s.correct) != self.c
        ):
            raise DomainError(f"{self.problem_id}: per_sample disagrees with (n, c)")

    @classmethod
    def from_samples(cls, problem_id: str, samples: Iterable[SampleOutcome]) -> "SampleSet":
        samples = tuple(samples)
        return cls(
            problem_id=problem_id,
            n=len(samples),
            c=sum(1 for s in samples if s.correct),
            per_sample=samples,
        )


def coverage(sets: Sequence[SampleSet]) -> float:
    """Fraction of problems with at least one correct sample; equals the mean
    of pass@k at k=n."""
    if not sets:
        raise EmptyInput("coverage needs at least one problem")
    return sum(1 for s in sets if s.c >= 1) / len(sets)


def agreement_ratio(
    sets: Sequence[SampleSet],
    intended: Mapping[tuple[str, int], AlgorithmCategory],
) -> float:
    """Among correct samples, the fraction whose back-translated algorithm
    matches the intended category keyed by (problem_id, sample index)."""
    correct = 0
    matching = 0
    for sample_set in sets:
        for index, sample in enumerate(sample_set.per_sample):
            if not sample.correct:
                continue
            if sample.back_translated is None:
                raise MissingBackTranslation((sample_set.problem_id, index))
            key = (sample_set.problem_id, index)
            if key not in intended:
                raise MissingBackTranslation(key)
            correct += 1
            if sample.back_translated is intended[key]:
                matching += 1
    if correct == 0:
        raise NoCorrectSamples("agreement ratio is undefined with zero correct samples")
    return matching / correct


# ---------------------------------------------------------------------------
# Golden algorithm and error decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GoldenVote:
    category: AlgorithmCategory | None
    tied: bool
    counts: tuple[tuple[AlgorithmCategory, int], ...]


def golden_algorithm(
    problem_id: str,
    correct_sample_categories: Sequence[AlgorithmCategory],
) -> GoldenVote:
    """Majority vote over back-translations of every correct solution from
    all prompt forms. Ties break by the canonical category order and are
    flagged so reports can mark them."""
    if not correct_sample_categories:
        return GoldenVote(category=None, tied=False, counts=())
    tally = Counter(correct_sample_categories)
    best = max(tally.values())
    leaders = [c for c in CANONICAL_ORDER if tally.get(c) == best]
    counts = tuple((c, tally[c]) for c in CANONICAL_ORDER if c in tally)
    return GoldenVote(category=leaders[0], tied=len(leaders) > 1, counts=counts)


class Classification(Enum):
    CORRECT_SOLUTION = "CorrectSolution"
    IMPLEMENTATION_ERROR = "ImplementationError"
    WRONG_ALGORITHM = "WrongAlgorithm"


@dataclass(frozen=True)
class DecompositionOutcome:
    counts: Mapping[Classification, int]
    golden_algorithm: AlgorithmCategory | None
    excluded_trivial: bool


def _classify(samples: Sequence[SampleOutcome], golden: AlgorithmCategory) -> dict[Classification, int]:
    counts = {c: 0 for c in Classification}
    for sample in samples:
        if sample.correct:
            counts[Classification.CORRECT_SOLUTION] += 1
        else:
            if sample.back_translated is None:
                raise MissingBackTranslation(sample)
            if sample.back_translated is golden:
                counts[Classification.IMPLEMENTATION_ERROR] += 1
            else:
                counts[Classification.WRONG_ALGORITHM] += 1
    return counts


def decompose(
    original: Sequence[SampleOutcome],
    narrative: Sequence[SampleOutcome],
    golden: AlgorithmCategory,
) -> tuple[DecompositionOutcome, DecompositionOutcome]:
    """Classify each condition's samples against the golden algorithm.

    Trivial problems (both conditions all-correct, or both all-incorrect)
    are flagged excluded_trivial; callers must omit them from aggregates.
    """
    if golden is None:
        raise DomainError("decompose requires a golden algorithm")

    def all_correct(samples):
        return bool(samples) and all(s.correct for s in samples)

    def all_incorrect(samples):
        return bool(samples) and not any(s.correct for s in samples)

    trivial = (all_correct(original) and all_correct(narrative)) or (
        all_incorrect(original) and all_incorrect(narrative)
    )
    outcomes = []
    for samples in (original, narrative):
        outcomes.append(
            DecompositionOutcome(
                counts=_classify(samples, golden),
                golden_algorithm=golden,
                excluded_trivial=trivial,
            )
        )
    return outcomes[0], outcomes[1]


# ---------------------------------------------------------------------------
# One-sided Mann-Whitney U test
# ---------------------------------------------------------------------------

# Below this per-group size the exact conditional distribution is enumerated;
# at or above it the normal approximation is used.
EXACT_MIN_GROUP = 8


@dataclass(frozen=True)
class MannWhitneyResult:
    u: float
    p: float
    method: str  # "exact" | "normal"


def _midranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mid = (i + j) / 2 + 1  # ranks are 1-based
        for position in order[i : j + 1]:
            ranks[position] = mid
        i = j + 1
    return ranks


def _u_statistic(a_ranks: Sequence[float], n_a: int, n_b: int) -> float:
    return sum(a_ranks) - n_a * (n_a + 1) / 2


def mann_whitney_exact_p(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Exact one-sided p = P(U >= u_obs) by enumerating every assignment of
    the pooled midranks to group a. Conditional on the observed tie pattern."""
    n_a, n_b = len(a), len(b)
    ranks = _midranks(list(a) + list(b))
    u_observed = _u_statistic(ranks[:n_a], n_a, n_b)
    total = 0
    at_least = 0
    offset = n_a * (n_a + 1) / 2
    for subset in combinations(range(n_a + n_b), n_a):
        total += 1
        u = sum(ranks[i] for i in subset) - offset
        # Midranks are multiples of 1/2; compare with a hair of slack so
        # float accumulation cannot flip an exact tie.
        if u >= u_observed - 1e-9:
            at_least += 1
    return u_observed, at_least / total


def mann_whitney_normal_p(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """One-sided normal approximation with tie-corrected variance and a 0.5
    continuity correction."""
    n_a, n_b = len(a), len(b)
    total = n_a + n_b
    ranks = _midranks(list(a) + list(b))
    u_observed = _u_statistic(ranks[:n_a], n_a, n_b)
    tie_sum = sum(t**3 - t for t in Counter(ranks).values())
    variance = (n_a * n_b / 12) * ((total + 1) - tie_sum / (total * (total - 1)))
    if variance == 0:
        # Every pooled value identical: U is degenerate at its mean.
        return u_observed, 1.0
    mean = n_a * n_b / 2
    z = (u_observed - mean - 0.5) / math.sqrt(variance)
    return u_observed, min(1.0, 0.5 * math.erfc(z / math.sqrt(2)))


def mann_whitney_u_one_sided(a: Sequence[float], b: Sequence[float]) -> MannWhitneyResult:
    """Test H1: values in `a` tend to be larger than values in `b`."""
    if not a or not b:
        raise EmptyInput("both samples must be non-empty")
    if min(len(a), len(b)) >= EXACT_MIN_GROUP:
        u, p = mann_whitney_normal_p(a, b)
        return MannWhitneyResult(u=u, p=p, method="normal")
    u, p = mann_whitney_exact_p(a, b)
    return MannWhitneyResult(u=u, p=p, method="exact")
