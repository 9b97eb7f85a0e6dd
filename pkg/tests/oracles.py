"""Independent brute-force oracles used by the tests.

These deliberately take a different route than the library: pass@k by
exhaustive subset enumeration, and the rank test via pairwise win counting
(U = #{a_i > b_j} + 0.5 #{a_i == b_j}) enumerated over every assignment of
pooled values to the first group. Keep them dumb.
"""
from __future__ import annotations

from itertools import combinations


def passk_by_enumeration(n: int, c: int, k: int) -> float:
    """Fraction of the C(n, k) subsets containing at least one correct sample."""
    flags = [True] * c + [False] * (n - c)
    total = 0
    hits = 0
    for subset in combinations(range(n), k):
        total += 1
        if any(flags[i] for i in subset):
            hits += 1
    return hits / total


def pairwise_u(a, b) -> float:
    u = 0.0
    for x in a:
        for y in b:
            if x > y:
                u += 1.0
            elif x == y:
                u += 0.5
    return u


def mwu_exact_by_enumeration(a, b) -> tuple[float, float]:
    """One-sided exact p = P(U >= observed) over all pooled-value splits."""
    pooled = list(a) + list(b)
    n_a = len(a)
    observed = pairwise_u(a, b)
    total = 0
    at_least = 0
    for chosen in combinations(range(len(pooled)), n_a):
        total += 1
        chosen_set = set(chosen)
        group_a = [pooled[i] for i in chosen]
        group_b = [pooled[i] for i in range(len(pooled)) if i not in chosen_set]
        if pairwise_u(group_a, group_b) >= observed:
            at_least += 1
    return observed, at_least / total
