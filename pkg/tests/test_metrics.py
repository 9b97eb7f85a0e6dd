from __future__ import annotations


import random


import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from narbench.categories import AlgorithmCategory
from narbench.metrics import (
    Classification,
    DomainError,
    EmptyInput,
    MissingBackTranslation,
    NoCorrectSamples,
    SampleOutcome,
    SampleSet,
    agreement_ratio,
    coverage,
    decompose,
    golden_algorithm,
    mann_whitney_exact_p,
    mann_whitney_normal_p,
    mann_whitney_u_one_sided,
    pass_at_k,
    pass_at_k_capped,
)
from oracles import mwu_exact_by_enumeration, passk_by_enumeration

DP = AlgorithmCategory.DYNAMIC_PROGRAMMING
GREEDY = AlgorithmCategory.GREEDY_ALGORITHMS
GRAPH = AlgorithmCategory.GRAPH_ALGORITHMS


# ---------------------------------------------------------------------------
# pass@k
# ---------------------------------------------------------------------------

class TestPassAtK:
    def test_no_correct_samples(self):
        assert pass_at_k(10, 0, 10) == 0.0

    def test_all_correct(self):
        assert pass_at_k(10, 10, 1) == 1.0

    def test_known_point(self):
        # 126 of the 252 five-subsets of ten samples contain the one correct.
        assert pass_at_k(10, 1, 5) == pytest.approx(0.5, abs=1e-12)

    def test_matches_enumeration_exhaustively(self):
        for n in range(1, 13):
            for c in range(n + 1):
                for k in range(1, n + 1):
                    expected = passk_by_enumeration(n, c, k)
                    assert pass_at_k(n, c, k) == pytest.approx(expected, abs=1e-12), (n, c, k)

    @pytest.mark.parametrize("n,c,k", [(5, 6, 1), (5, -1, 1), (5, 2, 0), (5, 2, 6)])
    def test_domain_errors(self, n, c, k):
        with pytest.raises(DomainError):
            pass_at_k(n, c, k)

    @given(st.integers(1, 40), st.data())
    def test_monotone_in_k_and_c(self, n, data):
        c = data.draw(st.integers(0, n))
        k = data.draw(st.integers(1, n))
        value = pass_at_k(n, c, k)
        if k < n:
            assert pass_at_k(n, c, k + 1) >= value - 1e-15
        if c < n:
            assert pass_at_k(n, c + 1, k) >= value - 1e-15

    @given(st.integers(1, 40), st.data())
    def test_pass_at_n_is_coverage_indicator(self, n, data):
        c = data.draw(st.integers(0, n))
        assert (pass_at_k(n, c, n) == 1.0) == (c >= 1)

    def test_capped_variant(self):
        assert pass_at_k_capped(4, 1, 10) == pass_at_k(4, 1, 4)


# ---------------------------------------------------------------------------
# coverage / agreement
# ---------------------------------------------------------------------------

def _set(pid, flags, cats=None):
    cats = cats or [None] * len(flags)
    return SampleSet.from_samples(
        pid, [SampleOutcome("RS", f, c) for f, c in zip(flags, cats)]
    )


class TestCoverage:
    def test_all_zero(self):
        assert coverage([_set("a", [False, False])]) == 0.0

    def test_direct_count(self):
        sets = [_set("a", [False] * 5), _set("b", [True] + [False] * 4), _set("c", [True] * 5)]
        assert coverage(sets) == pytest.approx(2 / 3)

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            coverage([])

    def test_equals_mean_pass_at_n(self):
        rng = random.Random(7)
        sets = []
        for i in range(20):
            n = rng.randint(1, 10)
            flags = [rng.random() < 0.3 for _ in range(n)]
            sets.append(_set(f"p{i}", flags))
        mean_pass = sum(pass_at_k(s.n, s.c, s.n) for s in sets) / len(sets)
        assert coverage(sets) == pytest.approx(mean_pass, abs=1e-12)


class TestAgreement:
    def test_direct_ratio(self):
        sets = [
            _set("a", [True, True, False], [DP, DP, None]),
            _set("b", [True, True], [DP, GREEDY]),
        ]
        intended = {("a", 0): DP, ("a", 1): DP, ("b", 0): DP, ("b", 1): DP}
        assert agreement_ratio(sets, intended) == pytest.approx(3 / 4)

    def test_all_matching(self):
        sets = [_set("a", [True, True], [DP, DP])]
        assert agreement_ratio(sets, {("a", 0): DP, ("a", 1): DP}) == 1.0

    def test_zero_correct(self):
        with pytest.raises(NoCorrectSamples):
            agreement_ratio([_set("a", [False, False])], {})

    def test_missing_backtranslation(self):
        sets = [_set("a", [True], [None])]
        with pytest.raises(MissingBackTranslation):
            agreement_ratio(sets, {("a", 0): DP})

    def test_invariant_under_relabeling(self):
        flags, cats = [True, False, True], [DP, None, GREEDY]
        a = [_set("x", flags, cats)]
        b = [_set("y", flags, cats)]
        ia = {("x", 0): DP, ("x", 2): DP}
        ib = {("y", 0): DP, ("y", 2): DP}
        assert agreement_ratio(a, ia) == agreement_ratio(b, ib)


# ---------------------------------------------------------------------------
# golden algorithm / decomposition
# ---------------------------------------------------------------------------

class TestGolden:
    def test_strict_majority(self):
        vote = golden_algorithm("p", [DP, DP, GREEDY])
        assert vote.category is DP and not vote.tied

    def test_empty(self):
        vote = golden_algorithm("p", [])
        assert vote.category is None and not vote.tied

    def test_tie_breaks_canonically_and_is_flagged(self):
        # Dynamic Programming precedes Greedy in the canonical order.
        vote = golden_algorithm("p", [DP, GREEDY])
        assert vote.category is DP and vote.tied
        vote = golden_algorithm("p", [GREEDY, GRAPH])
        assert vote.category is GRAPH and vote.tied


def _samples(flags, cats):
    return [SampleOutcome("s", f, c) for f, c in zip(flags, cats)]


class TestDecompose:
    def test_both_all_correct_is_trivial(self):
        orig = _samples([True, True], [DP, DP])
        narr = _samples([True], [DP])
        a, b = decompose(orig, narr, DP)
        assert a.excluded_trivial and b.excluded_trivial

    def test_both_all_incorrect_is_trivial(self):
        orig = _samples([False], [DP])
        narr = _samples([False, False], [GREEDY, DP])
        a, b = decompose(orig, narr, DP)
        assert a.excluded_trivial and b.excluded_trivial

    def test_mixed_is_not_trivial(self):
        orig = _samples([False, False], [DP, GREEDY])
        narr = _samples([True, False], [DP, GREEDY])
        a, b = decompose(orig, narr, DP)
        assert not a.excluded_trivial and not b.excluded_trivial

    def test_classification_by_golden(self):
        orig = _samples([True, False, False], [None, DP, GREEDY])
        narr = _samples([True], [DP])
        a, _ = decompose(orig, narr, DP)
        assert a.counts[Classification.CORRECT_SOLUTION] == 1
        assert a.counts[Classification.IMPLEMENTATION_ERROR] == 1
        assert a.counts[Classification.WRONG_ALGORITHM] == 1

    def test_counts_are_exhaustive(self):
        rng = random.Random(3)
        for _ in range(50):
            cats = list(AlgorithmCategory)
            orig = _samples(
                [rng.random() < 0.5 for _ in range(6)], [rng.choice(cats) for _ in range(6)]
            )
            narr = _samples(
                [rng.random() < 0.5 for _ in range(6)], [rng.choice(cats) for _ in range(6)]
            )
            a, b = decompose(orig, narr, DP)
            assert sum(a.counts.values()) == 6
            assert sum(b.counts.values()) == 6

    def test_missing_backtranslation_on_incorrect_sample(self):
        orig = _samples([False], [None])
        narr = _samples([True], [DP])
        with pytest.raises(MissingBackTranslation):
            decompose(orig, narr, DP)


# ---------------------------------------------------------------------------
# Mann-Whitney U
# ---------------------------------------------------------------------------

class TestMannWhitney:
    def test_maximal_separation(self):
        result = mann_whitney_u_one_sided([4, 5, 6], [1, 2, 3])
        assert result.u == 9.0
        assert result.p == pytest.approx(1 / 20)  # 1 / C(6,3)
        assert result.method == "exact"

    def test_identical_multisets_not_significant(self):
        result = mann_whitney_u_one_sided([1, 2, 3], [1, 2, 3])
        assert result.p >= 0.5

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            mann_whitney_u_one_sided([], [1.0])

    def test_exact_matches_enumeration_on_small_pairs(self):
        rng = random.Random(11)
        for n_a in range(1, 7):
            for n_b in range(1, 13 - n_a):
                if n_a + n_b > 12:
                    continue
                for _ in range(3):
                    # Small value range forces plenty of ties.
                    a = [rng.randint(0, 4) for _ in range(n_a)]
                    b = [rng.randint(0, 4) for _ in range(n_b)]
                    u_oracle, p_oracle = mwu_exact_by_enumeration(a, b)
                    u, p = mann_whitney_exact_p(a, b)
                    assert u == u_oracle, (a, b)
                    assert p == p_oracle, (a, b)

    def test_normal_close_to_exact_at_nine_vs_nine(self):
        rng = random.Random(23)
        for _ in range(5):
            a = [rng.randint(0, 6) for _ in range(9)]
            b = [rng.randint(0, 6) for _ in range(9)]
            _, exact = mann_whitney_exact_p(a, b)
            _, approx = mann_whitney_normal_p(a, b)
            assert abs(exact - approx) < 0.02, (a, b, exact, approx)

    def test_exact_distribution_sums_to_one(self):
        # The least possible U gives P(U >= min) = 1: total mass is 1.
        a, b = [1, 1, 2], [3, 4, 4, 5]
        _, p = mann_whitney_exact_p(a, b)
        worst = min(a) - 1
        _, p_min = mann_whitney_exact_p([worst] * len(a), b)
        assert p_min == 1.0
        assert 0.0 < p <= 1.0

    def test_dispatch_threshold(self):
        small = mann_whitney_u_one_sided([1, 2, 3], [4, 5, 6, 7, 8, 9, 10, 11])
        assert small.method == "exact"
        big = mann_whitney_u_one_sided(list(range(8)), list(range(8)))
        assert big.method == "normal"

    @given(
        st.lists(st.integers(0, 5), min_size=1, max_size=6),
        st.lists(st.integers(0, 5), min_size=1, max_size=6),
    )
    @settings(max_examples=60, deadline=None)
    def test_exact_p_in_unit_interval(self, a, b):
        _, p = mann_whitney_exact_p(a, b)
        assert 0.0 < p <= 1.0
