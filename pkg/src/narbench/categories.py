"""The eight algorithm categories used by the narrative transformation.

The enum definition order is the canonical order of the transformation
guidelines; tie-breaks in majority voting use this order.
"""
from __future__ import annotations

import re
from enum import Enum


class AlgorithmCategory(Enum):
    GRAPH_ALGORITHMS = "Graph Algorithms"
    DYNAMIC_PROGRAMMING = "Dynamic Programming"
    GREEDY_ALGORITHMS = "Greedy Algorithms"
    SORTING_AND_SEARCHING = "Sorting and Searching"
    STRING_ALGORITHMS = "String Algorithms"
    DATA_STRUCTURES = "Data Structures"
    MATHEMATICS_AND_NUMBER_THEORY = "Mathematics and Number Theory"
    SIMULATION_AND_IMPLEMENTATION = "Simulation and Implementation"

    @property
    def label(self) -> str:
        return self.value


CANONICAL_ORDER: tuple[AlgorithmCategory, ...] = tuple(AlgorithmCategory)

_NORM = {re.sub(r"[^a-z0-9]", "", c.value.lower()): c for c in AlgorithmCategory}


def parse_category(text: str) -> AlgorithmCategory | None:
    """Match a category name, ignoring case, spacing and punctuation.

    Returns None when the text is not exactly one of the eight names.
    """
    return _NORM.get(re.sub(r"[^a-z0-9]", "", text.strip().lower()))
