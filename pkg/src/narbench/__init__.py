"""narbench: a deterministic harness for narrative-reformulation experiments
on execution-based code-generation benchmarks.

Pipeline: load problems -> build prompts (plain / chain-of-thought /
narrative reformulations and their ablations) -> sample a chat backend ->
execute candidates in a sandbox -> compute pass@k, coverage, agreement and
error-decomposition metrics. Every backend call and verdict is persisted to
an append-only run record so all derived numbers can be replayed exactly.
"""

__version__ = "0.1.0"
