"""Sandboxed execution of candidate programs.

Each test case runs in a fresh child process with a wall-clock timeout, an
address-space cap, a scratch working directory, and a near-empty environment
(only PYTHONHASHSEED/PYTHONUTF8 are set, for determinism and encoding; no
variables are inherited). Network access is not separately blocked — run the
harness inside a container when candidates are untrusted.

Output comparison strips trailing whitespace per line and trailing blank
lines, matching common judge behaviour; --exact-match disables this.
"""
from __future__ import annotations

import ast
import os
import re
import shutil
import signal
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from narbench.dataset import IOMode, Problem, IOCase
from narbench.prompts import PromptStrategy


class SandboxError(Exception):
    pass


class InterpreterMissing(SandboxError):
    pass


class SandboxSetupFailure(SandboxError):
    pass


class CaseVerdict(Enum):
    PASS = "Pass"
    WRONG_OUTPUT = "WrongOutput"
    RUNTIME_ERROR = "RuntimeError"
    TIMEOUT = "Timeout"
    MEMORY_EXCEEDED = "MemoryExceeded"


@dataclass(frozen=True)
class CandidateSolution:
    problem_id: str
    strategy: PromptStrategy
    sample_index: int
    source_code: str
    language_tag: str = "python"
    extraction_ok: bool = True


@dataclass(frozen=True)
class ExecutionVerdict:
    per_test: tuple[CaseVerdict, ...]
    overall_correct: bool
    wall_ms_per_test: tuple[int, ...]

    @classmethod
    def from_tests(cls, per_test: Sequence[CaseVerdict], wall_ms: Sequence[int]) -> "ExecutionVerdict":
        per_test = tuple(per_test)
        return cls(
            per_test=per_test,
            overall_correct=bool(per_test) and all(v is CaseVerdict.PASS for v in per_test),
            wall_ms_per_test=tuple(wall_ms),
        )


@dataclass(frozen=True)
class ExecutionLimits:
    time_ms: int = 10_000
    memory_mb: int = 512

    def __post_init__(self):
        if self.time_ms <= 0 or self.memory_mb <= 0:
            raise ValueError("limits must be positive")


_FENCE_RE = re.compile(r"```([^\n`]*)\n(.*?)```", re.DOTALL)
_PY_TAGS = {"python", "python3", "py"}


def extract_code(model_output: str, language_tag: str = "python") -> tuple[str, bool]:
    """Pull the final fenced code block out of a model response.

    Prefers the last block tagged for the target language (models often emit
    a plan block first and the real program last), falling back to the last
    block of any tag. No block at all means extraction failed.
    """
    blocks = _FENCE_RE.findall(model_output)
    if not blocks:
        return "", False
    aliases = _PY_TAGS if language_tag.lower() in _PY_TAGS else {language_tag.lower()}
    tagged = [body for tag, body in blocks if tag.strip().lower() in aliases]
    body = tagged[-1] if tagged else blocks[-1][1]
    return body.rstrip("\n"), True


def normalize_output(text: str) -> str:
    lines = [line.rstrip() for line in text.split("\n")]
    while lines and lines[-1] == "":
        lines.pop()
    return "\n".join(lines)


_FUNCTION_NAME_RE = re.compile(r"def\s+(\w+)\s*\(")

# Driver appended to function-completion candidates: reads the argument
# literal from stdin; the harness compares the printed repr of the result.
_FUNCTION_DRIVER = """

if __name__ == '__main__':
    import ast as _ast
    import sys as _sys
    _raw = _sys.stdin.read()
    try:
        _args = _ast.literal_eval(_raw.strip())
    except (ValueError, SyntaxError):
        _args = _raw
    if not isinstance(_args, tuple):
        _args = (_args,)
    print(repr({name}(*_args)))
"""


def _canonical_expected(expected: str, io_mode: IOMode) -> str:
    if io_mode is IOMode.FUNCTION_COMPLETION:
        try:
            return repr(ast.literal_eval(expected.strip()))
        except (ValueError, SyntaxError):
            return expected.strip()
    return expected


def _set_child_limits(memory_bytes: int):
    import resource

    resource.setrlimit(resource.RLIMIT_AS, (memory_bytes, memory_bytes))
    resource.setrlimit(resource.RLIMIT_CORE, (0, 0))


class Sandbox:
    """Executes candidates; one instance may serve many run_all calls, but
    callers must not overlap run_all calls on the same instance."""

    def __init__(self, limits: ExecutionLimits | None = None, *, exact_match: bool = False,
                 interpreter: str | None = None):
        self.limits = limits or ExecutionLimits()
        self.exact_match = exact_match
        self.interpreter = interpreter or sys.executable
        if shutil.which(self.interpreter) is None and not os.path.exists(self.interpreter):
            raise InterpreterMissing(self.interpreter)

    # -- single candidate ---------------------------------------------------

    def run_candidate(self, candidate: CandidateSolution, problem: Problem) -> ExecutionVerdict:
        tests = problem.hidden_tests
        if not tests:
            raise SandboxSetupFailure(f"problem {problem.id} has no hidden tests")
        if not candidate.extraction_ok or not candidate.source_code.strip():
            # Nothing runnable was extracted; the sample still counts, as a
            # failure, without spawning any process.
            return ExecutionVerdict.from_tests(
                [CaseVerdict.RUNTIME_ERROR] * len(tests), [0] * len(tests)
            )
        program = self._assemble_program(candidate, problem)
        per_test = []
        wall_ms = []
        for case in tests:
            verdict, elapsed = self._run_one(program, case, problem.io_mode)
            per_test.append(verdict)
            wall_ms.append(elapsed)
        return ExecutionVerdict.from_tests(per_test, wall_ms)

    def _assemble_program(self, candidate: CandidateSolution, problem: Problem) -> str:
        if problem.io_mode is IOMode.STDIN_STDOUT:
            return candidate.source_code
        match = _FUNCTION_NAME_RE.search(problem.function_signature or "")
        if not match:
            raise SandboxSetupFailure(
                f"problem {problem.id}: cannot find function name in signature"
            )
        return candidate.source_code + _FUNCTION_DRIVER.format(name=match.group(1))

    def _run_one(self, program: str, case: IOCase, io_mode: IOMode) -> tuple[CaseVerdict, int]:
        timeout_s = self.limits.time_ms / 1000
        memory_bytes = self.limits.memory_mb * 1024 * 1024
        with tempfile.TemporaryDirectory(prefix="narbench-exec-") as workdir:
            program_path = os.path.join(workdir, "candidate.py")
            with open(program_path, "w", encoding="utf-8") as handle:
                handle.write(program)
            started = time.monotonic()
            try:
                proc = subprocess.Popen(
                    [self.interpreter, "-B", program_path],
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.PIPE,
                    cwd=workdir,
                    env={"PYTHONHASHSEED": "0", "PYTHONUTF8": "1"},
                    start_new_session=True,
                    preexec_fn=lambda: _set_child_limits(memory_bytes),
                )
            except OSError as exc:
                raise SandboxSetupFailure(str(exc)) from exc
            try:
                stdout, stderr = proc.communicate(case.input.encode(), timeout=timeout_s)
            except subprocess.TimeoutExpired:
                self._kill_tree(proc)
                return CaseVerdict.TIMEOUT, int((time.monotonic() - started) * 1000)
            elapsed = int((time.monotonic() - started) * 1000)
        if proc.returncode != 0:
            if b"MemoryError" in stderr:
                return CaseVerdict.MEMORY_EXCEEDED, elapsed
            return CaseVerdict.RUNTIME_ERROR, elapsed
        actual = stdout.decode("utf-8", errors="replace")
        expected = _canonical_expected(case.output, io_mode)
        if self.exact_match:
            matched = actual == expected
        else:
            matched = normalize_output(actual) == normalize_output(expected)
        return (CaseVerdict.PASS if matched else CaseVerdict.WRONG_OUTPUT), elapsed

    @staticmethod
    def _kill_tree(proc: subprocess.Popen):
        # The child leads its own session; kill the whole group so helpers
        # spawned by the candidate cannot outlive the verdict.
        try:
            os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            pass
        try:
            proc.communicate(timeout=5)
        except (subprocess.TimeoutExpired, ValueError):
            proc.kill()
            proc.wait()

    # -- batches ------------------------------------------------------------

    def run_all(
        self,
        candidates: Sequence[CandidateSolution],
        problems: Mapping[str, Problem],
        parallelism: int = 1,
    ) -> list[ExecutionVerdict]:
        """Positionally aligned verdicts with at most `parallelism` children
        running at once. Verdicts for deterministic candidates do not depend
        on scheduling."""
        if parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        missing = {c.problem_id for c in candidates} - set(problems)
        if missing:
            raise SandboxSetupFailure(f"candidates reference unknown problems: {sorted(missing)}")
        if not candidates:
            return []
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(
                pool.map(lambda c: self.run_candidate(c, problems[c.problem_id]), candidates)
            )
