"""Client for the syntax-tree probe subprocess.

The probe is a separate executable speaking a one-line JSON protocol: full
source on stdin, one record {protocol_version, parse_ok, function_count,
has_helper, max_depth} on stdout, exit 0 even for unparseable source. A
crash, timeout, or malformed record becomes a flagged ProbeFailure row; the
harness never crashes because a probe did.
"""
from __future__ import annotations

import json
import os
import shlex
import shutil
import subprocess
from dataclasses import dataclass

PROBE_PROTOCOL_VERSION = 1
PROBE_ENV_VAR = "NARBENCH_ASTPROBE"


class ProbeRecordError(Exception):
    pass


@dataclass(frozen=True)
class StructuralMetrics:
    parse_ok: bool
    function_count: int | None = None
    has_helper: bool | None = None
    max_depth: int | None = None
    protocol_version: int = PROBE_PROTOCOL_VERSION

    def __post_init__(self):
        if self.parse_ok:
            if self.function_count is None or self.has_helper is None or self.max_depth is None:
                raise ProbeRecordError("parse_ok record is missing metric fields")
            if self.function_count < 0 or self.max_depth < 1:
                raise ProbeRecordError("metric fields out of range")
        elif not (self.function_count is None and self.has_helper is None and self.max_depth is None):
            raise ProbeRecordError("parse_ok=false record must omit metric fields")


@dataclass(frozen=True)
class ProbeFailure:
    reason: str


def parse_probe_record(line: str) -> StructuralMetrics:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProbeRecordError(f"probe record is not JSON: {exc.msg}") from None
    if not isinstance(raw, dict) or "parse_ok" not in raw:
        raise ProbeRecordError("probe record missing parse_ok")
    return StructuralMetrics(
        parse_ok=bool(raw["parse_ok"]),
        function_count=raw.get("function_count"),
        has_helper=raw.get("has_helper"),
        max_depth=raw.get("max_depth"),
        protocol_version=raw.get("protocol_version", PROBE_PROTOCOL_VERSION),
    )


def serialize_probe_record(metrics: StructuralMetrics) -> str:
    record: dict = {"protocol_version": metrics.protocol_version, "parse_ok": metrics.parse_ok}
    if metrics.parse_ok:
        record.update(
            function_count=metrics.function_count,
            has_helper=metrics.has_helper,
            max_depth=metrics.max_depth,
        )
    return json.dumps(record, sort_keys=True)


def default_probe_command() -> list[str] | None:
    """Locate a probe: $NARBENCH_ASTPROBE, then `astprobe` on PATH, then the
    in-repo build if present. None means the probe is unavailable."""
    override = os.environ.get(PROBE_ENV_VAR)
    if override:
        return shlex.split(override)
    on_path = shutil.which("astprobe")
    if on_path:
        return [on_path]
    here = os.path.dirname(os.path.abspath(__file__))
    for root in (os.getcwd(), os.path.normpath(os.path.join(here, "..", "..", ".."))):
        built = os.path.join(root, "astprobe", "dist", "cli.js")
        if os.path.exists(built):
            node = shutil.which("node")
            if node:
                return [node, built]
    return None


def run_probe(
    source: str,
    command: list[str],
    timeout_s: float = 30.0,
) -> StructuralMetrics | ProbeFailure:
    try:
        proc = subprocess.run(
            command,
            input=source.encode(),
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            timeout=timeout_s,
        )
    except subprocess.TimeoutExpired:
        return ProbeFailure(reason=f"probe timed out after {timeout_s}s")
    except OSError as exc:
        return ProbeFailure(reason=f"probe failed to start: {exc}")
    if proc.returncode != 0:
        return ProbeFailure(reason=f"probe exited {proc.returncode}")
    try:
        return parse_probe_record(proc.stdout.decode("utf-8", errors="replace").strip())
    except ProbeRecordError as exc:
        return ProbeFailure(reason=str(exc))
