"""Append-only run records.

Everything a run produces — config snapshot, raw model I/O, parsed
narratives, verdicts, back-translations — is appended as one JSON line per
event under output_dir/record.jsonl. Derived metrics are recomputable from
these raw events alone, which is what `narbench replay` does. Events carry a
stable `key` used for resume: a stage is skipped when its key is already
present.
"""
from __future__ import annotations

import errno
import json
import os
from pathlib import Path
from typing import Iterator

SCHEMA_VERSION = 1


class RecordError(Exception):
    pass


class OutputDirLocked(RecordError):
    pass


class RunLock:
    """One orchestrator per output_dir, enforced with an O_EXCL lock file."""

    def __init__(self, output_dir: str | Path):
        self.path = Path(output_dir) / ".lock"
        self._fd: int | None = None

    def __enter__(self) -> "RunLock":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except OSError as exc:
            if exc.errno == errno.EEXIST:
                raise OutputDirLocked(
                    f"{self.path} exists; another run owns this output_dir "
                    "(delete the lock file if that run is dead)"
                ) from None
            raise
        os.write(self._fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc_info):
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None
        self.path.unlink(missing_ok=True)


class RunRecord:
    """Append-only event log with a key index for resumption."""

    def __init__(self, output_dir: str | Path):
        self.output_dir = Path(output_dir)
        self.path = self.output_dir / "record.jsonl"
        self._index: dict[str, dict] = {}
        self._events: list[dict] = []
        if self.path.exists():
            with self.path.open(encoding="utf-8") as handle:
                for line in handle:
                    if line.strip():
                        self._remember(json.loads(line))

    @classmethod
    def open(cls, output_dir: str | Path) -> "RunRecord":
        Path(output_dir).mkdir(parents=True, exist_ok=True)
        return cls(output_dir)

    def _remember(self, event: dict):
        self._events.append(event)
        key = event.get("key")
        if key:
            self._index[key] = event

    def append(self, kind: str, key: str | None = None, **fields) -> dict:
        event = {"kind": kind, "schema_version": SCHEMA_VERSION, **fields}
        if key is not None:
            event["key"] = key
        with self.path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(event, sort_keys=True, ensure_ascii=False) + "\n")
        self._remember(event)
        return event

    def has(self, key: str) -> bool:
        return key in self._index

    def get(self, key: str) -> dict | None:
        return self._index.get(key)

    def events(self, kind: str | None = None) -> Iterator[dict]:
        for event in self._events:
            if kind is None or event.get("kind") == kind:
                yield event

    def __len__(self) -> int:
        return len(self._events)
