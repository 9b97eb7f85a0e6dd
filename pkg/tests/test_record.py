from __future__ import annotations

import json

import pytest

from narbench.record import OutputDirLocked, RunLock, RunRecord


class TestRunRecord:
    def test_append_and_reload(self, tmp_path):
        record = RunRecord.open(tmp_path)
        record.append("config", key="config", config={"a": 1})
        record.append("note", message="hello")
        reopened = RunRecord.open(tmp_path)
        assert len(reopened) == 2
        assert reopened.get("config")["config"] == {"a": 1}

    def test_file_is_append_only_jsonl(self, tmp_path):
        record = RunRecord.open(tmp_path)
        record.append("a", key="k1", x=1)
        first = (tmp_path / "record.jsonl").read_text()
        record.append("b", key="k2", x=2)
        second = (tmp_path / "record.jsonl").read_text()
        assert second.startswith(first)
        assert [json.loads(line)["kind"] for line in second.strip().splitlines()] == ["a", "b"]

    def test_has_and_kind_filter(self, tmp_path):
        record = RunRecord.open(tmp_path)
        record.append("verdict", key="v:1", ok=True)
        assert record.has("v:1")
        assert not record.has("v:2")
        assert [e["key"] for e in record.events("verdict")] == ["v:1"]

    def test_events_keep_order(self, tmp_path):
        record = RunRecord.open(tmp_path)
        for i in range(5):
            record.append("e", key=f"k{i}", i=i)
        assert [e["i"] for e in record.events()] == list(range(5))


class TestRunLock:
    def test_exclusive(self, tmp_path):
        with RunLock(tmp_path):
            with pytest.raises(OutputDirLocked):
                with RunLock(tmp_path):
                    pass

    def test_released_on_exit(self, tmp_path):
        with RunLock(tmp_path):
            pass
        with RunLock(tmp_path):
            pass
