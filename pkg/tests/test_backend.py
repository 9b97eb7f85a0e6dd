from __future__ import annotations

import json
import threading

import pytest

from narbench.backend import (
    AuthMissing,
    BackendError,
    GenerationRequest,
    HTTPBackend,
    MockBackend,
    MockScriptExhausted,
    ProviderConfig,
    ProviderError,
    RetriesExhausted,
    RoleTag,
    prompt_fingerprint,
)


def req(prompt="hello", role=RoleTag.SOLVER, **kw):
    return GenerationRequest(prompt=prompt, role_tag=role, **kw)


class TestGenerationRequest:
    def test_role_temperature_defaults(self):
        assert req(role=RoleTag.NARRATIVE_GEN).temperature == 1.0
        assert req(role=RoleTag.SOLVER).temperature == 0.2

    def test_override(self):
        assert req(temperature=0.7).temperature == 0.7

    def test_bounds(self):
        with pytest.raises(ValueError):
            req(temperature=2.5)
        with pytest.raises(ValueError):
            req(max_tokens=0)


class TestMockBackend:
    def test_scripted_echo(self):
        backend = MockBackend(by_role={"Solver": ["X"]})
        response = backend.generate(req())
        assert response.text == "X"
        assert response.backend_id == "mock"

    def test_per_call_sequence(self):
        backend = MockBackend(by_role={"Solver": ["A", "B", "A"]})
        texts = [backend.generate(req()).text for _ in range(3)]
        assert texts == ["A", "B", "A"]

    def test_fingerprint_override(self):
        backend = MockBackend(
            by_role={"Solver": ["seq"]},
            by_fingerprint={prompt_fingerprint("special"): "pinned"},
        )
        assert backend.generate(req("special")).text == "pinned"
        assert backend.generate(req("other")).text == "seq"

    def test_exhausted_script(self):
        backend = MockBackend(by_role={"Solver": []})
        with pytest.raises(MockScriptExhausted):
            backend.generate(req())

    def test_scripted_failure_entry(self):
        backend = MockBackend(by_role={"Solver": [{"error": {"status": 500, "body": "boom"}}]})
        with pytest.raises(ProviderError):
            backend.generate(req())

    def test_sink_called_before_return(self):
        events = []
        backend = MockBackend(by_role={"Solver": ["X"]}, sink=events.append)
        backend.generate(req(tag="k1"))
        assert events and events[0]["tag"] == "k1"
        assert events[0]["response"]["text"] == "X"

    def test_script_file_round_trip(self, tmp_path):
        script = {"by_role": {"Solver": ["from file"]}}
        path = tmp_path / "script.json"
        path.write_text(json.dumps(script))
        backend = MockBackend.from_script_file(path)
        assert backend.generate(req()).text == "from file"


class TestBatch:
    def test_empty(self):
        backend = MockBackend()
        assert backend.generate_batch([], max_in_flight=4) == []

    def test_positional_alignment(self):
        backend = MockBackend(by_role={"Solver": [f"r{i}" for i in range(10)]})
        responses = backend.generate_batch([req(f"p{i}") for i in range(10)], max_in_flight=1)
        assert [r.text for r in responses] == [f"r{i}" for i in range(10)]

    def test_sequential_when_max_in_flight_one(self):
        backend = MockBackend(by_role={"Solver": [f"r{i}" for i in range(10)]})
        backend.generate_batch([req(f"p{i}") for i in range(10)], max_in_flight=1)
        prompts = [entry["prompt"] for entry in backend.call_log]
        assert prompts == [f"p{i}" for i in range(10)]

    def test_failure_isolated_to_slot(self):
        entries: list = [f"r{i}" for i in range(10)]
        entries[4] = {"error": {"status": 500, "body": "bad slot"}}
        backend = MockBackend(by_role={"Solver": entries})
        responses = backend.generate_batch([req(f"p{i}") for i in range(10)], max_in_flight=1)
        assert sum(isinstance(r, BackendError) for r in responses) == 1
        assert isinstance(responses[4], ProviderError)
        assert all(not isinstance(r, BackendError) for i, r in enumerate(responses) if i != 4)

    def test_bad_max_in_flight(self):
        with pytest.raises(ValueError):
            MockBackend().generate_batch([req()], max_in_flight=0)


class FakeHTTP:
    """Stands in for requests.post; scripts status codes per call."""

    def __init__(self, plan):
        self.plan = list(plan)
        self.calls = 0
        self.lock = threading.Lock()

    def __call__(self, url, json=None, headers=None, timeout=None):
        with self.lock:
            status, payload = self.plan[min(self.calls, len(self.plan) - 1)]
            self.calls += 1
        return FakeResponse(status, payload)


class FakeResponse:
    def __init__(self, status, payload):
        self.status_code = status
        self._payload = payload
        self.text = json.dumps(payload)

    def json(self):
        return self._payload


def provider(tmp_env, **kw):
    return ProviderConfig(
        backend_id="fake",
        base_url="https://example.invalid/v1",
        model_name="m",
        credential_env_var="NARBENCH_TEST_KEY",
        requests_per_minute=100_000,
        retry_base_s=0.0,
        **kw,
    )


OK_PAYLOAD = {
    "choices": [{"message": {"content": "hi"}, "finish_reason": "stop"}],
    "usage": {"completion_tokens": 1},
}


class TestHTTPBackend:
    def test_auth_missing_before_any_network_call(self, monkeypatch):
        monkeypatch.delenv("NARBENCH_TEST_KEY", raising=False)
        fake = FakeHTTP([(200, OK_PAYLOAD)])
        backend = HTTPBackend(provider(None), post=fake)
        with pytest.raises(AuthMissing):
            backend.generate(req())
        assert fake.calls == 0

    def test_success(self, monkeypatch):
        monkeypatch.setenv("NARBENCH_TEST_KEY", "k")
        backend = HTTPBackend(provider(None), post=FakeHTTP([(200, OK_PAYLOAD)]))
        response = backend.generate(req())
        assert response.text == "hi"
        assert response.token_count == 1
        assert not response.truncated

    def test_transient_retried_then_succeeds(self, monkeypatch):
        monkeypatch.setenv("NARBENCH_TEST_KEY", "k")
        fake = FakeHTTP([(429, {}), (500, {}), (200, OK_PAYLOAD)])
        backend = HTTPBackend(provider(None), post=fake)
        assert backend.generate(req()).text == "hi"
        assert fake.calls == 3

    def test_non_transient_never_retried(self, monkeypatch):
        monkeypatch.setenv("NARBENCH_TEST_KEY", "k")
        fake = FakeHTTP([(400, {"error": "bad request"})])
        backend = HTTPBackend(provider(None), post=fake)
        with pytest.raises(ProviderError) as exc:
            backend.generate(req())
        assert exc.value.status == 400
        assert fake.calls == 1

    def test_retries_exhausted(self, monkeypatch):
        monkeypatch.setenv("NARBENCH_TEST_KEY", "k")
        fake = FakeHTTP([(503, {})])
        backend = HTTPBackend(provider(None, max_retries=2), post=fake)
        with pytest.raises(RetriesExhausted):
            backend.generate(req())
        assert fake.calls == 3

    def test_truncation_flag(self, monkeypatch):
        monkeypatch.setenv("NARBENCH_TEST_KEY", "k")
        payload = {
            "choices": [{"message": {"content": "cut"}, "finish_reason": "length"}],
            "usage": {"completion_tokens": 4096},
        }
        backend = HTTPBackend(provider(None), post=FakeHTTP([(200, payload)]))
        assert backend.generate(req()).truncated


class TestTokenBucket:
    def test_paces_to_requests_per_minute(self):
        import time

        from narbench.backend import _TokenBucket

        bucket = _TokenBucket(per_minute=600)  # one slot per 100 ms
        started = time.monotonic()
        for _ in range(3):
            bucket.acquire()
        assert time.monotonic() - started >= 0.18

    def test_generous_rate_does_not_block(self):
        import time

        from narbench.backend import _TokenBucket

        bucket = _TokenBucket(per_minute=6_000_000)
        started = time.monotonic()
        for _ in range(100):
            bucket.acquire()
        assert time.monotonic() - started < 0.5
