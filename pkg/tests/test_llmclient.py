import re
import threading

import pytest
from hypothesis import given, settings, strategies as st

from mcqforge.llmclient import (
    AuthError,
    ChatExchange,
    ChatRequest,
    Exhausted,
    HttpBackend,
    MalformedResponse,
    MockBackend,
    MockFailure,
    NoRuleMatched,
    RateLimiter,
    SyntheticClock,
    TransientFailure,
    complete,
    script_mock,
)


def req(text: str = "hello") -> ChatRequest:
    return ChatRequest(messages=(("user", text),))


class TestChatRequest:
    def test_needs_messages(self):
        with pytest.raises(ValueError):
            ChatRequest(messages=())

    def test_last_message_must_be_user(self):
        with pytest.raises(ValueError):
            ChatRequest(messages=(("user", "a"), ("assistant", "b")))

    def test_bad_role(self):
        with pytest.raises(ValueError):
            ChatRequest(messages=(("tool", "a"),))

    def test_negative_temperature(self):
        with pytest.raises(ValueError):
            ChatRequest(messages=(("user", "a"),), temperature=-0.1)

    def test_system_then_user_ok(self):
        r = ChatRequest(messages=(("system", "persona"), ("user", "q")))
        assert r.joined_text() == "persona\nq"


class TestMockRules:
    def test_scripted_echo(self):
        backend = script_mock([("any", "Answer: (B)")], default=None)
        assert complete(backend, req("any prompt")).response_text == "Answer: (B)"

    def test_first_matching_rule_wins(self):
        backend = script_mock([
            ("prompt", "first"),
            ("any", "second"),
        ])
        assert complete(backend, req("any prompt")).response_text == "first"

    def test_default_when_nothing_matches(self):
        backend = script_mock([("nope", "x")], default="X")
        assert complete(backend, req("something else")).response_text == "X"

    def test_no_rule_no_default(self):
        backend = script_mock([("nope", "x")])
        with pytest.raises(NoRuleMatched):
            complete(backend, req("something else"))

    def test_needs_rule_or_default(self):
        with pytest.raises(ValueError):
            script_mock([])

    def test_regex_and_callable_matchers(self):
        backend = script_mock([
            (re.compile(r"\bq\d+\b"), "regex hit"),
            (lambda p: p.endswith("?"), "callable hit"),
        ], default="miss")
        assert complete(backend, req("about q17 today")).response_text == "regex hit"
        assert complete(backend, req("really?")).response_text == "callable hit"
        assert complete(backend, req("plain")).response_text == "miss"

    def test_sequence_consumed_last_sticks(self):
        backend = script_mock([("q", ["one", "two"])])
        outs = [complete(backend, req("q")).response_text for _ in range(4)]
        assert outs == ["one", "two", "two", "two"]

    def test_purity_for_plain_rules(self):
        backend = script_mock([("q", "same")])
        a = complete(backend, req("q")).response_text
        b = complete(backend, req("q")).response_text
        assert a == b == "same"

    def test_call_log_records_requests(self):
        backend = script_mock([], default="ok")
        complete(backend, req("one"))
        complete(backend, req("two"))
        assert backend.call_count == 2
        assert backend.calls[1].messages[-1][1] == "two"


class TestRetries:
    def test_fail_twice_then_succeed(self):
        backend = script_mock([
            ("q", [MockFailure("transient"), MockFailure("transient"), "fine"]),
        ])
        exchange = complete(backend, req("q"))
        assert exchange.response_text == "fine"
        assert exchange.attempt_count == 3

    def test_exhausted_after_limit(self):
        backend = script_mock([("q", MockFailure("transient"))])
        with pytest.raises(Exhausted) as err:
            complete(backend, req("q"))
        assert err.value.attempts == 3
        assert backend.call_count == 3

    def test_auth_never_retried(self):
        backend = script_mock([("q", MockFailure("auth"))])
        with pytest.raises(AuthError):
            complete(backend, req("q"))
        assert backend.call_count == 1

    def test_malformed_not_retried(self):
        backend = script_mock([("q", MockFailure("malformed"))])
        with pytest.raises(MalformedResponse):
            complete(backend, req("q"))
        assert backend.call_count == 1

    def test_backoff_advances_synthetic_clock(self):
        backend = script_mock([
            ("q", [MockFailure("transient"), "ok"]),
        ])
        exchange = complete(backend, req("q"))
        # one backoff sleep of 1s +-20% jitter
        assert 0.8 <= exchange.latency <= 1.2

    def test_latency_covers_scripted_delay(self):
        backend = script_mock([("q", "ok", 2.5)])
        assert complete(backend, req("q")).latency >= 2.5

    def test_latency_accumulates_across_retries(self):
        backend = script_mock([
            ("q", [MockFailure("transient"), MockFailure("transient"), "ok"], 1.0),
        ])
        exchange = complete(backend, req("q"))
        # 3 scripted delays plus two backoffs (1s, 2s) with +-20% jitter
        assert exchange.latency >= 3.0 + 3.0 * 0.8


class TestExchange:
    def test_invariants(self):
        with pytest.raises(ValueError):
            ChatExchange(req(), "x", latency=-1.0, attempt_count=1, backend_id="m")
        with pytest.raises(ValueError):
            ChatExchange(req(), "x", latency=0.0, attempt_count=0, backend_id="m")


class TestRateLimiter:
    def test_spacing_law(self):
        clock = SyntheticClock()
        limiter = RateLimiter(4.0, clock=clock)
        starts = [limiter.acquire() for _ in range(10)]
        for n, start in enumerate(starts):
            assert start - starts[0] >= n / 4.0 - 1e-9

    def test_thread_safety_slots_unique(self):
        clock = SyntheticClock()
        limiter = RateLimiter(50.0, clock=clock)
        starts = []
        lock = threading.Lock()

        def worker():
            s = limiter.acquire()
            with lock:
                starts.append(s)

        threads = [threading.Thread(target=worker) for _ in range(20)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        starts.sort()
        for a, b in zip(starts, starts[1:]):
            assert b - a >= 1 / 50.0 - 1e-9

    def test_rate_must_be_positive(self):
        with pytest.raises(ValueError):
            RateLimiter(0.0)


class FakeResponse:
    def __init__(self, status_code: int, body=None, bad_json: bool = False):
        self.status_code = status_code
        self._body = body
        self._bad = bad_json

    def json(self):
        if self._bad:
            raise ValueError("not json")
        return self._body


class FakeSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.posts = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.posts.append({"url": url, "json": json, "headers": headers})
        out = self.responses.pop(0)
        if isinstance(out, Exception):
            raise out
        return out


def http_backend(responses, monkeypatch, api_key_env=""):
    backend = HttpBackend(id="live", base_url="http://unit.test/v1",
                          model="m1", api_key_env=api_key_env)
    backend._session = FakeSession(responses)
    backend.clock = SyntheticClock()
    return backend


class TestHttpBackend:
    def ok(self, text="hi"):
        return FakeResponse(200, {"choices": [{"message": {"content": text}}]})

    def test_success_parses_content(self, monkeypatch):
        backend = http_backend([self.ok("hello back")], monkeypatch)
        exchange = complete(backend, req("hi"))
        assert exchange.response_text == "hello back"
        body = backend._session.posts[0]["json"]
        assert body["model"] == "m1"
        assert body["messages"][-1] == {"role": "user", "content": "hi"}

    def test_429_retried_then_ok(self, monkeypatch):
        backend = http_backend([FakeResponse(429), self.ok()], monkeypatch)
        assert complete(backend, req()).attempt_count == 2

    def test_500_retries_exhaust(self, monkeypatch):
        backend = http_backend([FakeResponse(503)] * 3, monkeypatch)
        with pytest.raises(Exhausted):
            complete(backend, req())

    def test_401_is_auth(self, monkeypatch):
        backend = http_backend([FakeResponse(401)], monkeypatch)
        with pytest.raises(AuthError):
            complete(backend, req())
        assert len(backend._session.posts) == 1

    def test_other_4xx_malformed_no_retry(self, monkeypatch):
        backend = http_backend([FakeResponse(400)], monkeypatch)
        with pytest.raises(MalformedResponse):
            complete(backend, req())
        assert len(backend._session.posts) == 1

    def test_unparseable_body(self, monkeypatch):
        backend = http_backend([FakeResponse(200, bad_json=True)], monkeypatch)
        with pytest.raises(MalformedResponse):
            complete(backend, req())

    def test_missing_key_env(self, monkeypatch):
        monkeypatch.delenv("UNIT_TEST_KEY", raising=False)
        backend = http_backend([self.ok()], monkeypatch, api_key_env="UNIT_TEST_KEY")
        with pytest.raises(AuthError):
            complete(backend, req())

    def test_key_sent_as_bearer(self, monkeypatch):
        monkeypatch.setenv("UNIT_TEST_KEY", "sk-123")
        backend = http_backend([self.ok()], monkeypatch, api_key_env="UNIT_TEST_KEY")
        complete(backend, req())
        headers = backend._session.posts[0]["headers"]
        assert headers["Authorization"] == "Bearer sk-123"


@settings(max_examples=50, deadline=None)
@given(prompt=st.text(min_size=1, max_size=80))
def test_mock_deterministic_for_any_prompt(prompt):
    make = lambda: script_mock([("a", "A"), ("b", "B")], default="D")
    first = complete(make(), ChatRequest(messages=(("user", prompt),)))
    second = complete(make(), ChatRequest(messages=(("user", prompt),)))
    assert first.response_text == second.response_text
