"""
Unit tests for chat backends, routing and the response cache
"""
import json

import httpx
import pytest

from src.docre.backends.base import (
    ChatRequest,
    DecodeSettings,
    RequestContext,
    StageBinding,
    StageRouting,
    chat,
)
from src.docre.backends.factory import build_routing
from src.docre.backends.oracle import OracleBackend, gold_fact_lines, gold_heads, gold_relations
from src.docre.backends.remote import RateLimiter, RemoteChatBackend
from src.docre.backends.replay import RecordingBackend, ReplayBackend, ScriptedBackend
from src.docre.cache.response_cache import LRUCache, ResponseCache
from src.docre.config import Config
from src.docre.exceptions import (
    BackendTimeoutError,
    BackendUnavailableError,
    CacheCorruptionError,
    ConfigurationError,
    OracleContextError,
    ProviderError,
)
from src.docre.models.extraction import Stage
from src.docre.schemas import RoutingConfig

API_KEY_ENV = "DOCRE_TEST_API_KEY"


def _completion(text, usage=None):
    body = {"choices": [{"message": {"role": "assistant", "content": text}}]}
    if usage is not None:
        body["usage"] = usage
    return httpx.Response(200, json=body)


class TestChatRequest:
    """Request validation and cache keys"""

    def test_cache_key_ignores_context(self):
        a = ChatRequest("prompt", Stage.HEAD_EXTRACTION, context=RequestContext("Harvard", relation="country"))
        b = ChatRequest("prompt", Stage.HEAD_EXTRACTION, context=RequestContext("Obama"))
        assert a.cache_key() == b.cache_key()

    def test_cache_key_covers_stage_and_decode(self):
        base = ChatRequest("prompt", Stage.HEAD_EXTRACTION)
        assert base.cache_key() != ChatRequest("prompt", Stage.FACT_EXTRACTION).cache_key()
        warmer = ChatRequest("prompt", Stage.HEAD_EXTRACTION, decode=DecodeSettings(temperature=0.7))
        assert base.cache_key() != warmer.cache_key()

    def test_empty_prompt_rejected(self):
        with pytest.raises(ValueError):
            ChatRequest("", Stage.RELATION_EXTRACTION)

    def test_decode_settings_validated(self):
        with pytest.raises(ValueError):
            DecodeSettings(temperature=-0.1)
        with pytest.raises(ValueError):
            DecodeSettings(max_tokens=0)


class TestStageRouting:
    """Per-stage backend bindings"""

    def setup_method(self):
        self.backend = ScriptedBackend(responder=lambda request: request.stage.value)

    def test_uniform(self):
        routing = StageRouting.uniform(StageBinding(self.backend, "base"))
        assert routing.describe() == {"relation": "scripted:base", "head": "scripted:base", "fact": "scripted:base"}
        assert routing.backends() == [self.backend]

    def test_missing_stage_rejected(self):
        with pytest.raises(ConfigurationError, match="fact"):
            StageRouting({Stage.RELATION_EXTRACTION: StageBinding(self.backend),
                          Stage.HEAD_EXTRACTION: StageBinding(self.backend)})

    def test_from_spec_with_stage_names(self):
        other = ScriptedBackend(default="x")
        routing = StageRouting.from_spec({
            "relation": StageBinding(self.backend, "rel-adapter"),
            "head": StageBinding(self.backend, "head-adapter"),
            Stage.FACT_EXTRACTION: StageBinding(other),
        })
        assert routing.binding_for(Stage.HEAD_EXTRACTION).model == "head-adapter"
        assert routing.backends() == [self.backend, other]

    def test_unknown_stage_name(self):
        with pytest.raises(ConfigurationError, match="tail"):
            StageRouting.from_spec({"tail": StageBinding(self.backend)})

    def test_chat_dispatches_by_stage(self):
        routing = StageRouting.uniform(StageBinding(self.backend))
        assert chat(ChatRequest("p", Stage.FACT_EXTRACTION), routing).text == "fact"

    def test_chat_fills_failure_origin(self):
        failing = ScriptedBackend(fail_on=lambda request: True)
        routing = StageRouting.uniform(StageBinding(failing))

        with pytest.raises(BackendUnavailableError) as exc_info:
            chat(ChatRequest("p", Stage.HEAD_EXTRACTION), routing)
        assert exc_info.value.stage == "head"
        assert exc_info.value.backend_id == "scripted"


class TestOracleBackend:
    """Gold answers per stage"""

    def setup_method(self):
        self.request_stage = {
            "relation": Stage.RELATION_EXTRACTION,
            "head": Stage.HEAD_EXTRACTION,
            "fact": Stage.FACT_EXTRACTION,
        }

    def _ask(self, backend, stage, context):
        return backend.complete(ChatRequest("prompt", self.request_stage[stage], context=context)).text

    def test_relation_answer_sorted_by_name(self, sample_docs, ontology):
        backend = OracleBackend(sample_docs, ontology)
        assert self._ask(backend, "relation", RequestContext("Harvard")).splitlines() == [
            "country",
            "country of citizenship",
            "educated at",
            "located in the administrative territorial entity",
            "place of birth",
        ]

    def test_relation_answer_without_facts(self, sample_docs, ontology):
        backend = OracleBackend(sample_docs, ontology)
        assert self._ask(backend, "relation", RequestContext("Rain")) == "no relation"

    def test_head_answer(self, sample_docs, ontology):
        backend = OracleBackend(sample_docs, ontology)
        answer = self._ask(backend, "head", RequestContext("Harvard", relation="country"))
        assert answer == "Boston\nHarvard University"

    def test_fact_answer_for_subject(self, sample_docs, ontology):
        backend = OracleBackend(sample_docs, ontology)
        answer = self._ask(backend, "fact", RequestContext("Harvard", relation="country", subject="Boston"))
        assert answer == "[Boston, country, United States]"

    def test_fact_answer_for_relation_list(self, sample_docs, ontology):
        backend = OracleBackend(sample_docs, ontology)
        answer = self._ask(backend, "fact", RequestContext("Obama", relations=("spouse", "country")))
        assert answer.splitlines() == ["[Barack Obama, spouse, Michelle Obama]", "[Michelle Obama, spouse, Barack Obama]"]

    def test_fact_answer_whole_ontology(self, harvard_doc, ontology):
        lines = gold_fact_lines(harvard_doc, ontology.relations)
        assert len(lines) == 6
        assert lines[0] == (
            "[Harvard University, located in the administrative territorial entity, Cambridge, Massachusetts]"
        )

    def test_gold_helpers(self, harvard_doc, ontology):
        assert gold_relations(harvard_doc, ontology)[0].name == "country"
        assert gold_heads(harvard_doc, ontology.get("educated at")) == ["John Smith"]

    def test_context_errors(self, sample_docs, ontology):
        backend = OracleBackend(sample_docs, ontology)
        with pytest.raises(OracleContextError):
            backend.complete(ChatRequest("prompt", Stage.RELATION_EXTRACTION))
        with pytest.raises(OracleContextError, match="no document"):
            self._ask(backend, "relation", RequestContext("Missing"))
        with pytest.raises(OracleContextError, match="needs a relation"):
            self._ask(backend, "head", RequestContext("Harvard"))
        with pytest.raises(OracleContextError, match="Unknown relation"):
            self._ask(backend, "fact", RequestContext("Harvard", relation="favourite colour"))


class TestResponseCache:
    """Content-addressed response store"""

    def test_put_and_get(self, tmp_path):
        cache = ResponseCache(tmp_path / "cache")
        path = cache.put("abcdef", {"text": "country"})

        assert path == tmp_path / "cache" / "ab" / "abcdef.json"
        assert "abcdef" in cache
        assert len(cache) == 1
        # A fresh instance reads from disk
        assert ResponseCache(tmp_path / "cache").get("abcdef") == {"text": "country"}

    def test_missing_key(self, tmp_path):
        cache = ResponseCache(tmp_path)
        assert cache.get("ffff") is None
        assert cache.get_stats()["misses"] == 1

    def test_corrupt_entry(self, tmp_path):
        cache = ResponseCache(tmp_path)
        path = cache.path_for("c0ffee")
        path.parent.mkdir(parents=True)
        path.write_text("{not json", encoding="utf-8")

        with pytest.raises(CacheCorruptionError):
            cache.get("c0ffee")

    def test_clear(self, tmp_path):
        cache = ResponseCache(tmp_path)
        cache.put("aa11", {"text": "a"})
        cache.clear()
        assert len(cache) == 0
        assert "aa11" not in cache

    def test_lru_eviction(self):
        lru = LRUCache(max_size=2)
        lru.set("a", 1)
        lru.set("b", 2)
        lru.get("a")
        lru.set("c", 3)

        assert lru.get("b") is None
        assert lru.get("a") == 1
        assert lru.get_stats()["evictions"] == 1


class TestRecordingAndReplay:
    """Cache-through recording and offline replay"""

    def setup_method(self):
        self.request = ChatRequest("List relations.", Stage.RELATION_EXTRACTION)

    def test_recording_calls_inner_once(self, tmp_path):
        inner = ScriptedBackend(default="country")
        recording = RecordingBackend(ResponseCache(tmp_path), inner)

        first = recording.complete(self.request)
        second = recording.complete(self.request)

        assert first.text == second.text == "country"
        assert not first.cached
        assert second.cached
        assert recording.inner_calls == 1
        assert len(inner.requests) == 1

    def test_replay_serves_recorded_responses(self, tmp_path):
        cache = ResponseCache(tmp_path)
        RecordingBackend(cache, ScriptedBackend(default="spouse")).complete(self.request)

        replay = ReplayBackend(ResponseCache(tmp_path))
        response = replay.complete(self.request)
        assert response.text == "spouse"
        assert response.cached

    def test_replay_miss_is_backend_failure(self, tmp_path):
        with pytest.raises(BackendUnavailableError, match="No recorded response"):
            ReplayBackend(ResponseCache(tmp_path)).complete(self.request)

    def test_recording_recovers_from_corrupt_entry(self, tmp_path):
        cache = ResponseCache(tmp_path)
        path = cache.path_for(self.request.cache_key())
        path.parent.mkdir(parents=True)
        path.write_text("[]", encoding="utf-8")

        recording = RecordingBackend(cache, ScriptedBackend(default="country"))
        assert recording.complete(self.request).text == "country"
        assert json.loads(path.read_text(encoding="utf-8"))["text"] == "country"


class TestScriptedBackend:
    """Queues and responders"""

    def test_stage_queues(self):
        backend = ScriptedBackend(queues={"head": ["Boston", "Chicago"]}, default="no entity")
        request = ChatRequest("p", Stage.HEAD_EXTRACTION)

        texts = [backend.complete(request).text for _ in range(3)]
        assert texts == ["Boston", "Chicago", "no entity"]
        assert len(backend.requests) == 3


class TestRateLimiter:
    """Sliding one-minute request window"""

    def test_waits_for_window(self):
        now = [0.0]
        sleeps = []

        def sleep(seconds):
            sleeps.append(seconds)
            now[0] += seconds

        limiter = RateLimiter(2, clock=lambda: now[0], sleep=sleep)
        for _ in range(3):
            limiter.acquire()
        assert sleeps == [60.0]

    def test_rejects_zero_budget(self):
        with pytest.raises(ConfigurationError):
            RateLimiter(0)


class TestRemoteChatBackend:
    """HTTP backend against a mock transport"""

    def setup_method(self):
        self.sleeps = []
        self.seen = []

    def _backend(self, handler, **kwargs):
        options = dict(
            api_base="http://llm.test/v1",
            model="base-model",
            api_key_env=API_KEY_ENV,
            max_retries=2,
            retry_base_delay_s=1.0,
            requests_per_minute=1000,
            transport=httpx.MockTransport(handler),
            sleep=self.sleeps.append,
        )
        options.update(kwargs)
        return RemoteChatBackend(**options)

    def test_success(self, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "secret")

        def handler(request):
            self.seen.append(request)
            return _completion("country\nspouse", usage={"total_tokens": 12})

        backend = self._backend(handler)
        response = backend.complete(ChatRequest("List relations.", Stage.RELATION_EXTRACTION), "relation-adapter")

        assert response.text == "country\nspouse"
        assert response.token_usage == {"total_tokens": 12}
        assert response.backend_id == "remote:http://llm.test/v1"
        sent = self.seen[0]
        assert sent.url.path == "/v1/chat/completions"
        assert sent.headers["Authorization"] == "Bearer secret"
        body = json.loads(sent.content)
        assert body["model"] == "relation-adapter"
        assert body["messages"] == [{"role": "user", "content": "List relations."}]
        assert body["temperature"] == 0.0
        assert "stop" not in body

    def test_default_model_and_stop(self, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "secret")

        def handler(request):
            self.seen.append(json.loads(request.content))
            return _completion("ok")

        request = ChatRequest("p", Stage.FACT_EXTRACTION, decode=DecodeSettings(stop=("\n\n",)))
        self._backend(handler).complete(request)

        assert self.seen[0]["model"] == "base-model"
        assert self.seen[0]["stop"] == ["\n\n"]

    def test_retries_transient_status(self, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "secret")
        statuses = [503, 429]

        def handler(request):
            if statuses:
                return httpx.Response(statuses.pop(0), text="busy")
            return _completion("recovered")

        response = self._backend(handler).complete(ChatRequest("p", Stage.HEAD_EXTRACTION))
        assert response.text == "recovered"
        assert self.sleeps == [1.0, 2.0]

    def test_retries_exhausted(self, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "secret")
        backend = self._backend(lambda request: httpx.Response(502, text="bad gateway"))

        with pytest.raises(BackendUnavailableError, match="3 attempt") as exc_info:
            backend.complete(ChatRequest("p", Stage.HEAD_EXTRACTION))
        assert exc_info.value.stage == "head"
        assert self.sleeps == [1.0, 2.0]

    def test_timeout(self, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "secret")

        def handler(request):
            raise httpx.ReadTimeout("slow", request=request)

        with pytest.raises(BackendTimeoutError):
            self._backend(handler, max_retries=1).complete(ChatRequest("p", Stage.FACT_EXTRACTION))
        assert self.sleeps == [1.0]

    def test_client_error_not_retried(self, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "secret")
        calls = []

        def handler(request):
            calls.append(request)
            return httpx.Response(400, text="bad request")

        with pytest.raises(ProviderError) as exc_info:
            self._backend(handler).complete(ChatRequest("p", Stage.FACT_EXTRACTION))
        assert exc_info.value.status_code == 400
        assert exc_info.value.raw_body == "bad request"
        assert len(calls) == 1

    def test_error_payload(self, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "secret")
        backend = self._backend(lambda request: httpx.Response(200, json={"error": {"message": "overloaded"}}))

        with pytest.raises(ProviderError, match="error payload"):
            backend.complete(ChatRequest("p", Stage.FACT_EXTRACTION))

    def test_malformed_payload(self, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "secret")
        backend = self._backend(lambda request: httpx.Response(200, json={"choices": []}))

        with pytest.raises(ProviderError, match="Malformed"):
            backend.complete(ChatRequest("p", Stage.FACT_EXTRACTION))

    def test_missing_api_key(self, monkeypatch):
        monkeypatch.delenv(API_KEY_ENV, raising=False)
        with pytest.raises(ConfigurationError, match=API_KEY_ENV):
            self._backend(lambda request: _completion("unreachable"))


class TestBuildRouting:
    """Routing construction from RoutingConfig"""

    def test_oracle(self, sample_docs, ontology):
        routing = build_routing(RoutingConfig(oracle=True), sample_docs, ontology)
        assert routing.describe()["head"] == "oracle"

    def test_remote_with_stage_models_and_cache(self, sample_docs, ontology, tmp_path, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "secret")
        config = RoutingConfig(
            api_key_env=API_KEY_ENV,
            model="base",
            stage_models={"fact": "fact-adapter"},
            cache_dir=str(tmp_path / "cache"),
        )
        routing = build_routing(config, sample_docs, ontology,
                                transport=httpx.MockTransport(lambda request: _completion("x")))

        assert isinstance(routing.binding_for(Stage.FACT_EXTRACTION).backend, RecordingBackend)
        assert routing.binding_for(Stage.FACT_EXTRACTION).model == "fact-adapter"
        assert routing.binding_for(Stage.RELATION_EXTRACTION).model == "base"
        routing.close()

    def test_replay_requires_cache_dir(self, sample_docs, ontology, monkeypatch):
        monkeypatch.setattr(Config, "CACHE_DIR", "")
        with pytest.raises(ConfigurationError, match="cache_dir"):
            build_routing(RoutingConfig(replay_only=True), sample_docs, ontology)

    def test_replay(self, sample_docs, ontology, tmp_path):
        routing = build_routing(RoutingConfig(replay_only=True, cache_dir=str(tmp_path)), sample_docs, ontology)
        assert isinstance(routing.binding_for(Stage.HEAD_EXTRACTION).backend, ReplayBackend)

    def test_missing_key_fails_before_any_request(self, sample_docs, ontology, monkeypatch):
        monkeypatch.delenv("DOCRE_TEST_UNSET_KEY", raising=False)
        with pytest.raises(ConfigurationError):
            build_routing(RoutingConfig(api_key_env="DOCRE_TEST_UNSET_KEY"), sample_docs, ontology)
