"""
Replay, recording and scripted backends

RecordingBackend persists every inner response in a ResponseCache; ReplayBackend
serves only from that cache, which makes reruns bit-reproducible without network
access. ScriptedBackend answers from a callable or per-stage queues (tests).
"""
import logging
import threading
import time
from collections import deque
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Union

from src.docre.constants import BACKEND_ID_REPLAY, BACKEND_ID_SCRIPTED
from src.docre.exceptions import BackendUnavailableError, CacheCorruptionError
from src.docre.models.extraction import Stage
from src.docre.cache.response_cache import ResponseCache
from src.docre.backends.base import BackendResponse, ChatBackend, ChatRequest

logger = logging.getLogger(__name__)


def _entry(request: ChatRequest, response: BackendResponse) -> dict:
    return {
        "stage": request.stage.value,
        "prompt": request.prompt,
        "decode": request.decode.to_dict(),
        "text": response.text,
        "backend_id": response.backend_id,
        "token_usage": response.token_usage,
    }


class ReplayBackend(ChatBackend):
    """Serves recorded responses; a miss is a backend failure"""

    def __init__(self, cache: ResponseCache):
        self.cache = cache

    @property
    def backend_id(self) -> str:
        return BACKEND_ID_REPLAY

    def complete(self, request: ChatRequest, model: Optional[str] = None) -> BackendResponse:
        key = request.cache_key()
        try:
            entry = self.cache.get(key)
        except CacheCorruptionError as e:
            raise BackendUnavailableError(str(e), stage=request.stage.value, backend_id=self.backend_id) from e
        if entry is None:
            raise BackendUnavailableError(
                f"No recorded response for key {key[:12]}",
                stage=request.stage.value,
                backend_id=self.backend_id,
            )
        return BackendResponse(text=entry["text"], backend_id=self.backend_id, cached=True)


class RecordingBackend(ChatBackend):
    """Cache-through wrapper: first call delegates and persists, repeats are served from the cache"""

    def __init__(self, cache: ResponseCache, inner: ChatBackend):
        self.cache = cache
        self.inner = inner
        self.inner_calls = 0
        self._lock = threading.Lock()

    @property
    def backend_id(self) -> str:
        return self.inner.backend_id

    def complete(self, request: ChatRequest, model: Optional[str] = None) -> BackendResponse:
        key = request.cache_key()
        try:
            entry = self.cache.get(key)
        except CacheCorruptionError as e:
            logger.warning("Cache entry corrupt, calling inner backend", extra={"cache_key": key, "error": str(e)})
            entry = None
        if entry is not None:
            return BackendResponse(
                text=entry["text"],
                token_usage=entry.get("token_usage"),
                backend_id=entry.get("backend_id") or self.backend_id,
                cached=True,
            )

        response = self.inner.complete(request, model)
        with self._lock:
            self.inner_calls += 1
        self.cache.put(key, _entry(request, response))
        return response

    def close(self) -> None:
        self.inner.close()


def record_and_replay(cache: ResponseCache, inner: ChatBackend) -> RecordingBackend:
    return RecordingBackend(cache, inner)


Responder = Callable[[ChatRequest], str]


class ScriptedBackend(ChatBackend):
    """
    Deterministic test backend

    Answers from a responder callable when given, otherwise pops from a per-stage
    queue of canned responses (default text when a queue is empty). Every request
    is recorded in .requests.
    """

    def __init__(
        self,
        responder: Optional[Responder] = None,
        queues: Optional[Mapping[Union[Stage, str], Iterable[str]]] = None,
        default: str = "",
        fail_on: Optional[Callable[[ChatRequest], bool]] = None,
    ):
        self.responder = responder
        self.queues: Dict[Stage, deque] = {}
        for key, items in (queues or {}).items():
            stage = key if isinstance(key, Stage) else Stage(key)
            self.queues[stage] = deque(items)
        self.default = default
        self.fail_on = fail_on
        self.requests: List[ChatRequest] = []
        self._lock = threading.Lock()

    @property
    def backend_id(self) -> str:
        return BACKEND_ID_SCRIPTED

    def complete(self, request: ChatRequest, model: Optional[str] = None) -> BackendResponse:
        started = time.perf_counter()
        with self._lock:
            self.requests.append(request)
            if self.fail_on is not None and self.fail_on(request):
                raise BackendUnavailableError(
                    "Scripted failure", stage=request.stage.value, backend_id=self.backend_id
                )
            if self.responder is not None:
                text = self.responder(request)
            else:
                queue = self.queues.get(request.stage)
                text = queue.popleft() if queue else self.default
        return BackendResponse(
            text=text,
            latency_s=time.perf_counter() - started,
            backend_id=self.backend_id,
        )
