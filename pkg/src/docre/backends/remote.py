"""
Remote chat-completion backend

Speaks the common chat-completion HTTP schema:

    POST {api_base}/chat/completions
    {"model": ..., "messages": [{"role": "user", "content": prompt}],
     "temperature": ..., "max_tokens": ..., "stop": [...]}
    -> {"choices": [{"message": {"content": ...}}], "usage": {...}}

Transient failures (timeouts, transport errors, 408/409/429/5xx) are retried with
exponential backoff. An in-flight cap and a per-minute request budget apply across
all threads sharing the backend.
"""
import logging
import threading
import time
from collections import deque
from typing import Callable, Deque, Optional

import httpx

from src.docre.config import Config
from src.docre.constants import DEFAULT_RETRY_MAX_DELAY_S, RETRYABLE_STATUS_CODES
from src.docre.exceptions import (
    BackendTimeoutError,
    BackendUnavailableError,
    ConfigurationError,
    ProviderError,
)
from src.docre.backends.base import BackendResponse, ChatBackend, ChatRequest

logger = logging.getLogger(__name__)


class RateLimiter:
    """Sliding one-minute window of request start times"""

    def __init__(
        self,
        requests_per_minute: int,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if requests_per_minute < 1:
            raise ConfigurationError("requests_per_minute must be at least 1")
        self.requests_per_minute = requests_per_minute
        self._clock = clock
        self._sleep = sleep
        self._window: Deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                while self._window and now - self._window[0] >= 60.0:
                    self._window.popleft()
                if len(self._window) < self.requests_per_minute:
                    self._window.append(now)
                    return
                wait = 60.0 - (now - self._window[0])
            self._sleep(max(wait, 0.0))


class RemoteChatBackend(ChatBackend):
    """
    HTTP chat backend

    Args:
        api_base: Endpoint root, e.g. http://localhost:8000/v1
        model: Default model when the stage binding names none
        api_key_env: Environment variable holding the API key
        transport: Optional httpx transport (tests use httpx.MockTransport)
        sleep / clock: Injectable for tests

    Raises:
        ConfigurationError: the API key variable is unset (checked before any request)
    """

    def __init__(
        self,
        api_base: str = Config.API_BASE,
        model: str = Config.MODEL,
        api_key_env: str = Config.API_KEY_ENV,
        timeout_s: float = Config.TIMEOUT_S,
        max_retries: int = Config.MAX_RETRIES,
        retry_base_delay_s: float = Config.RETRY_BASE_DELAY_S,
        retry_max_delay_s: float = DEFAULT_RETRY_MAX_DELAY_S,
        max_in_flight: int = Config.MAX_IN_FLIGHT,
        requests_per_minute: int = Config.REQUESTS_PER_MINUTE,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ):
        api_key = Config.api_key(api_key_env)
        if not api_key:
            raise ConfigurationError(
                f"API key environment variable {api_key_env} is not set"
            )
        if max_in_flight < 1:
            raise ConfigurationError("max_in_flight must be at least 1")

        self.api_base = api_base.rstrip("/")
        self.model = model
        self.max_retries = max_retries
        self.retry_base_delay_s = retry_base_delay_s
        self.retry_max_delay_s = retry_max_delay_s
        self._sleep = sleep
        self._clock = clock
        self._in_flight = threading.BoundedSemaphore(max_in_flight)
        self._limiter = RateLimiter(requests_per_minute, clock=clock, sleep=sleep)
        self._client = httpx.Client(
            base_url=self.api_base,
            timeout=timeout_s,
            transport=transport,
            headers={"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"},
        )

    @property
    def backend_id(self) -> str:
        return f"remote:{self.api_base}"

    def _payload(self, request: ChatRequest, model: str) -> dict:
        payload = {
            "model": model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.decode.temperature,
            "max_tokens": request.decode.max_tokens,
        }
        if request.decode.stop:
            payload["stop"] = list(request.decode.stop)
        return payload

    def _backoff(self, attempt: int) -> float:
        return min(self.retry_base_delay_s * (2 ** attempt), self.retry_max_delay_s)

    def _parse(self, response: httpx.Response, stage: str) -> tuple:
        body = response.text
        try:
            data = response.json()
            if "error" in data:
                raise ProviderError(
                    f"Provider returned an error payload: {data['error']}",
                    raw_body=body, status_code=response.status_code,
                    stage=stage, backend_id=self.backend_id,
                )
            text = data["choices"][0]["message"]["content"]
        except ProviderError:
            raise
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise ProviderError(
                f"Malformed completion payload: {e}",
                raw_body=body, status_code=response.status_code,
                stage=stage, backend_id=self.backend_id,
            ) from e
        return text or "", data.get("usage")

    def complete(self, request: ChatRequest, model: Optional[str] = None) -> BackendResponse:
        model = model or self.model
        stage = request.stage.value
        payload = self._payload(request, model)
        last_error: Optional[Exception] = None
        timed_out = False

        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = self._backoff(attempt - 1)
                logger.warning(
                    "Retrying chat request",
                    extra={"stage": stage, "attempt": attempt, "delay_s": delay, "error": str(last_error)},
                )
                self._sleep(delay)

            self._limiter.acquire()
            started = self._clock()
            try:
                with self._in_flight:
                    response = self._client.post("/chat/completions", json=payload)
            except httpx.TimeoutException as e:
                last_error, timed_out = e, True
                continue
            except httpx.TransportError as e:
                last_error, timed_out = e, False
                continue
            latency = self._clock() - started

            if response.status_code in RETRYABLE_STATUS_CODES:
                last_error = ProviderError(
                    f"HTTP {response.status_code}", raw_body=response.text,
                    status_code=response.status_code, stage=stage, backend_id=self.backend_id,
                )
                timed_out = False
                continue
            if response.status_code >= 400:
                raise ProviderError(
                    f"HTTP {response.status_code} from provider",
                    raw_body=response.text, status_code=response.status_code,
                    stage=stage, backend_id=self.backend_id,
                )

            text, usage = self._parse(response, stage)
            return BackendResponse(text=text, latency_s=latency, token_usage=usage, backend_id=self.backend_id)

        attempts = self.max_retries + 1
        if timed_out:
            raise BackendTimeoutError(
                f"Chat request timed out after {attempts} attempt(s)",
                stage=stage, backend_id=self.backend_id,
            ) from last_error
        raise BackendUnavailableError(
            f"Chat request failed after {attempts} attempt(s): {last_error}",
            stage=stage, backend_id=self.backend_id,
        ) from last_error

    def close(self) -> None:
        self._client.close()
