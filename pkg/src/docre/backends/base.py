"""
Chat backend interface and per-stage routing

Each RHF stage can be bound to its own backend/model (one fine-tuned adapter per
stage) or all three to the same one.
"""
import hashlib
import json
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from src.docre.constants import DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE
from src.docre.exceptions import BackendError, ConfigurationError
from src.docre.models.extraction import Stage

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecodeSettings:
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    stop: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be at least 1")

    def to_dict(self) -> Dict[str, Any]:
        return {"temperature": self.temperature, "max_tokens": self.max_tokens, "stop": list(self.stop)}


@dataclass(frozen=True)
class RequestContext:
    """
    Gold-lookup context carried next to the prompt

    Only the oracle reads it; it is not part of the prompt text or the cache key.
    relations lists the relation names embedded in a multi-relation fact prompt
    (None means the whole ontology).
    """
    doc_id: str
    relation: Optional[str] = None
    subject: Optional[str] = None
    relations: Optional[Tuple[str, ...]] = None


@dataclass(frozen=True)
class ChatRequest:
    prompt: str
    stage: Stage
    decode: DecodeSettings = field(default_factory=DecodeSettings)
    context: Optional[RequestContext] = None

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")

    def cache_key(self) -> str:
        """Content digest of prompt, stage and decode settings"""
        payload = json.dumps(
            {"prompt": self.prompt, "stage": self.stage.value, "decode": self.decode.to_dict()},
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class BackendResponse:
    text: str
    latency_s: float = 0.0
    token_usage: Optional[Dict[str, int]] = None
    backend_id: str = ""
    cached: bool = False


class ChatBackend(ABC):
    """A chat-completion provider; implementations must be safe for concurrent calls"""

    @property
    @abstractmethod
    def backend_id(self) -> str:
        """Identifier recorded in traces"""

    @abstractmethod
    def complete(self, request: ChatRequest, model: Optional[str] = None) -> BackendResponse:
        """Return the completion for one request"""

    def close(self) -> None:
        """Release held resources"""


@dataclass(frozen=True)
class StageBinding:
    """A backend plus the model / adapter name requests are sent to"""
    backend: ChatBackend
    model: Optional[str] = None

    @property
    def label(self) -> str:
        return f"{self.backend.backend_id}:{self.model}" if self.model else self.backend.backend_id


class StageRouting:
    """Stage -> binding map; every stage must be bound"""

    def __init__(self, bindings: Mapping[Stage, StageBinding]):
        missing = [s.value for s in Stage if s not in bindings]
        if missing:
            raise ConfigurationError(f"No backend bound for stage(s): {', '.join(missing)}")
        self.bindings: Dict[Stage, StageBinding] = dict(bindings)

    @classmethod
    def uniform(cls, binding: StageBinding) -> "StageRouting":
        """Bind every stage to the same backend / model"""
        return cls({stage: binding for stage in Stage})

    @classmethod
    def from_spec(cls, spec: Mapping[Union[Stage, str], StageBinding]) -> "StageRouting":
        """Build from a mapping keyed by Stage or stage value ("relation", "head", "fact")"""
        bindings = {}
        for key, binding in spec.items():
            try:
                stage = key if isinstance(key, Stage) else Stage(key)
            except ValueError as e:
                raise ConfigurationError(f"Unknown stage in routing spec: {key}") from e
            bindings[stage] = binding
        return cls(bindings)

    def binding_for(self, stage: Stage) -> StageBinding:
        return self.bindings[stage]

    def backends(self):
        """Distinct backends, in stage order"""
        seen = []
        for stage in Stage:
            backend = self.bindings[stage].backend
            if all(backend is not b for b in seen):
                seen.append(backend)
        return seen

    def describe(self) -> Dict[str, str]:
        return {stage.value: self.bindings[stage].label for stage in Stage}

    def close(self) -> None:
        for backend in self.backends():
            backend.close()


def chat(request: ChatRequest, routing: StageRouting) -> BackendResponse:
    """
    Send a request to the backend bound to its stage

    Raises:
        BackendError: subclasses carry the stage and backend id of the failing call
    """
    binding = routing.binding_for(request.stage)
    try:
        return binding.backend.complete(request, binding.model)
    except BackendError as e:
        if e.stage is None:
            e.stage = request.stage.value
        if e.backend_id is None:
            e.backend_id = binding.backend.backend_id
        raise
