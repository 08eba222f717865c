"""
Extraction models: stages, paradigms, prompts, parse outcomes, predictions, traces
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Generic, List, Optional, Tuple, TypeVar

from src.docre.constants import (
    STAGE_RELATION,
    STAGE_HEAD,
    STAGE_FACT,
    PARADIGM_DF,
    PARADIGM_DRSF,
    PARADIGM_DRF,
    PARADIGM_DRHF,
    PARADIGM_LABELS,
    PROMPT_STYLE_CHAT,
    PROMPT_STYLE_TUNED,
    LISTING_MODE_WITH_CANDIDATES,
    LISTING_MODE_OPEN,
    TRACE_STATUS_OK,
)
from src.docre.models.ontology import Relation

T = TypeVar("T")


class Stage(Enum):
    """RHF stage; each may be routed to its own fine-tuned adapter"""
    RELATION_EXTRACTION = STAGE_RELATION
    HEAD_EXTRACTION = STAGE_HEAD
    FACT_EXTRACTION = STAGE_FACT


class Paradigm(Enum):
    """Extraction paradigms"""
    DF = PARADIGM_DF
    DRSF = PARADIGM_DRSF
    DRF = PARADIGM_DRF
    DRHF = PARADIGM_DRHF

    @property
    def label(self) -> str:
        return PARADIGM_LABELS[self.value]


class PromptStyle(Enum):
    """CHAT: candidate-list prompts for untuned chat models. TUNED: instruction-tuning prompts."""
    CHAT = PROMPT_STYLE_CHAT
    TUNED = PROMPT_STYLE_TUNED


class ListingMode(Enum):
    WITH_CANDIDATES = LISTING_MODE_WITH_CANDIDATES
    OPEN = LISTING_MODE_OPEN

    @property
    def style(self) -> PromptStyle:
        return PromptStyle.CHAT if self is ListingMode.WITH_CANDIDATES else PromptStyle.TUNED


@dataclass(frozen=True)
class RenderedPrompt:
    """A fully rendered prompt and the slot values that produced it"""
    stage: Stage
    paradigm: Optional[Paradigm]
    template: str
    text: str
    slots: Dict[str, str]


@dataclass
class ParseOutcome(Generic[T]):
    """Parsed value plus every rejected line and the reason it was rejected"""
    value: T
    raw: str
    rejected_lines: List[Tuple[str, str]] = field(default_factory=list)
    accepted_lines: int = 0
    blank_lines: int = 0

    @property
    def n_lines(self) -> int:
        return self.accepted_lines + len(self.rejected_lines) + self.blank_lines


@dataclass(frozen=True)
class Provenance:
    paradigm: Optional[str] = None
    trace_ids: Tuple[str, ...] = ()


@dataclass(frozen=True)
class PredictedFact:
    """Surface-string triple produced by a pipeline run"""
    doc_id: str
    head_text: str
    relation: Relation
    tail_text: str
    provenance: Provenance = Provenance()

    @property
    def key(self) -> Tuple[str, str, str]:
        return (self.head_text, self.relation.id, self.tail_text)

    def to_record(self) -> Dict[str, Any]:
        return {
            "doc_id": self.doc_id,
            "head": self.head_text,
            "relation": self.relation.name,
            "tail": self.tail_text,
            "paradigm": self.provenance.paradigm,
        }


@dataclass
class StageRecord:
    """One model call inside a document run"""
    trace_id: str
    stage: Stage
    template: str
    prompt: str
    slots: Dict[str, str]
    raw_response: str = ""
    accepted: int = 0
    rejected: List[Tuple[str, str]] = field(default_factory=list)
    latency_s: float = 0.0
    backend_id: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "trace_id": self.trace_id,
            "stage": self.stage.value,
            "template": self.template,
            "prompt": self.prompt,
            "slots": self.slots,
            "raw_response": self.raw_response,
            "accepted": self.accepted,
            "rejected": [{"line": line, "reason": reason} for line, reason in self.rejected],
            "latency_s": round(self.latency_s, 6),
            "backend_id": self.backend_id,
        }


@dataclass
class ExtractionTrace:
    """Ordered record of every call made for one document"""
    doc_id: str
    paradigm: Paradigm
    records: List[StageRecord] = field(default_factory=list)
    status: str = TRACE_STATUS_OK
    error: Optional[str] = None

    @property
    def n_calls(self) -> int:
        return len(self.records)

    @property
    def n_rejected_lines(self) -> int:
        return sum(len(r.rejected) for r in self.records)

    def calls_by_stage(self) -> Dict[str, int]:
        counts = {stage.value: 0 for stage in Stage}
        for record in self.records:
            counts[record.stage.value] += 1
        return counts

    def next_trace_id(self) -> str:
        return f"{self.doc_id}:{len(self.records)}"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "doc_id": self.doc_id,
            "paradigm": self.paradigm.value,
            "status": self.status,
            "error": self.error,
            "totals": {
                "n_calls": self.n_calls,
                "n_rejected_lines": self.n_rejected_lines,
                "calls_by_stage": self.calls_by_stage(),
            },
            "records": [r.to_dict() for r in self.records],
        }


@dataclass
class StagePredictions:
    """Stage-level outputs of one document, produced with gold upstream inputs"""
    doc_id: str
    stage: Stage
    relations: List[Relation] = field(default_factory=list)
    heads: List[Tuple[Relation, str]] = field(default_factory=list)
    facts: List[PredictedFact] = field(default_factory=list)

    def to_record(self) -> Dict[str, Any]:
        return {
            "doc_id": self.doc_id,
            "stage": self.stage.value,
            "relations": [r.name for r in self.relations],
            "heads": [{"relation": r.name, "head": h} for r, h in self.heads],
            "facts": [
                {"head": f.head_text, "relation": f.relation.name, "tail": f.tail_text}
                for f in self.facts
            ],
        }
