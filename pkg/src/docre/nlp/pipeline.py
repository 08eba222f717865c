"""
Extraction paradigms over one document

    D-F      one call listing facts over the whole candidate list
    D-RS-F   relation listing, then one fact call embedding all predicted relations
    D-R-F    relation listing, then one fact call per predicted relation
    D-R-H-F  relation listing, one head call per relation, one fact call per (relation, head)

Stages pass parsed values forward, never raw text. Every call is recorded in the
document's ExtractionTrace. A backend error ends the document run with status
"failed" and no predictions; exhausting the call budget ends it with status
"truncated" and whatever facts were collected.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from src.docre.constants import (
    DEFAULT_CALL_BUDGET,
    TRACE_STATUS_FAILED,
    TRACE_STATUS_TRUNCATED,
)
from src.docre.exceptions import BackendError
from src.docre.models.document import Document
from src.docre.models.extraction import (
    ExtractionTrace,
    ListingMode,
    Paradigm,
    PredictedFact,
    PromptStyle,
    Provenance,
    RenderedPrompt,
    Stage,
    StagePredictions,
    StageRecord,
)
from src.docre.models.ontology import Relation, RelationOntology
from src.docre.backends.base import ChatRequest, DecodeSettings, RequestContext, StageRouting, chat
from src.docre.backends.oracle import gold_heads, gold_relations
from src.docre.monitoring.performance_monitor import CallMonitor
from src.docre.nlp.prompt_renderer import PromptRenderer, get_renderer
from src.docre.nlp.response_parser import parse_entity_list, parse_fact_list, parse_relation_list

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExtractionOptions:
    with_description: bool = True
    strict_entities: bool = False
    gold_relation_prior: bool = False
    prompt_style: PromptStyle = PromptStyle.CHAT
    call_budget: int = DEFAULT_CALL_BUDGET
    decode: DecodeSettings = field(default_factory=DecodeSettings)

    @property
    def listing_mode(self) -> ListingMode:
        return ListingMode.WITH_CANDIDATES if self.prompt_style is PromptStyle.CHAT else ListingMode.OPEN


class CallBudgetExceeded(Exception):
    """Internal signal: the document used up its call budget"""


def dedup_predictions(facts: Sequence[PredictedFact]) -> List[PredictedFact]:
    """Drop repeated (head, relation, tail) facts, keeping the first occurrence"""
    seen = set()
    kept = []
    for fact in facts:
        if fact.key in seen:
            continue
        seen.add(fact.key)
        kept.append(fact)
    return kept


class ExtractionPipeline:
    """
    Runs paradigms for single documents

    Shared state (ontology, routing, renderer, options) is read-only, so one
    pipeline can serve many worker threads.
    """

    def __init__(
        self,
        ontology: RelationOntology,
        routing: StageRouting,
        opts: Optional[ExtractionOptions] = None,
        renderer: Optional[PromptRenderer] = None,
        monitor: Optional[CallMonitor] = None,
    ):
        self.ontology = ontology
        self.routing = routing
        self.opts = opts or ExtractionOptions()
        self.renderer = renderer or get_renderer()
        self.monitor = monitor

    # ===== Calls =====

    def _call(self, doc: Document, trace: ExtractionTrace, prompt: RenderedPrompt,
              context: RequestContext) -> StageRecord:
        if trace.n_calls >= self.opts.call_budget:
            raise CallBudgetExceeded()

        request = ChatRequest(prompt=prompt.text, stage=prompt.stage, decode=self.opts.decode, context=context)
        record = StageRecord(
            trace_id=trace.next_trace_id(),
            stage=prompt.stage,
            template=prompt.template,
            prompt=prompt.text,
            slots=prompt.slots,
        )
        trace.records.append(record)

        started = time.perf_counter()
        response = chat(request, self.routing)
        record.latency_s = time.perf_counter() - started
        record.raw_response = response.text
        record.backend_id = response.backend_id
        if self.monitor is not None:
            self.monitor.track_call(prompt.stage.value, record.latency_s * 1000, cached=response.cached, doc_id=doc.doc_id)
        return record

    @staticmethod
    def _note(record: StageRecord, outcome) -> None:
        record.accepted = outcome.accepted_lines
        record.rejected = list(outcome.rejected_lines)

    def _predict_relations(self, doc: Document, trace: ExtractionTrace, paradigm: Paradigm) -> Tuple[List[Relation], Tuple[str, ...]]:
        if self.opts.gold_relation_prior:
            return gold_relations(doc, self.ontology), ()
        prompt = self.renderer.relation_listing(doc, self.ontology, self.opts.listing_mode, paradigm)
        record = self._call(doc, trace, prompt, RequestContext(doc_id=doc.doc_id))
        outcome = parse_relation_list(record.raw_response, self.ontology)
        self._note(record, outcome)
        return outcome.value, (record.trace_id,)

    def _facts(self, doc: Document, trace: ExtractionTrace, prompt: RenderedPrompt, context: RequestContext,
               relation: Optional[Relation], subject: Optional[str], upstream: Tuple[str, ...],
               candidates: Optional[Sequence[Relation]] = None) -> List[PredictedFact]:
        record = self._call(doc, trace, prompt, context)
        provenance = Provenance(paradigm=trace.paradigm.value, trace_ids=upstream + (record.trace_id,))
        outcome = parse_fact_list(
            record.raw_response, relation, subject, doc,
            strict=self.opts.strict_entities, candidates=candidates, provenance=provenance,
        )
        self._note(record, outcome)
        return outcome.value

    def _heads(self, doc: Document, trace: ExtractionTrace, relation: Relation,
               paradigm: Paradigm) -> Tuple[List[str], str]:
        prompt = self.renderer.head(doc, relation, self.opts.with_description, self.opts.prompt_style, paradigm)
        record = self._call(doc, trace, prompt, RequestContext(doc_id=doc.doc_id, relation=relation.name))
        outcome = parse_entity_list(record.raw_response, doc, strict=self.opts.strict_entities)
        self._note(record, outcome)
        return outcome.value, record.trace_id

    def _fact_prompt(self, doc: Document, relation: Relation, subject: Optional[str], paradigm: Paradigm) -> RenderedPrompt:
        return self.renderer.fact(doc, relation, subject, self.opts.with_description, self.opts.prompt_style, paradigm)

    # ===== Paradigms =====

    def _run_df(self, doc: Document, trace: ExtractionTrace, facts: List[PredictedFact]) -> None:
        relations = list(self.ontology.relations)
        prompt = self.renderer.listed_fact(doc, relations, self.opts.prompt_style, Paradigm.DF)
        context = RequestContext(doc_id=doc.doc_id)
        facts.extend(self._facts(doc, trace, prompt, context, None, None, (), candidates=relations))

    def _run_drsf(self, doc: Document, trace: ExtractionTrace, facts: List[PredictedFact]) -> None:
        relations, upstream = self._predict_relations(doc, trace, Paradigm.DRSF)
        if not relations:
            return
        prompt = self.renderer.listed_fact(doc, relations, self.opts.prompt_style, Paradigm.DRSF)
        context = RequestContext(doc_id=doc.doc_id, relations=tuple(r.name for r in relations))
        facts.extend(self._facts(doc, trace, prompt, context, None, None, upstream, candidates=relations))

    def _run_drf(self, doc: Document, trace: ExtractionTrace, facts: List[PredictedFact]) -> None:
        relations, upstream = self._predict_relations(doc, trace, Paradigm.DRF)
        for relation in relations:
            prompt = self._fact_prompt(doc, relation, None, Paradigm.DRF)
            context = RequestContext(doc_id=doc.doc_id, relation=relation.name)
            facts.extend(self._facts(doc, trace, prompt, context, relation, None, upstream))

    def _run_drhf(self, doc: Document, trace: ExtractionTrace, facts: List[PredictedFact]) -> None:
        relations, upstream = self._predict_relations(doc, trace, Paradigm.DRHF)
        for relation in relations:
            heads, head_trace_id = self._heads(doc, trace, relation, Paradigm.DRHF)
            for head in heads:
                prompt = self._fact_prompt(doc, relation, head, Paradigm.DRHF)
                context = RequestContext(doc_id=doc.doc_id, relation=relation.name, subject=head)
                facts.extend(self._facts(
                    doc, trace, prompt, context, relation, head, upstream + (head_trace_id,)
                ))

    def run_paradigm(self, doc: Document, paradigm: Paradigm) -> Tuple[List[PredictedFact], ExtractionTrace]:
        """
        Run one paradigm over one document

        Returns:
            (deduplicated predictions, trace)
        """
        trace = ExtractionTrace(doc_id=doc.doc_id, paradigm=paradigm)
        facts: List[PredictedFact] = []
        runner = {
            Paradigm.DF: self._run_df,
            Paradigm.DRSF: self._run_drsf,
            Paradigm.DRF: self._run_drf,
            Paradigm.DRHF: self._run_drhf,
        }[paradigm]

        try:
            runner(doc, trace, facts)
        except CallBudgetExceeded:
            trace.status = TRACE_STATUS_TRUNCATED
            trace.error = f"call budget of {self.opts.call_budget} exhausted"
            logger.warning("Document run truncated", extra={"doc_id": doc.doc_id, "call_budget": self.opts.call_budget})
        except BackendError as e:
            trace.status = TRACE_STATUS_FAILED
            trace.error = f"{type(e).__name__}: {e}"
            logger.error(
                "Document run failed",
                extra={"doc_id": doc.doc_id, "stage": e.stage, "backend_id": e.backend_id, "exception_type": type(e).__name__},
            )
            return [], trace

        return dedup_predictions(facts), trace

    # ===== Stage-level runs with gold upstream inputs =====

    def run_stage(self, doc: Document, stage: Stage) -> Tuple[StagePredictions, ExtractionTrace]:
        """
        Run one RHF stage fed with gold inputs

        Head stage receives the gold relations; fact stage receives gold
        (relation, first-mention head) pairs. Returns stage-level predictions.
        """
        trace = ExtractionTrace(doc_id=doc.doc_id, paradigm=Paradigm.DRHF)
        result = StagePredictions(doc_id=doc.doc_id, stage=stage)
        try:
            if stage is Stage.RELATION_EXTRACTION:
                prompt = self.renderer.relation_listing(doc, self.ontology, self.opts.listing_mode, Paradigm.DRHF)
                record = self._call(doc, trace, prompt, RequestContext(doc_id=doc.doc_id))
                outcome = parse_relation_list(record.raw_response, self.ontology)
                self._note(record, outcome)
                result.relations = outcome.value
            elif stage is Stage.HEAD_EXTRACTION:
                for relation in gold_relations(doc, self.ontology):
                    heads, _ = self._heads(doc, trace, relation, Paradigm.DRHF)
                    result.heads.extend((relation, head) for head in heads)
            else:
                facts: List[PredictedFact] = []
                for relation in gold_relations(doc, self.ontology):
                    for head in gold_heads(doc, relation):
                        prompt = self._fact_prompt(doc, relation, head, Paradigm.DRHF)
                        context = RequestContext(doc_id=doc.doc_id, relation=relation.name, subject=head)
                        facts.extend(self._facts(doc, trace, prompt, context, relation, head, ()))
                result.facts = dedup_predictions(facts)
        except CallBudgetExceeded:
            trace.status = TRACE_STATUS_TRUNCATED
            trace.error = f"call budget of {self.opts.call_budget} exhausted"
        except BackendError as e:
            trace.status = TRACE_STATUS_FAILED
            trace.error = f"{type(e).__name__}: {e}"
            logger.error("Stage run failed", extra={"doc_id": doc.doc_id, "stage": stage.value})
            return StagePredictions(doc_id=doc.doc_id, stage=stage), trace
        return result, trace


def run_paradigm(
    doc: Document,
    paradigm: Paradigm,
    routing: StageRouting,
    opts: ExtractionOptions,
    ontology: RelationOntology,
) -> Tuple[List[PredictedFact], ExtractionTrace]:
    return ExtractionPipeline(ontology, routing, opts).run_paradigm(doc, paradigm)


def run_stage_predictions(
    doc: Document,
    stage: Stage,
    routing: StageRouting,
    opts: ExtractionOptions,
    ontology: RelationOntology,
) -> Tuple[StagePredictions, ExtractionTrace]:
    return ExtractionPipeline(ontology, routing, opts).run_stage(doc, stage)
