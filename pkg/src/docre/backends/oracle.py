"""
Gold-answering oracle backend

Answers stage prompts from gold annotations exactly as a perfect model would under
the stage's output format. The same canonical answers are the gold completions of
the instruction-tuning samples, so generator and oracle stay consistent:

    relation stage  relation names sorted by name, one per line ("no relation" if none)
    head stage      distinct first-mention texts of gold heads, sorted, one per line
    fact stage      "[head, relation, tail]" lines in gold order, first-mention texts
"""
import logging
from typing import Iterable, List, Optional, Sequence

from src.docre.constants import BACKEND_ID_ORACLE, NO_RELATION_SENTINEL
from src.docre.exceptions import OracleContextError
from src.docre.models.document import Document
from src.docre.models.extraction import Stage
from src.docre.models.ontology import Relation, RelationOntology
from src.docre.nlp.prompt_renderer import format_fact
from src.docre.backends.base import BackendResponse, ChatBackend, ChatRequest, RequestContext

logger = logging.getLogger(__name__)


def gold_relations(doc: Document, ontology: RelationOntology) -> List[Relation]:
    """Relations with at least one gold fact, sorted by name"""
    relations = [ontology.by_id[rid] for rid in doc.gold_relation_ids if rid in ontology.by_id]
    return sorted(relations, key=lambda r: r.name)


def gold_heads(doc: Document, relation: Relation) -> List[str]:
    """Distinct first-mention texts of the gold heads of one relation, sorted"""
    heads = {
        doc.entities[f.head_idx].first_mention
        for f in doc.gold_facts
        if f.relation_id == relation.id
    }
    return sorted(heads)


def gold_fact_lines(
    doc: Document,
    relations: Sequence[Relation],
    subject: Optional[str] = None,
) -> List[str]:
    """Deduplicated fact lines for the given relations, optionally for one head text"""
    names = {r.id: r.name for r in relations}
    lines = []
    for fact in doc.gold_facts:
        if fact.relation_id not in names:
            continue
        head = doc.entities[fact.head_idx].first_mention
        if subject is not None and head.strip() != subject.strip():
            continue
        lines.append(format_fact(head, names[fact.relation_id], doc.entities[fact.tail_idx].first_mention))
    return list(dict.fromkeys(lines))


def colliding_gold_facts(doc: Document, ontology: RelationOntology) -> int:
    """
    Gold facts whose first-mention fact line repeats an earlier fact's line

    Entities sharing a first mention render identical lines, so the oracle can
    credit only one gold fact per distinct line; this is the recall it must lose.
    """
    lines = gold_fact_lines(doc, list(ontology.relations))
    rendered = sum(1 for f in doc.gold_facts if f.relation_id in ontology.by_id)
    return rendered - len(lines)


def _resolve(name: str, ontology: RelationOntology) -> Relation:
    relation = ontology.get(name)
    if relation is None:
        raise OracleContextError(f"Unknown relation in oracle context: {name}")
    return relation


def oracle_answer(doc: Document, stage: Stage, context: RequestContext, ontology: RelationOntology) -> str:
    """
    The response a perfect model gives for one stage prompt

    Raises:
        OracleContextError: context misses a field the stage needs, or names an unknown relation
    """
    if stage is Stage.RELATION_EXTRACTION:
        relations = gold_relations(doc, ontology)
        if not relations:
            return NO_RELATION_SENTINEL
        return "\n".join(r.name for r in relations)

    if stage is Stage.HEAD_EXTRACTION:
        if not context.relation:
            raise OracleContextError("Head-stage oracle request needs a relation", stage=stage.value)
        return "\n".join(gold_heads(doc, _resolve(context.relation, ontology)))

    if context.relation:
        relations = [_resolve(context.relation, ontology)]
    elif context.relations is not None:
        relations = [_resolve(name, ontology) for name in context.relations]
    else:
        relations = list(ontology.relations)
    return "\n".join(gold_fact_lines(doc, relations, context.subject))


class OracleBackend(ChatBackend):
    """Backend answering from the gold annotations of a fixed document set"""

    def __init__(self, docs: Iterable[Document], ontology: RelationOntology):
        self.docs = {doc.doc_id: doc for doc in docs}
        self.ontology = ontology

    @property
    def backend_id(self) -> str:
        return BACKEND_ID_ORACLE

    def complete(self, request: ChatRequest, model: Optional[str] = None) -> BackendResponse:
        context = request.context
        if context is None:
            raise OracleContextError("Oracle request carries no context", stage=request.stage.value)
        doc = self.docs.get(context.doc_id)
        if doc is None:
            raise OracleContextError(f"Oracle has no document {context.doc_id}", stage=request.stage.value)
        text = oracle_answer(doc, request.stage, context, self.ontology)
        return BackendResponse(text=text, backend_id=self.backend_id)
