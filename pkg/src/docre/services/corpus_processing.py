"""
Corpus processing steps: duplicate removal, reciprocal-relation consistency, statistics

Gold facts are keyed on entity indices, not surface strings. Inverse fixing is
meant for training-data generation only; evaluation gold is never adjusted.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

from src.docre.models.document import CorpusStats, Document, GoldFact
from src.docre.models.ontology import RelationOntology

logger = logging.getLogger(__name__)


def dedup_facts(doc: Document) -> Tuple[Document, int]:
    """
    Remove duplicate (head_idx, relation_id, tail_idx) facts

    Returns:
        (document with first occurrences kept in order, number removed)
    """
    seen = set()
    kept: List[GoldFact] = []
    for fact in doc.gold_facts:
        if fact.key in seen:
            continue
        seen.add(fact.key)
        kept.append(fact)

    removed = len(doc.gold_facts) - len(kept)
    if removed == 0:
        return doc, 0
    return replace(doc, gold_facts=tuple(kept)), removed


@dataclass(frozen=True)
class MissingInverse:
    """A fact (h, r, t) whose reciprocal (t, r', h) is absent"""
    head_idx: int
    relation_id: str
    tail_idx: int
    inverse_id: str


@dataclass
class InverseReport:
    doc_id: str
    missing: List[MissingInverse] = field(default_factory=list)
    added: int = 0
    adjusted: Optional[Document] = None

    @property
    def is_consistent(self) -> bool:
        return not self.missing


def check_inverse_consistency(doc: Document, ontology: RelationOntology, fix: bool = False) -> InverseReport:
    """
    Report facts whose declared reciprocal fact is missing

    Args:
        doc: Document to check
        ontology: Ontology declaring the inverse pairs
        fix: Append the missing reciprocal facts (deduplicated) to an adjusted copy

    Returns:
        InverseReport; report.adjusted is set only when fix is True
    """
    report = InverseReport(doc_id=doc.doc_id)
    present = {f.key for f in doc.gold_facts}

    for fact in doc.gold_facts:
        relation = ontology.by_id.get(fact.relation_id)
        if relation is None or relation.inverse_id is None:
            continue
        reciprocal = (fact.tail_idx, relation.inverse_id, fact.head_idx)
        if reciprocal not in present:
            report.missing.append(MissingInverse(
                head_idx=fact.head_idx,
                relation_id=fact.relation_id,
                tail_idx=fact.tail_idx,
                inverse_id=relation.inverse_id,
            ))

    if fix:
        added = []
        added_keys = set()
        for miss in report.missing:
            key = (miss.tail_idx, miss.inverse_id, miss.head_idx)
            if key in added_keys:
                continue
            added_keys.add(key)
            added.append(GoldFact(head_idx=miss.tail_idx, relation_id=miss.inverse_id, tail_idx=miss.head_idx))
        report.added = len(added)
        report.adjusted = replace(doc, gold_facts=doc.gold_facts + tuple(added)) if added else doc

    return report


def corpus_stats(docs: Sequence[Document]) -> CorpusStats:
    """Aggregate document, fact and relation counts"""
    if not docs:
        return CorpusStats()

    relations = set()
    max_facts = 0
    max_relations = 0
    total_facts = 0
    for doc in docs:
        doc_relations = set(doc.gold_relation_ids)
        relations.update(doc_relations)
        total_facts += len(doc.gold_facts)
        max_facts = max(max_facts, len(doc.gold_facts))
        max_relations = max(max_relations, len(doc_relations))

    return CorpusStats(
        n_documents=len(docs),
        n_gold_facts=total_facts,
        n_distinct_relations=len(relations),
        max_facts_per_doc=max_facts,
        max_relations_per_doc=max_relations,
    )


def process_corpus(
    docs: Sequence[Document],
    ontology: RelationOntology,
    fix_inverses: bool = False,
) -> Tuple[List[Document], dict]:
    """
    Apply deduplication and (optionally) inverse fixing to every document

    Returns:
        (processed documents, counters {duplicates_removed, inverse_missing, inverse_added})
    """
    processed = []
    counters = {"duplicates_removed": 0, "inverse_missing": 0, "inverse_added": 0}
    for doc in docs:
        doc, removed = dedup_facts(doc)
        counters["duplicates_removed"] += removed
        report = check_inverse_consistency(doc, ontology, fix=fix_inverses)
        counters["inverse_missing"] += len(report.missing)
        if fix_inverses:
            counters["inverse_added"] += report.added
            doc = report.adjusted
        processed.append(doc)

    logger.info("Corpus processed", extra=counters)
    return processed, counters
