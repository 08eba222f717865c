"""
Corpus models: mentions, entities, gold facts and documents

Values are frozen; processing steps return new Document instances.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple


@dataclass(frozen=True)
class Mention:
    """One surface occurrence of an entity"""
    text: str
    sent_id: int
    start: int
    end: int
    entity_type: str = ""


@dataclass(frozen=True)
class Entity:
    """An entity as a non-empty set of aliased mentions"""
    mentions: Tuple[Mention, ...]

    @property
    def first_mention(self) -> str:
        """Canonical surface form used by the oracle and the tuning generator"""
        return self.mentions[0].text

    @property
    def aliases(self) -> Tuple[str, ...]:
        """Distinct mention texts in first-occurrence order"""
        return tuple(dict.fromkeys(m.text for m in self.mentions))

    @property
    def entity_type(self) -> str:
        return self.mentions[0].entity_type


@dataclass(frozen=True)
class GoldFact:
    """Gold triple over entity indices"""
    head_idx: int
    relation_id: str
    tail_idx: int
    evidence: Tuple[int, ...] = ()

    @property
    def key(self) -> Tuple[int, str, int]:
        return (self.head_idx, self.relation_id, self.tail_idx)


@dataclass(frozen=True)
class Document:
    """Tokenized document with entities and gold facts"""
    doc_id: str
    sentences: Tuple[Tuple[str, ...], ...]
    entities: Tuple[Entity, ...]
    gold_facts: Tuple[GoldFact, ...] = ()
    title: Optional[str] = None
    text: str = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        # Tokens joined with single spaces, sentences joined with single spaces
        joined = " ".join(" ".join(tokens) for tokens in self.sentences)
        object.__setattr__(self, "text", joined)

    @property
    def gold_relation_ids(self) -> List[str]:
        """Distinct relation ids with at least one gold fact, in first-occurrence order"""
        return list(dict.fromkeys(f.relation_id for f in self.gold_facts))

    def facts_by_relation(self) -> Dict[str, List[GoldFact]]:
        grouped: Dict[str, List[GoldFact]] = {}
        for fact in self.gold_facts:
            grouped.setdefault(fact.relation_id, []).append(fact)
        return grouped


@dataclass(frozen=True)
class CorpusStats:
    """Corpus-level counts"""
    n_documents: int = 0
    n_gold_facts: int = 0
    n_distinct_relations: int = 0
    max_facts_per_doc: int = 0
    max_relations_per_doc: int = 0

    def to_dict(self) -> dict:
        return {
            "n_documents": self.n_documents,
            "n_gold_facts": self.n_gold_facts,
            "n_distinct_relations": self.n_distinct_relations,
            "max_facts_per_doc": self.max_facts_per_doc,
            "max_relations_per_doc": self.max_relations_per_doc,
        }
