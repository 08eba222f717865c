"""
Relation inventory models

A RelationOntology is immutable after construction and safe to share across
threads. Lookups by name are case-insensitive because relation names form a
closed controlled vocabulary; ids are matched exactly.
"""
from dataclasses import dataclass, field
from typing import Dict, Iterator, Optional, Tuple


@dataclass(frozen=True)
class Relation:
    """A relation type: knowledge-base code, display name and rewritten description"""
    id: str
    name: str
    description: str = ""
    inverse_id: Optional[str] = None
    symmetric: bool = False

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class RelationOntology:
    """Ordered, validated collection of relations with by-name / by-id indices"""
    relations: Tuple[Relation, ...]
    by_name: Dict[str, Relation] = field(init=False, repr=False, compare=False)
    by_id: Dict[str, Relation] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        # Indices are derived; validation of uniqueness happens in the loader
        object.__setattr__(self, "by_name", {r.name.lower(): r for r in self.relations})
        object.__setattr__(self, "by_id", {r.id: r for r in self.relations})

    def __len__(self) -> int:
        return len(self.relations)

    def __iter__(self) -> Iterator[Relation]:
        return iter(self.relations)

    def __contains__(self, relation: object) -> bool:
        return isinstance(relation, Relation) and self.by_id.get(relation.id) == relation

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(r.name for r in self.relations)

    def get(self, name_or_id: str) -> Optional[Relation]:
        """Exact id match first, then case-insensitive name match"""
        if name_or_id is None:
            return None
        key = name_or_id.strip()
        return self.by_id.get(key) or self.by_name.get(key.lower())

    @property
    def inverse_pairs(self) -> Tuple[Tuple[str, str], ...]:
        return tuple(
            (r.id, r.inverse_id) for r in self.relations if r.inverse_id is not None
        )
