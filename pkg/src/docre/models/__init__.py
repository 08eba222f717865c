"""
Domain models for relations, documents and extraction runs
"""
from .ontology import Relation, RelationOntology
from .document import Mention, Entity, GoldFact, Document, CorpusStats
from .extraction import (
    Stage,
    Paradigm,
    PromptStyle,
    ListingMode,
    RenderedPrompt,
    ParseOutcome,
    Provenance,
    PredictedFact,
    StageRecord,
    ExtractionTrace,
    StagePredictions,
)

__all__ = [
    "Relation",
    "RelationOntology",
    "Mention",
    "Entity",
    "GoldFact",
    "Document",
    "CorpusStats",
    "Stage",
    "Paradigm",
    "PromptStyle",
    "ListingMode",
    "RenderedPrompt",
    "ParseOutcome",
    "Provenance",
    "PredictedFact",
    "StageRecord",
    "ExtractionTrace",
    "StagePredictions",
]
