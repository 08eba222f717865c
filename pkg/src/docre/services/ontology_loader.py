"""
Ontology Loading Service

Loads the closed relation inventory from its YAML file, validates uniqueness and
inverse-pair symmetry, and provides exact lookups.

Usage:
    from src.docre.services.ontology_loader import load_ontology, resolve

    ontology = load_ontology("data/ontology/redocred_relations.yaml")
    relation = resolve("country of citizenship", ontology)
"""
import logging
from collections import Counter
from pathlib import Path
from typing import Optional, Union

import yaml
from pydantic import ValidationError

from src.docre.exceptions import OntologyValidationError
from src.docre.models.ontology import Relation, RelationOntology
from src.docre.schemas import DescriptionOverlay, OntologyFile

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def parse_ontology(text: str, require_descriptions: bool = True) -> RelationOntology:
    """
    Parse and validate an ontology document given as YAML text

    Args:
        text: YAML document with a top-level "relations" list
        require_descriptions: Reject relations with an empty description

    Returns:
        Validated RelationOntology

    Raises:
        OntologyValidationError: on schema, uniqueness or inverse-symmetry violations
    """
    try:
        data = yaml.safe_load(text) or {}
        parsed = OntologyFile.model_validate(data)
    except yaml.YAMLError as e:
        raise OntologyValidationError(f"Ontology is not valid YAML: {e}") from e
    except ValidationError as e:
        raise OntologyValidationError(f"Ontology schema violation: {e}") from e

    relations = tuple(
        Relation(
            id=r.id,
            name=r.name,
            description=r.description.strip(),
            inverse_id=r.inverse_id,
            symmetric=r.symmetric,
        )
        for r in parsed.relations
    )
    ontology = RelationOntology(relations=relations)
    validate_ontology(ontology, require_descriptions=require_descriptions)
    return ontology


def validate_ontology(ontology: RelationOntology, require_descriptions: bool = True) -> None:
    """Check every ontology invariant, raising on the first violated family"""
    names = Counter(r.name.lower() for r in ontology.relations)
    duplicate_names = [n for n, c in names.items() if c > 1]
    if duplicate_names:
        raise OntologyValidationError(
            f"Duplicate relation name(s): {', '.join(duplicate_names)}", duplicate_names
        )

    ids = Counter(r.id for r in ontology.relations)
    duplicate_ids = [i for i, c in ids.items() if c > 1]
    if duplicate_ids:
        raise OntologyValidationError(
            f"Duplicate relation id(s): {', '.join(duplicate_ids)}", duplicate_ids
        )

    if require_descriptions:
        missing = [r.name for r in ontology.relations if not r.description]
        if missing:
            raise OntologyValidationError(
                f"Relation(s) without description: {', '.join(missing)}", missing
            )

    for relation in ontology.relations:
        if relation.inverse_id is None:
            if relation.symmetric:
                raise OntologyValidationError(
                    f"Symmetric relation {relation.id} must declare itself as inverse_id",
                    [relation.id],
                )
            continue
        if relation.inverse_id == relation.id:
            if not relation.symmetric:
                raise OntologyValidationError(
                    f"Relation {relation.id} is its own inverse but is not flagged symmetric",
                    [relation.id],
                )
            continue
        partner = ontology.by_id.get(relation.inverse_id)
        if partner is None or partner.inverse_id != relation.id:
            raise OntologyValidationError(
                f"Asymmetric inverse pair: {relation.id} -> {relation.inverse_id}, "
                f"but {relation.inverse_id} -> {partner.inverse_id if partner else 'missing'}",
                [relation.id, relation.inverse_id],
            )


def load_ontology(source: PathLike, require_descriptions: bool = True) -> RelationOntology:
    """Load and validate an ontology file"""
    path = Path(source)
    ontology = parse_ontology(path.read_text(encoding="utf-8"), require_descriptions)
    logger.info("Ontology loaded", extra={"path": str(path), "relations": len(ontology)})
    return ontology


def dump_ontology(ontology: RelationOntology) -> str:
    """Serialize an ontology back to the YAML file format"""
    records = []
    for r in ontology.relations:
        record = {"id": r.id, "name": r.name, "description": r.description}
        if r.inverse_id is not None:
            record["inverse_id"] = r.inverse_id
        if r.symmetric:
            record["symmetric"] = True
        records.append(record)
    return yaml.safe_dump(
        {"relations": records}, sort_keys=False, allow_unicode=True, width=10_000
    )


def resolve(name_or_id: str, ontology: RelationOntology) -> Optional[Relation]:
    """Exact lookup by id or (case-insensitive) name; None when not found"""
    return ontology.get(name_or_id)


def inverse_of(relation: Relation, ontology: RelationOntology) -> Optional[Relation]:
    """The declared reciprocal relation, or None"""
    if relation.inverse_id is None:
        return None
    return ontology.by_id.get(relation.inverse_id)


def load_description_overlay(source: PathLike, ontology: RelationOntology) -> RelationOntology:
    """
    Return a copy of the ontology whose descriptions come from an overlay file

    Relations absent from the overlay get an empty description, so the overlay
    fully determines which descriptions are shown.
    """
    data = yaml.safe_load(Path(source).read_text(encoding="utf-8")) or {}
    try:
        overlay = DescriptionOverlay.model_validate(data)
    except ValidationError as e:
        raise OntologyValidationError(f"Description overlay schema violation: {e}") from e

    by_relation_id = {}
    for key, description in overlay.descriptions.items():
        relation = ontology.get(key)
        if relation is None:
            raise OntologyValidationError(f"Overlay names unknown relation: {key}", [key])
        by_relation_id[relation.id] = description.strip()

    relations = tuple(
        Relation(
            id=r.id,
            name=r.name,
            description=by_relation_id.get(r.id, ""),
            inverse_id=r.inverse_id,
            symmetric=r.symmetric,
        )
        for r in ontology.relations
    )
    return RelationOntology(relations=relations)
