"""
Corpus Ingestion Service

Parses DocRED / Re-DocRED release files into Document values and writes them back
in the same format.

File format (UTF-8 JSON array), one element per document:
    title      string
    sents      array of token arrays
    vertexSet  array of entities; each an array of mentions
               {"name", "sent_id", "pos": [start, end), "type"}
    labels     array of {"h", "t", "r", "evidence"}
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

from pydantic import ValidationError

from src.docre.exceptions import CorpusFormatError
from src.docre.models.document import Document, Entity, GoldFact, Mention
from src.docre.models.ontology import RelationOntology
from src.docre.schemas import DocumentRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SkippedLabel:
    """A label dropped in lenient mode because its relation code is unknown"""
    doc_id: str
    ordinal: int
    label_index: int
    relation_id: str


def _field_path(error: ValidationError) -> str:
    first = error.errors()[0]
    return ".".join(str(part) for part in first.get("loc", ()))


def _build_document(
    ordinal: int,
    record: DocumentRecord,
    doc_id: str,
    ontology: RelationOntology,
    strict: bool,
    skipped: List[SkippedLabel],
) -> Document:
    sentences = tuple(tuple(tokens) for tokens in record.sents)

    entities = []
    for e_idx, mentions in enumerate(record.vertexSet):
        if not mentions:
            raise CorpusFormatError("entity has no mentions", ordinal, f"vertexSet.{e_idx}")
        built = []
        for m_idx, m in enumerate(mentions):
            path = f"vertexSet.{e_idx}.{m_idx}"
            if not m.name.strip():
                raise CorpusFormatError("mention text is empty", ordinal, path)
            if m.sent_id >= len(sentences):
                raise CorpusFormatError(
                    f"mention '{m.name}' references sentence {m.sent_id} "
                    f"but the document has {len(sentences)}",
                    ordinal,
                    f"{path}.sent_id",
                )
            start, end = m.pos
            sent_len = len(sentences[m.sent_id])
            if not (0 <= start < end <= sent_len):
                raise CorpusFormatError(
                    f"mention '{m.name}' span [{start}, {end}) out of range for sentence "
                    f"{m.sent_id} of length {sent_len}",
                    ordinal,
                    f"{path}.pos",
                )
            built.append(Mention(text=m.name, sent_id=m.sent_id, start=start, end=end, entity_type=m.type))
        entities.append(Entity(mentions=tuple(built)))

    facts = []
    for l_idx, label in enumerate(record.labels):
        path = f"labels.{l_idx}"
        if label.h >= len(entities) or label.t >= len(entities):
            raise CorpusFormatError(
                f"entity index out of range (h={label.h}, t={label.t}, entities={len(entities)})",
                ordinal,
                path,
            )
        if label.h == label.t:
            raise CorpusFormatError(f"head and tail are the same entity ({label.h})", ordinal, path)
        if label.r not in ontology.by_id:
            if strict:
                raise CorpusFormatError(f"unknown relation code '{label.r}'", ordinal, f"{path}.r")
            skipped.append(SkippedLabel(doc_id, ordinal, l_idx, label.r))
            continue
        facts.append(GoldFact(
            head_idx=label.h,
            relation_id=label.r,
            tail_idx=label.t,
            evidence=tuple(label.evidence),
        ))

    return Document(
        doc_id=doc_id,
        title=record.title or None,
        sentences=sentences,
        entities=tuple(entities),
        gold_facts=tuple(facts),
    )


def parse_corpus_with_report(
    source: Union[str, Path, Sequence[Dict[str, Any]]],
    ontology: RelationOntology,
    strict: bool = True,
) -> Tuple[List[Document], List[SkippedLabel]]:
    """
    Parse a corpus file (or already-decoded JSON array)

    Args:
        source: Path to the JSON array file, or the decoded array itself
        ontology: Active relation ontology
        strict: Reject unknown relation codes; when False they are skipped and reported

    Returns:
        (documents in file order, skipped labels)

    Raises:
        CorpusFormatError: malformed record or out-of-range span
    """
    if isinstance(source, (str, Path)):
        try:
            raw = json.loads(Path(source).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise CorpusFormatError(f"invalid JSON: {e}") from e
    else:
        raw = source

    if not isinstance(raw, list):
        raise CorpusFormatError("top-level value must be a JSON array")

    documents: List[Document] = []
    skipped: List[SkippedLabel] = []
    title_counts: Dict[str, int] = {}

    for ordinal, item in enumerate(raw):
        try:
            record = DocumentRecord.model_validate(item)
        except ValidationError as e:
            raise CorpusFormatError(str(e.errors()[0].get("msg")), ordinal, _field_path(e)) from e

        # doc_id is the title; repeated titles get an ordinal suffix
        base = record.title or f"doc-{ordinal}"
        seen = title_counts.get(base, 0) + 1
        title_counts[base] = seen
        doc_id = base if seen == 1 else f"{base}#{seen}"

        documents.append(_build_document(ordinal, record, doc_id, ontology, strict, skipped))

    if skipped:
        logger.warning("Skipped labels with unknown relation codes", extra={"count": len(skipped)})
    logger.info("Corpus parsed", extra={"documents": len(documents)})
    return documents, skipped


def parse_corpus(
    source: Union[str, Path, Sequence[Dict[str, Any]]],
    ontology: RelationOntology,
    strict: bool = True,
) -> List[Document]:
    """Parse a corpus, discarding the skipped-labels report"""
    documents, _ = parse_corpus_with_report(source, ontology, strict=strict)
    return documents


def document_to_record(doc: Document) -> Dict[str, Any]:
    """Serialize one Document into the release record format"""
    return {
        "title": doc.title or "",
        "sents": [list(tokens) for tokens in doc.sentences],
        "vertexSet": [
            [
                {"name": m.text, "sent_id": m.sent_id, "pos": [m.start, m.end], "type": m.entity_type}
                for m in entity.mentions
            ]
            for entity in doc.entities
        ],
        "labels": [
            {"h": f.head_idx, "t": f.tail_idx, "r": f.relation_id, "evidence": list(f.evidence)}
            for f in doc.gold_facts
        ],
    }


def write_corpus(docs: Sequence[Document], path: Union[str, Path]) -> Path:
    """Write documents as a release-format JSON array"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps([document_to_record(d) for d in docs], ensure_ascii=False),
        encoding="utf-8",
    )
    return path
