"""
Response parsing: model free text back into typed stage values

Every non-blank response line ends up either accepted or in
ParseOutcome.rejected_lines with a reason; nothing here raises on bad model output.

Relation names match case-insensitively (closed vocabulary); entity text is
case-sensitive. Fact lines are split by anchoring on the relation name, so
entity names may contain commas:

    [Harvard University, located in the administrative territorial entity, Cambridge, Massachusetts]
    -> head "Harvard University", tail "Cambridge, Massachusetts"
"""
import logging
import re
from typing import Iterator, List, Optional, Pattern, Sequence, Tuple

from src.docre.constants import (
    NO_ENTITY_SENTINEL,
    NO_RELATION_SENTINEL,
    PATTERN_LINE_BULLET,
    REJECT_AMBIGUOUS_RELATION,
    REJECT_ANCHOR_MISSING,
    REJECT_DUPLICATE,
    REJECT_EMPTY_ENTITY,
    REJECT_NOT_BRACKETED,
    REJECT_NOT_IN_ONTOLOGY,
    REJECT_NOT_IN_PASSAGE,
    REJECT_SUBJECT_MISMATCH,
)
from src.docre.models.document import Document
from src.docre.models.extraction import ParseOutcome, PredictedFact, Provenance
from src.docre.models.ontology import Relation, RelationOntology

logger = logging.getLogger(__name__)

_BULLET = re.compile(PATTERN_LINE_BULLET)
_BRACKETED = re.compile(r"^\[(.*)\]$", re.DOTALL)
_SENTINELS = {NO_RELATION_SENTINEL, NO_ENTITY_SENTINEL}


def _lines(raw: str) -> Iterator[str]:
    for line in (raw or "").splitlines():
        yield line


def _strip_bullet(line: str) -> str:
    return _BULLET.sub("", line, count=1).strip()


def _is_sentinel(text: str) -> bool:
    return text.strip().rstrip(".").lower() in _SENTINELS


def _reject(outcome: ParseOutcome, line: str, reason: str) -> None:
    outcome.rejected_lines.append((line, reason))
    logger.debug("Rejected response line", extra={"response_line": line, "reason": reason})


def _anchor(relation: Relation) -> Pattern:
    return re.compile(r"\s*,\s*" + re.escape(relation.name) + r"\s*,\s*", re.IGNORECASE)


def parse_relation_list(raw: str, ontology: RelationOntology) -> ParseOutcome[List[Relation]]:
    """
    One relation name per line; bullets and numbering stripped

    "no relation" yields an empty value. Unknown names are rejected, never mapped
    to a close synonym.
    """
    outcome: ParseOutcome[List[Relation]] = ParseOutcome(value=[], raw=raw or "")
    seen = set()

    for line in _lines(raw):
        if not line.strip():
            outcome.blank_lines += 1
            continue
        text = _strip_bullet(line)
        if _is_sentinel(text):
            outcome.accepted_lines += 1
            continue

        relation = ontology.by_name.get(text.lower())
        if relation is None:
            _reject(outcome, line, REJECT_NOT_IN_ONTOLOGY)
            continue
        if relation.id in seen:
            _reject(outcome, line, REJECT_DUPLICATE)
            continue
        seen.add(relation.id)
        outcome.value.append(relation)
        outcome.accepted_lines += 1

    return outcome


def parse_entity_list(raw: str, doc: Document, strict: bool = False) -> ParseOutcome[List[str]]:
    """
    One entity per line

    Args:
        raw: Model response
        doc: Source document (substring checks)
        strict: Reject entities that do not occur in the document text
    """
    outcome: ParseOutcome[List[str]] = ParseOutcome(value=[], raw=raw or "")
    seen = set()

    for line in _lines(raw):
        if not line.strip():
            outcome.blank_lines += 1
            continue
        # Keep a leading "1." when it is part of a name that occurs in the passage
        trimmed = line.strip()
        text = trimmed if trimmed in doc.text else _strip_bullet(line)
        if _is_sentinel(text):
            outcome.accepted_lines += 1
            continue
        if not text:
            _reject(outcome, line, REJECT_EMPTY_ENTITY)
            continue
        if strict and text not in doc.text:
            _reject(outcome, line, REJECT_NOT_IN_PASSAGE)
            continue
        if text in seen:
            _reject(outcome, line, REJECT_DUPLICATE)
            continue
        seen.add(text)
        outcome.value.append(text)
        outcome.accepted_lines += 1

    return outcome


def _split_on(inner: str, pattern: Pattern, fixed_subject: Optional[str]) -> Optional[Tuple[str, str]]:
    matches = list(pattern.finditer(inner))
    if not matches:
        return None
    chosen = matches[0]
    if fixed_subject is not None:
        for m in matches:
            if inner[: m.start()].strip() == fixed_subject:
                chosen = m
                break
    return inner[: chosen.start()].strip(), inner[chosen.end():].strip()


def parse_fact_list(
    raw: str,
    relation: Optional[Relation],
    fixed_subject: Optional[str],
    doc: Document,
    strict: bool = False,
    candidates: Optional[Sequence[Relation]] = None,
    provenance: Provenance = Provenance(),
) -> ParseOutcome[List[PredictedFact]]:
    """
    Parse "[head, relation, tail]" lines

    Args:
        raw: Model response
        relation: The prompted relation; None when the prompt listed several
        fixed_subject: Required head text (RHF fact stage)
        doc: Source document
        strict: Require head and tail to occur in the document text
        candidates: Anchor relations tried when relation is None; exactly one must match
        provenance: Attached to every produced fact

    Returns:
        ParseOutcome whose value holds facts in response order, deduplicated
    """
    if relation is None and not candidates:
        raise ValueError("parse_fact_list needs a relation or candidate relations")

    anchors = [(relation, _anchor(relation))] if relation is not None else [
        (r, _anchor(r)) for r in candidates
    ]
    subject = fixed_subject.strip() if fixed_subject is not None else None

    outcome: ParseOutcome[List[PredictedFact]] = ParseOutcome(value=[], raw=raw or "")
    seen = set()

    for line in _lines(raw):
        if not line.strip():
            outcome.blank_lines += 1
            continue
        text = _strip_bullet(line)
        if _is_sentinel(text):
            outcome.accepted_lines += 1
            continue

        bracketed = _BRACKETED.match(text.rstrip(" .,;"))
        if not bracketed:
            _reject(outcome, line, REJECT_NOT_BRACKETED)
            continue
        inner = bracketed.group(1)

        hits = []
        for rel, pattern in anchors:
            split = _split_on(inner, pattern, subject)
            if split is not None:
                hits.append((rel, split))
        if not hits:
            _reject(outcome, line, REJECT_ANCHOR_MISSING)
            continue
        if len(hits) > 1:
            _reject(outcome, line, REJECT_AMBIGUOUS_RELATION)
            continue

        matched, (head, tail) = hits[0]
        if not head or not tail:
            _reject(outcome, line, REJECT_EMPTY_ENTITY)
            continue
        if subject is not None and head != subject:
            _reject(outcome, line, REJECT_SUBJECT_MISMATCH)
            continue
        if strict and (head not in doc.text or tail not in doc.text):
            _reject(outcome, line, REJECT_NOT_IN_PASSAGE)
            continue

        key = (head, matched.id, tail)
        if key in seen:
            _reject(outcome, line, REJECT_DUPLICATE)
            continue
        seen.add(key)
        outcome.value.append(PredictedFact(
            doc_id=doc.doc_id,
            head_text=head,
            relation=matched,
            tail_text=tail,
            provenance=provenance,
        ))
        outcome.accepted_lines += 1

    return outcome
