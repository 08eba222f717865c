"""
Evaluation Service

Strict micro-F1 with alias semantics:
- A prediction is correct when its relation equals a gold fact's relation and its
  head / tail texts are aliases (mention texts) of the gold head / tail entity.
- Each gold fact is credited at most once. Predictions are credited greedily in
  order, each to the first uncredited gold fact it fits.
- A correct prediction whose gold facts are all credited already is a duplicate
  hit: neither TP nor FP. Everything else that matches nothing is FP.

Alias comparison is exact after NFC normalization and trimming; no case folding.
Percentages are kept at full precision and rounded to 2 decimals only for display.
"""
import json
import logging
import unicodedata
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import pandas as pd
from pydantic import ValidationError

from src.docre.exceptions import EvaluationError, UnknownDocumentError
from src.docre.models.document import Document
from src.docre.models.extraction import PredictedFact, Provenance, Stage, StagePredictions
from src.docre.models.ontology import RelationOntology
from src.docre.schemas import AuditFile, EvalReport, PredictionRecord, ScoreRow

logger = logging.getLogger(__name__)

# (head text, relation id or None when unresolved, tail text)
Triple = Tuple[str, Optional[str], str]


def normalize(text: str) -> str:
    return unicodedata.normalize("NFC", text).strip()


@dataclass
class MatchResult:
    tp: int = 0
    fp: int = 0
    duplicate_hits: int = 0
    matched_gold: Set[int] = field(default_factory=set)
    # relation key -> [tp, fp, duplicate_hits]
    by_relation: Dict[str, List[int]] = field(default_factory=lambda: defaultdict(lambda: [0, 0, 0]))

    @property
    def n_predictions(self) -> int:
        return self.tp + self.fp + self.duplicate_hits

    def add(self, other: "MatchResult") -> None:
        self.tp += other.tp
        self.fp += other.fp
        self.duplicate_hits += other.duplicate_hits
        for key, counts in other.by_relation.items():
            mine = self.by_relation[key]
            for i in range(3):
                mine[i] += counts[i]


def _alias_sets(doc: Document) -> List[Set[str]]:
    return [{normalize(a) for a in entity.aliases} for entity in doc.entities]


def shared_aliases(doc: Document) -> Set[str]:
    """Normalized alias texts belonging to more than one entity of the document"""
    seen: Set[str] = set()
    shared: Set[str] = set()
    for aliases in _alias_sets(doc):
        shared.update(aliases & seen)
        seen.update(aliases)
    return shared


def _match_triples(triples: Iterable[Triple], doc: Document, relation_keys: Sequence[str]) -> MatchResult:
    aliases = _alias_sets(doc)
    result = MatchResult()
    for (head, relation_id, tail), key in zip(triples, relation_keys):
        head, tail = normalize(head), normalize(tail)
        fits = [
            i for i, g in enumerate(doc.gold_facts)
            if relation_id is not None
            and g.relation_id == relation_id
            and head in aliases[g.head_idx]
            and tail in aliases[g.tail_idx]
        ]
        counts = result.by_relation[key]
        if not fits:
            result.fp += 1
            counts[1] += 1
            continue
        free = next((i for i in fits if i not in result.matched_gold), None)
        if free is None:
            result.duplicate_hits += 1
            counts[2] += 1
            continue
        result.matched_gold.add(free)
        result.tp += 1
        counts[0] += 1
    return result


def match_document(preds: Sequence[PredictedFact], doc: Document) -> MatchResult:
    """Match one document's predictions against its gold facts"""
    foreign = {p.doc_id for p in preds if p.doc_id != doc.doc_id}
    if foreign:
        raise EvaluationError(f"Predictions for other documents passed to {doc.doc_id}: {sorted(foreign)}")
    triples = [(p.head_text, p.relation.id, p.tail_text) for p in preds]
    return _match_triples(triples, doc, [p.relation.id for p in preds])


def micro_f1(tp: int, fp: int, total_gold: int) -> Tuple[float, float, float]:
    """
    (recall %, precision %, F1 %) at full precision; 0/0 counts as 0

    >>> [round(x, 2) for x in micro_f1(735, 3824, 17448)]
    [4.21, 16.12, 6.68]
    """
    if tp < 0 or fp < 0 or total_gold < 0:
        raise ValueError("counts must be non-negative")
    recall = 100.0 * tp / total_gold if total_gold else 0.0
    precision = 100.0 * tp / (tp + fp) if tp + fp else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return recall, precision, f1


def score_row(name: str, tp: int, fp: int, gold: int, duplicate_hits: int = 0, calls: Optional[int] = None) -> ScoreRow:
    recall, precision, f1 = micro_f1(tp, fp, gold)
    return ScoreRow(
        name=name, tp=tp, fp=fp, gold=gold,
        recall=recall, precision=precision, f1=f1,
        duplicate_hits=duplicate_hits, calls=calls,
    )


def _index(corpus: Sequence[Document]) -> Dict[str, Document]:
    return {doc.doc_id: doc for doc in corpus}


def _check_known(doc_ids: Iterable[str], by_id: Dict[str, Document]) -> None:
    unknown = sorted({d for d in doc_ids if d not in by_id})
    if unknown:
        raise UnknownDocumentError(unknown)


def _as_records(predictions: Union[str, Path, Iterable[Any]]) -> List[PredictionRecord]:
    if isinstance(predictions, (str, Path)):
        path = Path(predictions)
        records = []
        with path.open(encoding="utf-8") as handle:
            for n, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(PredictionRecord.model_validate_json(line))
                except ValidationError as e:
                    raise EvaluationError(f"{path}:{n}: invalid prediction record: {e}") from e
        return records

    records = []
    for item in predictions:
        if isinstance(item, PredictedFact):
            records.append(PredictionRecord(
                doc_id=item.doc_id, head=item.head_text, relation=item.relation.name,
                tail=item.tail_text, paradigm=item.provenance.paradigm,
            ))
        elif isinstance(item, PredictionRecord):
            records.append(item)
        else:
            records.append(PredictionRecord.model_validate(item))
    return records


def evaluate_run(
    predictions: Union[str, Path, Iterable[Any]],
    corpus: Sequence[Document],
    ontology: RelationOntology,
    metadata: Optional[Dict[str, Optional[str]]] = None,
) -> EvalReport:
    """
    Score a prediction set against a corpus

    Args:
        predictions: predictions.jsonl path, or PredictedFact / record objects
        corpus: Gold documents; total_gold is the corpus gold count
        ontology: Resolves predicted relation names; unresolvable names count as FP

    Raises:
        UnknownDocumentError: predictions reference doc_ids absent from the corpus
    """
    records = _as_records(predictions)
    by_id = _index(corpus)
    _check_known((r.doc_id for r in records), by_id)

    grouped: Dict[str, List[PredictionRecord]] = defaultdict(list)
    for record in records:
        grouped[record.doc_id].append(record)

    total = MatchResult()
    gold_by_relation: Dict[str, int] = defaultdict(int)
    names: Dict[str, str] = {}
    for doc in corpus:
        for fact in doc.gold_facts:
            gold_by_relation[fact.relation_id] += 1
        doc_records = grouped.get(doc.doc_id, [])
        triples, keys = [], []
        for r in doc_records:
            relation = ontology.get(r.relation)
            relation_id = relation.id if relation is not None else None
            key = relation.id if relation is not None else f"unresolved:{r.relation}"
            names[key] = relation.name if relation is not None else r.relation
            triples.append((r.head, relation_id, r.tail))
            keys.append(key)
        total.add(_match_triples(triples, doc, keys))

    total_gold = sum(len(doc.gold_facts) for doc in corpus)
    for rid in gold_by_relation:
        if rid not in names:
            relation = ontology.by_id.get(rid)
            names[rid] = relation.name if relation is not None else rid

    per_relation = [
        score_row(
            names[key],
            total.by_relation[key][0] if key in total.by_relation else 0,
            total.by_relation[key][1] if key in total.by_relation else 0,
            gold_by_relation.get(key, 0),
            total.by_relation[key][2] if key in total.by_relation else 0,
        )
        for key in sorted(names, key=lambda k: names[k])
    ]

    metadata = dict(metadata or {})
    report = EvalReport(
        overall=score_row(metadata.get("paradigm") or "overall", total.tp, total.fp, total_gold, total.duplicate_hits),
        per_relation=per_relation,
        metadata=metadata,
    )
    logger.info("Run evaluated", extra={"tp": total.tp, "fp": total.fp, "gold": total_gold, "f1": round(report.overall.f1, 2)})
    return report


# ===== Stage-level scoring =====

def _match_relations(preds: StagePredictions, doc: Document) -> MatchResult:
    gold = set(doc.gold_relation_ids)
    result = MatchResult()
    seen = set()
    for relation in preds.relations:
        if relation.id in seen:
            result.duplicate_hits += 1
            continue
        seen.add(relation.id)
        if relation.id in gold:
            result.tp += 1
        else:
            result.fp += 1
    return result


def _gold_head_pairs(doc: Document) -> List[Tuple[str, int]]:
    return list(dict.fromkeys((f.relation_id, f.head_idx) for f in doc.gold_facts))


def _match_heads(preds: StagePredictions, doc: Document) -> MatchResult:
    aliases = _alias_sets(doc)
    pairs = _gold_head_pairs(doc)
    result = MatchResult()
    for relation, head in preds.heads:
        head = normalize(head)
        fits = [i for i, (rid, e_idx) in enumerate(pairs) if rid == relation.id and head in aliases[e_idx]]
        if not fits:
            result.fp += 1
            continue
        free = next((i for i in fits if i not in result.matched_gold), None)
        if free is None:
            result.duplicate_hits += 1
            continue
        result.matched_gold.add(free)
        result.tp += 1
    return result


def stage_gold_count(stage: Stage, doc: Document) -> int:
    if stage is Stage.RELATION_EXTRACTION:
        return len(doc.gold_relation_ids)
    if stage is Stage.HEAD_EXTRACTION:
        return len(_gold_head_pairs(doc))
    return len(doc.gold_facts)


def evaluate_stage(
    stage: Stage,
    stage_predictions: Sequence[StagePredictions],
    corpus: Sequence[Document],
    name: Optional[str] = None,
) -> EvalReport:
    """
    Score stage-level predictions produced with gold upstream inputs

    The report's overall row is the stage row; per_stage holds the same row so
    stage reports merge into a run report unchanged.

    Relation stage: per-document relation sets. Head stage: (relation, head alias)
    pairs against gold heads per relation. Fact stage: as match_document.
    """
    by_id = _index(corpus)
    _check_known((p.doc_id for p in stage_predictions), by_id)
    grouped: Dict[str, List[StagePredictions]] = defaultdict(list)
    for preds in stage_predictions:
        if preds.stage is not stage:
            raise EvaluationError(f"Stage predictions for {preds.stage.value} passed to {stage.value} scoring")
        grouped[preds.doc_id].append(preds)

    total = MatchResult()
    for doc in corpus:
        for preds in grouped.get(doc.doc_id, []):
            if stage is Stage.RELATION_EXTRACTION:
                total.add(_match_relations(preds, doc))
            elif stage is Stage.HEAD_EXTRACTION:
                total.add(_match_heads(preds, doc))
            else:
                total.add(match_document(preds.facts, doc))

    gold = sum(stage_gold_count(stage, doc) for doc in corpus)
    row = score_row(name or stage.value, total.tp, total.fp, gold, total.duplicate_hits)
    return EvalReport(overall=row, per_stage=[row], metadata={"stage": stage.value})


def read_stage_predictions(path: Union[str, Path], ontology: RelationOntology) -> List[StagePredictions]:
    """Load stage_predictions.jsonl back into StagePredictions"""
    results = []
    with Path(path).open(encoding="utf-8") as handle:
        for n, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            data = json.loads(line)

            def rel(name: str):
                relation = ontology.get(name)
                if relation is None:
                    raise EvaluationError(f"{path}:{n}: unknown relation {name!r}")
                return relation

            doc_id = data["doc_id"]
            results.append(StagePredictions(
                doc_id=doc_id,
                stage=Stage(data["stage"]),
                relations=[rel(r) for r in data.get("relations", [])],
                heads=[(rel(h["relation"]), h["head"]) for h in data.get("heads", [])],
                facts=[
                    PredictedFact(doc_id, f["head"], rel(f["relation"]), f["tail"], Provenance())
                    for f in data.get("facts", [])
                ],
            ))
    return results


# ===== Rendering =====

def render_table(rows: Sequence[ScoreRow], first_column: str = "Paradigm") -> str:
    """Aligned text table: name, TP, FP, R, P, F1 (and calls when any row has them)"""
    data = {
        first_column: [r.name for r in rows],
        "TP": [r.tp for r in rows],
        "FP": [r.fp for r in rows],
        "R": [f"{r.recall:.2f}" for r in rows],
        "P": [f"{r.precision:.2f}" for r in rows],
        "F1": [f"{r.f1:.2f}" for r in rows],
    }
    if any(r.calls is not None for r in rows):
        data["Calls"] = ["" if r.calls is None else r.calls for r in rows]
    frame = pd.DataFrame(data)
    if frame.empty:
        return "  ".join(frame.columns)
    return frame.to_string(index=False)


def audit_counts(path: Union[str, Path]) -> List[ScoreRow]:
    """
    Rows from a counts-only file: {"rows": [{"name", "tp", "fp", "gold"}]}

    Raises:
        EvaluationError: the file does not follow the counts schema
    """
    try:
        audit = AuditFile.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as e:
        raise EvaluationError(f"Invalid counts file {path}: {e}") from e
    return [score_row(row.name, row.tp, row.fp, row.gold) for row in audit.rows]


def write_report(report: EvalReport, output_dir: Union[str, Path], json_name: str, table_name: str,
                 first_column: str = "Paradigm") -> Tuple[Path, Path]:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / json_name
    json_path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    table = render_table([report.overall] + list(report.per_stage), first_column)
    if report.per_relation:
        table += "\n\n" + render_table(report.per_relation, "Relation")
    table_path = out / table_name
    table_path.write_text(table + "\n", encoding="utf-8")
    return json_path, table_path
