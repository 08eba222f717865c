"""
Instruction-Tuning Data Service

Breaks each document into three-stage samples using the tuned (open-listing)
prompt templates:

    1 relation sample per document       output: gold relation names, or "no relation"
    1 head sample per (doc, relation)    output: gold head first-mention texts
    1 fact sample per (doc, rel, head)   output: "[head, relation, tail]" lines

Gold completions are the oracle backend's canonical answers, so sending a sample's
instruction to the oracle returns exactly the sample's output.

Ordering is deterministic: corpus order, then relation name, then head.
"""
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

from src.docre.constants import (
    EXPECTED_STAGE_SHARES,
    NO_ENTITY_SENTINEL,
    STAGE_SHARE_TOLERANCE_PP,
    TUNING_FORMAT_ALPACA,
    TUNING_FORMAT_RECORDS,
    TUNING_FORMATS,
    TUNING_MANIFEST_FILE,
)
from src.docre.exceptions import ConfigurationError, OutputWriteError
from src.docre.models.document import Document
from src.docre.models.extraction import ListingMode, PromptStyle, Stage
from src.docre.models.ontology import RelationOntology
from src.docre.schemas import TuningManifest
from src.docre.backends.base import RequestContext
from src.docre.backends.oracle import gold_heads, gold_relations, oracle_answer
from src.docre.nlp.prompt_renderer import PromptRenderer, get_renderer

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TuningSample:
    stage: Stage
    instruction: str
    output: str
    meta: Dict[str, str] = field(default_factory=dict)

    def to_record(self, fmt: str = TUNING_FORMAT_RECORDS) -> Dict[str, Any]:
        if fmt == TUNING_FORMAT_ALPACA:
            return {"instruction": self.instruction, "input": "", "output": self.output}
        return {"stage": self.stage.value, "instruction": self.instruction, "output": self.output, "meta": self.meta}

    def context(self) -> RequestContext:
        """Oracle context equivalent to this sample's meta"""
        return RequestContext(
            doc_id=self.meta["doc_id"],
            relation=self.meta.get("relation"),
            subject=self.meta.get("subject"),
        )


def _document_samples(
    doc: Document,
    ontology: RelationOntology,
    renderer: PromptRenderer,
    with_description: bool,
    negatives: int,
    rng: Optional[random.Random],
) -> List[TuningSample]:
    samples = [TuningSample(
        stage=Stage.RELATION_EXTRACTION,
        instruction=renderer.relation_listing(doc, ontology, ListingMode.OPEN).text,
        output=oracle_answer(doc, Stage.RELATION_EXTRACTION, RequestContext(doc_id=doc.doc_id), ontology),
        meta={"doc_id": doc.doc_id},
    )]

    relations = gold_relations(doc, ontology)
    negative_relations = []
    if negatives and relations and rng is not None:
        absent = [r for r in ontology.relations if r not in relations]
        negative_relations = rng.sample(absent, min(negatives, len(absent)))

    for relation in sorted(relations + negative_relations, key=lambda r: r.name):
        head_prompt = renderer.head(doc, relation, with_description, PromptStyle.TUNED)
        heads = gold_heads(doc, relation)
        if not heads:
            samples.append(TuningSample(
                stage=Stage.HEAD_EXTRACTION,
                instruction=head_prompt.text,
                output=NO_ENTITY_SENTINEL,
                meta={"doc_id": doc.doc_id, "relation": relation.name, "negative": "true"},
            ))
            continue

        head_context = RequestContext(doc_id=doc.doc_id, relation=relation.name)
        samples.append(TuningSample(
            stage=Stage.HEAD_EXTRACTION,
            instruction=head_prompt.text,
            output=oracle_answer(doc, Stage.HEAD_EXTRACTION, head_context, ontology),
            meta={"doc_id": doc.doc_id, "relation": relation.name},
        ))
        for head in heads:
            fact_context = RequestContext(doc_id=doc.doc_id, relation=relation.name, subject=head)
            samples.append(TuningSample(
                stage=Stage.FACT_EXTRACTION,
                instruction=renderer.fact(doc, relation, head, with_description, PromptStyle.TUNED).text,
                output=oracle_answer(doc, Stage.FACT_EXTRACTION, fact_context, ontology),
                meta={"doc_id": doc.doc_id, "relation": relation.name, "subject": head},
            ))
    return samples


def generate_samples(
    docs: Sequence[Document],
    ontology: RelationOntology,
    with_description: bool = True,
    include_negatives: bool = False,
    negatives_per_doc: int = 1,
    seed: int = 13,
) -> List[TuningSample]:
    """
    Build three-stage tuning samples for a processed corpus

    Args:
        docs: Deduplicated (optionally inverse-fixed) documents
        ontology: Active ontology
        with_description: Include relation descriptions in head / fact instructions
        include_negatives: Add head samples answered "no entity" for relations absent
            from a document; off by default, documents without facts never get them
        negatives_per_doc: Negative head samples per document, drawn with `seed`
    """
    renderer = get_renderer()
    rng = random.Random(seed) if include_negatives else None
    negatives = negatives_per_doc if include_negatives else 0

    samples: List[TuningSample] = []
    for doc in docs:
        samples.extend(_document_samples(doc, ontology, renderer, with_description, negatives, rng))

    logger.info("Tuning samples generated", extra={"documents": len(docs), "samples": len(samples)})
    return samples


def stage_counts(samples: Iterable[TuningSample]) -> Dict[str, int]:
    counts = {stage.value: 0 for stage in Stage}
    for sample in samples:
        counts[sample.stage.value] += 1
    return counts


def expected_counts(docs: Sequence[Document]) -> Dict[str, int]:
    """Counting law of the default generator (no negatives)"""
    n_head = 0
    n_fact = 0
    for doc in docs:
        for relation_id, facts in doc.facts_by_relation().items():
            n_head += 1
            n_fact += len({doc.entities[f.head_idx].first_mention for f in facts})
    return {Stage.RELATION_EXTRACTION.value: len(docs), Stage.HEAD_EXTRACTION.value: n_head, Stage.FACT_EXTRACTION.value: n_fact}


def _shares(counts: Mapping[str, int]) -> Dict[str, float]:
    total = sum(counts.values())
    return {stage: (100.0 * n / total if total else 0.0) for stage, n in counts.items()}


def build_manifest(
    samples: Sequence[TuningSample],
    path: str = "",
    fmt: str = TUNING_FORMAT_RECORDS,
    n_documents: int = 0,
    inverse_fixed: bool = False,
) -> TuningManifest:
    counts = stage_counts(samples)
    return TuningManifest(
        path=path,
        format=fmt,
        n_samples=len(samples),
        counts=counts,
        shares=_shares(counts),
        n_documents=n_documents,
        inverse_fixed=inverse_fixed,
    )


def write_samples(
    samples: Sequence[TuningSample],
    sink: Union[str, Path],
    fmt: str = TUNING_FORMAT_RECORDS,
    n_documents: int = 0,
    inverse_fixed: bool = False,
) -> TuningManifest:
    """
    Write samples as JSON lines and a manifest next to them

    Raises:
        ConfigurationError: unknown format
        OutputWriteError: the file or manifest could not be written
    """
    if fmt not in TUNING_FORMATS:
        raise ConfigurationError(f"Unknown tuning format {fmt}; expected one of {TUNING_FORMATS}")

    path = Path(sink)
    manifest = build_manifest(samples, str(path), fmt, n_documents, inverse_fixed)
    counts = manifest.counts
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as handle:
            for sample in samples:
                json.dump(sample.to_record(fmt), handle, ensure_ascii=False)
                handle.write("\n")
        (path.parent / TUNING_MANIFEST_FILE).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    except OSError as e:
        raise OutputWriteError(str(path), e.strerror or str(e)) from e

    logger.info("Tuning samples written", extra={"output_path": str(path), "samples": len(samples), "counts": counts})
    return manifest


@dataclass
class ProportionReport:
    rows: Dict[str, Dict[str, float]]
    tolerance: float

    @property
    def ok(self) -> bool:
        return all(abs(row["deviation_pp"]) <= self.tolerance for row in self.rows.values())

    def to_dict(self) -> Dict[str, Any]:
        return {"ok": self.ok, "tolerance_pp": self.tolerance, "stages": self.rows}


def proportion_check(
    manifest: TuningManifest,
    expected: Mapping[str, float] = EXPECTED_STAGE_SHARES,
    tolerance: float = STAGE_SHARE_TOLERANCE_PP,
) -> ProportionReport:
    """Compare per-stage sample shares with expected percentages"""
    rows = {}
    for stage, target in expected.items():
        actual = manifest.shares.get(stage, 0.0)
        rows[stage] = {"expected": target, "actual": round(actual, 2), "deviation_pp": round(actual - target, 2)}
    report = ProportionReport(rows=rows, tolerance=tolerance)
    if not report.ok:
        logger.warning("Stage shares outside tolerance", extra={"stages": rows, "tolerance_pp": tolerance})
    return report
