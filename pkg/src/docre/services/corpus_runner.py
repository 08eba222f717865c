"""
Corpus Runner Service

Runs one paradigm (or one RHF stage) over every document with a bounded pool of
document workers. Documents are independent; stages inside a document are
sequential. Outputs are written in corpus order whatever the completion order,
so predictions files are identical for any parallelism.

Output files (in output_dir):
    predictions.jsonl        {doc_id, head, relation, tail, paradigm} per fact
    traces.jsonl             one ExtractionTrace per document
    run_summary.json         totals, per-stage calls and latency, failures
    stage_predictions.jsonl  stage-level runs only
"""
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar, Union

from src.docre.constants import (
    PREDICTIONS_FILE,
    RUN_SUMMARY_FILE,
    STAGE_PREDICTIONS_FILE,
    TRACES_FILE,
    TRACE_STATUS_FAILED,
    TRACE_STATUS_TRUNCATED,
)
from src.docre.models.document import Document
from src.docre.models.extraction import ExtractionTrace, Paradigm, PredictedFact, Stage, StagePredictions
from src.docre.models.ontology import RelationOntology
from src.docre.backends.base import StageRouting
from src.docre.monitoring.error_tracking import get_error_tracker, log_exception
from src.docre.monitoring.performance_monitor import CallMonitor
from src.docre.nlp.pipeline import ExtractionOptions, ExtractionPipeline

logger = logging.getLogger(__name__)

R = TypeVar("R")


@dataclass
class CorpusRun:
    """Per-document results in corpus order plus the run summary"""
    traces: List[ExtractionTrace]
    predictions: List[List[PredictedFact]] = field(default_factory=list)
    stage_predictions: List[StagePredictions] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    paths: Dict[str, Path] = field(default_factory=dict)

    @property
    def all_predictions(self) -> List[PredictedFact]:
        return [fact for facts in self.predictions for fact in facts]

    @property
    def failures(self) -> List[ExtractionTrace]:
        return [t for t in self.traces if t.status == TRACE_STATUS_FAILED]


def _map_ordered(fn: Callable[[Document], R], docs: Sequence[Document], parallelism: int) -> List[R]:
    """Apply fn to every document with at most `parallelism` in flight; results in input order"""
    if parallelism < 1:
        raise ValueError("parallelism must be at least 1")
    if parallelism == 1 or len(docs) <= 1:
        return [fn(doc) for doc in docs]

    results: List[Optional[R]] = [None] * len(docs)
    with ThreadPoolExecutor(max_workers=parallelism) as executor:
        fut_to_idx = {executor.submit(fn, doc): idx for idx, doc in enumerate(docs)}
        for fut in as_completed(fut_to_idx):
            results[fut_to_idx[fut]] = fut.result()
    return results


def _failed(doc: Document, paradigm: Paradigm, error: Exception) -> ExtractionTrace:
    log_exception(logger, "Unexpected error in document run", exc_info=error, extra={"doc_id": doc.doc_id})
    return ExtractionTrace(
        doc_id=doc.doc_id,
        paradigm=paradigm,
        status=TRACE_STATUS_FAILED,
        error=f"{type(error).__name__}: {error}",
    )


def write_jsonl(records, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


def read_predictions(path: Union[str, Path]) -> List[Dict[str, Any]]:
    """Read a predictions.jsonl file into raw records"""
    records = []
    with Path(path).open(encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                records.append(json.loads(line))
    return records


def _summary(
    traces: Sequence[ExtractionTrace],
    n_predictions: int,
    monitor: CallMonitor,
    started: float,
    extra: Dict[str, Any],
) -> Dict[str, Any]:
    calls_by_stage = {stage.value: 0 for stage in Stage}
    for trace in traces:
        for stage, count in trace.calls_by_stage().items():
            calls_by_stage[stage] += count
    failures = [{"doc_id": t.doc_id, "error": t.error} for t in traces if t.status == TRACE_STATUS_FAILED]
    return {
        **extra,
        "n_documents": len(traces),
        "n_predictions": n_predictions,
        "n_calls": sum(calls_by_stage.values()),
        "calls_by_stage": calls_by_stage,
        "n_rejected_lines": sum(t.n_rejected_lines for t in traces),
        "n_truncated": sum(1 for t in traces if t.status == TRACE_STATUS_TRUNCATED),
        "n_failed": len(failures),
        "failures": failures,
        "n_timed_calls": monitor.total_calls(),
        "latency_by_stage": monitor.get_stage_stats(),
        "slow_calls": monitor.get_slow_calls(),
        "errors": get_error_tracker().get_stats(),
        "wall_time_s": round(time.perf_counter() - started, 3),
        "status": "failed" if failures else "ok",
    }


def run_corpus(
    docs: Sequence[Document],
    paradigm: Paradigm,
    routing: StageRouting,
    opts: ExtractionOptions,
    ontology: RelationOntology,
    parallelism: int = 1,
    output_dir: Optional[Union[str, Path]] = None,
) -> CorpusRun:
    """
    Run a paradigm over a corpus

    Args:
        docs: Documents in corpus order
        paradigm: Paradigm to run
        routing: Stage routing shared by all workers
        opts: Extraction options
        ontology: Active ontology
        parallelism: Maximum concurrent document runs
        output_dir: When set, predictions / traces / summary files are written there

    Returns:
        CorpusRun; per-document failures are recorded, never raised
    """
    monitor = CallMonitor()
    pipeline = ExtractionPipeline(ontology, routing, opts, monitor=monitor)
    started = time.perf_counter()

    def work(doc: Document) -> Tuple[List[PredictedFact], ExtractionTrace]:
        try:
            return pipeline.run_paradigm(doc, paradigm)
        except Exception as e:
            return [], _failed(doc, paradigm, e)

    logger.info("Corpus run started", extra={"paradigm": paradigm.value, "documents": len(docs), "parallelism": parallelism})
    results = _map_ordered(work, docs, parallelism)
    run = CorpusRun(traces=[t for _, t in results], predictions=[p for p, _ in results])
    run.summary = _summary(
        run.traces,
        len(run.all_predictions),
        monitor,
        started,
        {"paradigm": paradigm.value, "parallelism": parallelism, "routing": routing.describe()},
    )

    if output_dir is not None:
        out = Path(output_dir)
        run.paths["predictions"] = write_jsonl((f.to_record() for f in run.all_predictions), out / PREDICTIONS_FILE)
        run.paths["traces"] = write_jsonl((t.to_dict() for t in run.traces), out / TRACES_FILE)
        run.paths["summary"] = out / RUN_SUMMARY_FILE
        run.paths["summary"].write_text(json.dumps(run.summary, indent=2, ensure_ascii=False), encoding="utf-8")

    log = logger.warning if run.failures else logger.info
    log("Corpus run finished", extra={
        "paradigm": paradigm.value,
        "documents": len(docs),
        "predictions": run.summary["n_predictions"],
        "failed": run.summary["n_failed"],
        "truncated": run.summary["n_truncated"],
    })
    return run


def run_stage_corpus(
    docs: Sequence[Document],
    stage: Stage,
    routing: StageRouting,
    opts: ExtractionOptions,
    ontology: RelationOntology,
    parallelism: int = 1,
    output_dir: Optional[Union[str, Path]] = None,
) -> CorpusRun:
    """Run one RHF stage with gold upstream inputs over a corpus"""
    monitor = CallMonitor()
    pipeline = ExtractionPipeline(ontology, routing, opts, monitor=monitor)
    started = time.perf_counter()

    def work(doc: Document) -> Tuple[StagePredictions, ExtractionTrace]:
        try:
            return pipeline.run_stage(doc, stage)
        except Exception as e:
            return StagePredictions(doc_id=doc.doc_id, stage=stage), _failed(doc, Paradigm.DRHF, e)

    results = _map_ordered(work, docs, parallelism)
    run = CorpusRun(traces=[t for _, t in results], stage_predictions=[s for s, _ in results])
    n_items = sum(len(s.relations) + len(s.heads) + len(s.facts) for s in run.stage_predictions)
    run.summary = _summary(run.traces, n_items, monitor, started, {"stage": stage.value, "parallelism": parallelism})

    if output_dir is not None:
        out = Path(output_dir)
        run.paths["stage_predictions"] = write_jsonl(
            (s.to_record() for s in run.stage_predictions), out / STAGE_PREDICTIONS_FILE
        )
        run.paths["traces"] = write_jsonl((t.to_dict() for t in run.traces), out / TRACES_FILE)
        run.paths["summary"] = out / RUN_SUMMARY_FILE
        run.paths["summary"].write_text(json.dumps(run.summary, indent=2, ensure_ascii=False), encoding="utf-8")

    logger.info("Stage run finished", extra={"stage": stage.value, "documents": len(docs)})
    return run
