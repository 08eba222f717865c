"""
Unit tests for the extraction paradigms and the corpus runner
"""
import json

import pytest

from src.docre.backends.base import StageBinding, StageRouting
from src.docre.backends.oracle import OracleBackend, colliding_gold_facts
from src.docre.backends.replay import RecordingBackend, ReplayBackend, ScriptedBackend
from src.docre.cache.response_cache import ResponseCache
from src.docre.constants import (
    PREDICTIONS_FILE,
    RUN_SUMMARY_FILE,
    TRACES_FILE,
    TRACE_STATUS_FAILED,
    TRACE_STATUS_OK,
    TRACE_STATUS_TRUNCATED,
)
from src.docre.models.document import Document, Entity, GoldFact, Mention
from src.docre.models.extraction import Paradigm, Stage
from src.docre.nlp.pipeline import ExtractionOptions, ExtractionPipeline, dedup_predictions, run_paradigm
from src.docre.services.corpus_runner import read_predictions, run_corpus, run_stage_corpus
from src.docre.services.evaluator import evaluate_run, evaluate_stage, shared_aliases
from tests.sample_data import (
    SAMPLE_DRHF_CALLS,
    SAMPLE_GOLD_FACTS,
    SAMPLE_GOLD_HEAD_PAIRS,
    SAMPLE_GOLD_RELATIONS,
)

EXPECTED_CALLS = {
    Paradigm.DF: {"Harvard": 1, "Obama": 1, "Rain": 1},
    Paradigm.DRSF: {"Harvard": 2, "Obama": 2, "Rain": 1},
    Paradigm.DRF: {"Harvard": 6, "Obama": 2, "Rain": 1},
    Paradigm.DRHF: SAMPLE_DRHF_CALLS,
}


@pytest.fixture
def oracle_routing(sample_docs, ontology):
    return StageRouting.uniform(StageBinding(OracleBackend(sample_docs, ontology)))


class TestOracleParadigms:
    """Every paradigm driven by the gold oracle recovers the gold facts"""

    @pytest.mark.parametrize("paradigm", list(Paradigm))
    def test_perfect_scores(self, paradigm, sample_docs, ontology, oracle_routing):
        pipeline = ExtractionPipeline(ontology, oracle_routing)
        predictions = []
        for doc in sample_docs:
            facts, trace = pipeline.run_paradigm(doc, paradigm)
            assert trace.status == TRACE_STATUS_OK
            predictions.extend(facts)

        report = evaluate_run(predictions, sample_docs, ontology)
        assert report.overall.tp == SAMPLE_GOLD_FACTS
        assert report.overall.fp == 0
        assert report.overall.f1 == pytest.approx(100.0)

    @pytest.mark.parametrize("paradigm", list(Paradigm))
    def test_call_counts(self, paradigm, sample_docs, ontology, oracle_routing):
        pipeline = ExtractionPipeline(ontology, oracle_routing)
        calls = {doc.doc_id: pipeline.run_paradigm(doc, paradigm)[1].n_calls for doc in sample_docs}
        assert calls == EXPECTED_CALLS[paradigm]

    def test_drhf_trace_shape(self, harvard_doc, ontology, oracle_routing):
        facts, trace = run_paradigm(harvard_doc, Paradigm.DRHF, oracle_routing, ExtractionOptions(), ontology)

        assert trace.calls_by_stage() == {"relation": 1, "head": 5, "fact": 6}
        assert [r.trace_id for r in trace.records][:3] == ["Harvard:0", "Harvard:1", "Harvard:2"]
        assert trace.records[0].accepted == 5
        # Provenance chains relation, head and fact calls
        assert facts[0].provenance.trace_ids == ("Harvard:0", "Harvard:1", "Harvard:2")
        assert facts[0].provenance.paradigm == "drhf"

    def test_gold_relation_prior_skips_relation_call(self, harvard_doc, ontology, oracle_routing):
        opts = ExtractionOptions(gold_relation_prior=True)
        facts, trace = run_paradigm(harvard_doc, Paradigm.DRHF, oracle_routing, opts, ontology)

        assert trace.n_calls == SAMPLE_DRHF_CALLS["Harvard"] - 1
        assert trace.calls_by_stage()["relation"] == 0
        assert len(facts) == 6


class TestOracleFirstMentionCollisions:
    """Entities sharing a first mention render one fact line for several gold facts"""

    def setup_method(self):
        self.doc = Document(
            doc_id="Springfield",
            sentences=(
                ("Springfield", "is", "the", "capital", "of", "Illinois", "."),
                ("Another", "Springfield", "lies", "in", "Massachusetts", ",", "United", "States", "."),
            ),
            entities=(
                Entity((Mention("Springfield", 0, 0, 1, "LOC"),)),
                Entity((Mention("Springfield", 1, 1, 2, "LOC"),)),
                Entity((Mention("United States", 1, 6, 8, "LOC"),)),
            ),
            gold_facts=(GoldFact(0, "P17", 2), GoldFact(1, "P17", 2)),
        )

    def test_shortfall_equals_colliding_facts(self, ontology):
        routing = StageRouting.uniform(StageBinding(OracleBackend([self.doc], ontology)))
        facts, trace = run_paradigm(self.doc, Paradigm.DRHF, routing, ExtractionOptions(), ontology)

        assert trace.calls_by_stage() == {"relation": 1, "head": 1, "fact": 1}
        assert [f.key for f in facts] == [("Springfield", "P17", "United States")]
        assert colliding_gold_facts(self.doc, ontology) == 1
        assert shared_aliases(self.doc) == {"Springfield"}

        report = evaluate_run(facts, [self.doc], ontology)
        assert (report.overall.tp, report.overall.fp, report.overall.gold) == (1, 0, 2)
        assert report.overall.tp == report.overall.gold - colliding_gold_facts(self.doc, ontology)
        assert report.overall.f1 == pytest.approx(200 / 3)

    def test_no_collisions_in_sample_corpus(self, sample_docs, ontology):
        assert [colliding_gold_facts(doc, ontology) for doc in sample_docs] == [0, 0, 0]


class TestRunLimits:
    """Call budgets and backend failures"""

    def test_call_budget_truncates(self, harvard_doc, ontology, oracle_routing):
        opts = ExtractionOptions(call_budget=3)
        facts, trace = run_paradigm(harvard_doc, Paradigm.DRHF, oracle_routing, opts, ontology)

        assert trace.status == TRACE_STATUS_TRUNCATED
        assert trace.n_calls == 3
        assert [f.key for f in facts] == [("Boston", "P17", "United States")]

    def test_backend_failure_yields_no_predictions(self, sample_docs, harvard_doc, ontology):
        oracle = StageBinding(OracleBackend(sample_docs, ontology))
        failing = StageBinding(ScriptedBackend(fail_on=lambda request: True))
        routing = StageRouting.from_spec({"relation": oracle, "head": oracle, "fact": failing})

        facts, trace = run_paradigm(harvard_doc, Paradigm.DRHF, routing, ExtractionOptions(), ontology)

        assert facts == []
        assert trace.status == TRACE_STATUS_FAILED
        assert "BackendUnavailableError" in trace.error
        # The failing call is still recorded
        assert trace.records[-1].stage is Stage.FACT_EXTRACTION

    def test_rejected_lines_recorded(self, harvard_doc, ontology):
        backend = ScriptedBackend(queues={"relation": ["country\nfavourite colour"]}, default="no entity")
        routing = StageRouting.uniform(StageBinding(backend))

        facts, trace = run_paradigm(harvard_doc, Paradigm.DRHF, routing, ExtractionOptions(), ontology)

        assert facts == []
        assert trace.n_calls == 2
        assert trace.records[0].rejected == [("favourite colour", "not-in-ontology")]
        assert trace.n_rejected_lines == 1

    def test_dedup_predictions(self, harvard_doc, ontology, oracle_routing):
        facts, _ = run_paradigm(harvard_doc, Paradigm.DRF, oracle_routing, ExtractionOptions(), ontology)
        assert dedup_predictions(facts + facts) == facts


class TestStageRuns:
    """Stages fed with gold upstream inputs"""

    @pytest.mark.parametrize("stage, gold", [
        (Stage.RELATION_EXTRACTION, SAMPLE_GOLD_RELATIONS),
        (Stage.HEAD_EXTRACTION, SAMPLE_GOLD_HEAD_PAIRS),
        (Stage.FACT_EXTRACTION, SAMPLE_GOLD_FACTS),
    ])
    def test_oracle_stage_scores(self, stage, gold, sample_docs, ontology, oracle_routing):
        pipeline = ExtractionPipeline(ontology, oracle_routing)
        stage_predictions = [pipeline.run_stage(doc, stage)[0] for doc in sample_docs]

        row = evaluate_stage(stage, stage_predictions, sample_docs).overall
        assert row.gold == gold
        assert (row.tp, row.fp) == (gold, 0)

    def test_head_stage_calls_once_per_gold_relation(self, harvard_doc, ontology, oracle_routing):
        preds, trace = ExtractionPipeline(ontology, oracle_routing).run_stage(harvard_doc, Stage.HEAD_EXTRACTION)
        assert trace.calls_by_stage() == {"relation": 0, "head": 5, "fact": 0}
        assert ("country", "Boston") in [(r.name, h) for r, h in preds.heads]


class TestCorpusRunner:
    """Bounded-parallel corpus runs"""

    def test_outputs_identical_for_any_parallelism(self, sample_docs, ontology, oracle_routing, tmp_path):
        serial = run_corpus(sample_docs, Paradigm.DRHF, oracle_routing, ExtractionOptions(), ontology,
                            parallelism=1, output_dir=tmp_path / "serial")
        parallel = run_corpus(sample_docs, Paradigm.DRHF, oracle_routing, ExtractionOptions(), ontology,
                              parallelism=8, output_dir=tmp_path / "parallel")

        first = (tmp_path / "serial" / PREDICTIONS_FILE).read_bytes()
        assert first == (tmp_path / "parallel" / PREDICTIONS_FILE).read_bytes()
        assert [t.doc_id for t in parallel.traces] == ["Harvard", "Obama", "Rain"]
        assert serial.summary["n_calls"] == parallel.summary["n_calls"] == sum(SAMPLE_DRHF_CALLS.values())

    def test_summary_and_files(self, sample_docs, ontology, oracle_routing, tmp_path):
        run = run_corpus(sample_docs, Paradigm.DRF, oracle_routing, ExtractionOptions(), ontology,
                         output_dir=tmp_path)

        summary = json.loads((tmp_path / RUN_SUMMARY_FILE).read_text(encoding="utf-8"))
        assert summary["status"] == "ok"
        assert summary["n_predictions"] == SAMPLE_GOLD_FACTS
        assert summary["calls_by_stage"] == {"relation": 3, "head": 0, "fact": 6}
        assert summary["n_timed_calls"] == summary["n_calls"] == 9
        assert summary["slow_calls"] == []
        assert len(read_predictions(tmp_path / PREDICTIONS_FILE)) == SAMPLE_GOLD_FACTS
        assert len((tmp_path / TRACES_FILE).read_text(encoding="utf-8").splitlines()) == 3
        assert run.failures == []

    def test_replay_reproduces_recorded_run(self, sample_docs, ontology, tmp_path):
        recording = RecordingBackend(ResponseCache(tmp_path / "cache"), OracleBackend(sample_docs, ontology))
        recorded = run_corpus(sample_docs, Paradigm.DRHF, StageRouting.uniform(StageBinding(recording)),
                              ExtractionOptions(), ontology, output_dir=tmp_path / "recorded")

        replay = ReplayBackend(ResponseCache(tmp_path / "cache"))
        replayed = run_corpus(sample_docs, Paradigm.DRHF, StageRouting.uniform(StageBinding(replay)),
                              ExtractionOptions(), ontology, parallelism=4, output_dir=tmp_path / "replayed")

        assert replayed.summary["n_failed"] == 0
        assert [f.key for f in replayed.all_predictions] == [f.key for f in recorded.all_predictions]
        assert recording.inner_calls == sum(SAMPLE_DRHF_CALLS.values())

    def test_unexpected_error_isolated_to_document(self, sample_docs, ontology):
        def responder(request):
            if request.context.doc_id == "Obama":
                raise RuntimeError("boom")
            return "no relation"

        routing = StageRouting.uniform(StageBinding(ScriptedBackend(responder=responder)))
        run = run_corpus(sample_docs, Paradigm.DRF, routing, ExtractionOptions(), ontology, parallelism=2)

        assert [t.status for t in run.traces] == [TRACE_STATUS_OK, TRACE_STATUS_FAILED, TRACE_STATUS_OK]
        assert run.summary["n_failed"] == 1
        assert run.summary["status"] == "failed"
        assert "RuntimeError" in run.failures[0].error

    def test_stage_corpus_run(self, sample_docs, ontology, oracle_routing, tmp_path):
        run = run_stage_corpus(sample_docs, Stage.FACT_EXTRACTION, oracle_routing, ExtractionOptions(), ontology,
                               output_dir=tmp_path)

        assert run.summary["n_calls"] == SAMPLE_GOLD_HEAD_PAIRS
        assert "stage_predictions" in run.paths
        assert sum(len(s.facts) for s in run.stage_predictions) == SAMPLE_GOLD_FACTS

    def test_invalid_parallelism(self, sample_docs, ontology, oracle_routing):
        with pytest.raises(ValueError):
            run_corpus(sample_docs, Paradigm.DF, oracle_routing, ExtractionOptions(), ontology, parallelism=0)
