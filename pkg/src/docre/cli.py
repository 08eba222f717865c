"""
DocRE command line

Subcommands:
    ingest             parse, deduplicate and (optionally) inverse-fix a corpus
    extract            run one paradigm (or one RHF stage) over a corpus
    eval               score predictions, stage predictions or a counts-only file
    gen-tuning         write three-stage instruction-tuning samples
    compare-paradigms  run and score several paradigms into one table

Settings come from an optional YAML file (--config) overridden by flags; flags win.
The resolved configuration is written to config_snapshot.yaml in the output dir,
so `--config <snapshot>` with the same replay cache reruns the command exactly.

Usage:
    python -m src.docre extract --corpus data/test_revised.json --paradigm drhf --oracle
    python -m src.docre eval --corpus data/test_revised.json --predictions runs/latest/predictions.jsonl
"""
import argparse
import json
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import yaml

from src.docre.config import Config
from src.docre.constants import (
    COMPARISON_TABLE_FILE,
    CONFIG_SNAPSHOT_FILE,
    EXIT_BACKEND_FAILURE,
    EXIT_OK,
    LOG_FORMAT_JSON,
    LOG_LEVELS,
    PARADIGMS,
    PROCESSED_CORPUS_FILE,
    PROMPT_STYLES,
    REPORT_JSON_FILE,
    REPORT_TABLE_FILE,
    STAGES,
    TUNING_FORMATS,
    TUNING_SAMPLES_FILE,
)
from src.docre.error_handler import handle_errors
from src.docre.exceptions import AcceptanceMismatchError, ConfigurationError
from src.docre.models.document import Document
from src.docre.models.extraction import Paradigm, PromptStyle, Stage
from src.docre.models.ontology import RelationOntology
from src.docre.schemas import RunConfig, ScoreRow
from src.docre.backends.base import DecodeSettings
from src.docre.backends.factory import build_routing
from src.docre.monitoring.error_tracking import setup_logging
from src.docre.nlp.pipeline import ExtractionOptions
from src.docre.services.corpus_loader import parse_corpus_with_report, write_corpus
from src.docre.services.corpus_processing import corpus_stats, process_corpus
from src.docre.services.corpus_runner import run_corpus, run_stage_corpus
from src.docre.services.evaluator import (
    audit_counts,
    evaluate_run,
    evaluate_stage,
    read_stage_predictions,
    render_table,
    score_row,
    write_report,
)
from src.docre.services.ontology_loader import load_description_overlay, load_ontology
from src.docre.services.tuning_data import (
    build_manifest,
    expected_counts,
    generate_samples,
    ProportionReport,
    proportion_check,
    write_samples,
)

logger = logging.getLogger(__name__)

# Allowed |expected - actual| when --expect-f1 is given
F1_TOLERANCE = 0.01


# ===== Configuration =====

def _flag(parser: argparse.ArgumentParser, *flags: str, path: str, **kwargs) -> None:
    """Register a flag that overrides the RunConfig field at dotted `path` when given"""
    if kwargs.get("action") == "store_const":
        kwargs.setdefault("const", True)
    parser.add_argument(*flags, dest=path, default=None, **kwargs)


def _set_path(data: Dict[str, Any], path: str, value: Any) -> None:
    node = data
    *parents, leaf = path.split(".")
    for key in parents:
        node = node.setdefault(key, {})
    node[leaf] = value


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """
    YAML file (if any), then flag overrides, then validation

    Raises:
        ConfigurationError: unreadable or non-mapping config file
        pydantic.ValidationError: invalid resolved settings
    """
    data: Dict[str, Any] = {}
    if args.config:
        try:
            loaded = yaml.safe_load(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as e:
            raise ConfigurationError(f"Cannot read config {args.config}: {e}") from e
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigurationError(f"Config {args.config} must be a mapping")
        data = loaded or {}

    for dest, value in vars(args).items():
        if value is None:
            continue
        if "." in dest or dest in RunConfig.model_fields:
            _set_path(data, dest, value)

    for spec in getattr(args, "stage_model", None) or []:
        stage, sep, model = spec.partition("=")
        if not sep or not model:
            raise ConfigurationError(f"--stage-model expects stage=model, got {spec!r}")
        _set_path(data, f"routing.stage_models.{stage.strip()}", model.strip())

    return RunConfig.model_validate(data)


def write_snapshot(cfg: RunConfig, output_dir: Path) -> Path:
    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir / CONFIG_SNAPSHOT_FILE
    path.write_text(yaml.safe_dump(cfg.model_dump(), sort_keys=False, allow_unicode=True), encoding="utf-8")
    return path


def _ontology(cfg: RunConfig) -> RelationOntology:
    ontology = load_ontology(cfg.ontology_path)
    if cfg.description_overlay:
        ontology = load_description_overlay(cfg.description_overlay, ontology)
    return ontology


def _require_corpus(cfg: RunConfig) -> str:
    if not cfg.corpus_path:
        raise ConfigurationError("No corpus given; pass --corpus or set corpus_path in --config")
    return cfg.corpus_path


def _corpus(cfg: RunConfig, ontology: RelationOntology) -> List[Document]:
    """Parsed and deduplicated documents, limited if asked; evaluation gold is never inverse-fixed"""
    docs, _ = parse_corpus_with_report(_require_corpus(cfg), ontology, strict=cfg.strict_corpus)
    if cfg.limit:
        docs = docs[:cfg.limit]
    processed, _ = process_corpus(docs, ontology, fix_inverses=False)
    return processed


def _extraction_options(cfg: RunConfig) -> ExtractionOptions:
    opts = cfg.opts
    return ExtractionOptions(
        with_description=opts.with_description,
        strict_entities=opts.strict_entities,
        gold_relation_prior=opts.gold_relation_prior,
        prompt_style=PromptStyle(opts.prompt_style),
        call_budget=opts.call_budget,
        decode=DecodeSettings(
            temperature=opts.decode.temperature,
            max_tokens=opts.decode.max_tokens,
            stop=tuple(opts.decode.stop or ()),
        ),
    )


def _check_expected_f1(row: ScoreRow, expected: Optional[float]) -> None:
    if expected is None:
        return
    if abs(round(row.f1, 2) - expected) > F1_TOLERANCE:
        raise AcceptanceMismatchError(f"F1 {row.f1:.2f} for {row.name} differs from expected {expected:.2f}")
    logger.info("F1 matches expectation", extra={"row": row.name, "f1": round(row.f1, 2)})


# ===== Commands =====

def cmd_ingest(cfg: RunConfig, args: argparse.Namespace) -> int:
    ontology = _ontology(cfg)
    docs, skipped = parse_corpus_with_report(_require_corpus(cfg), ontology, strict=cfg.strict_corpus)
    if cfg.limit:
        docs = docs[:cfg.limit]
    raw_stats = corpus_stats(docs)
    processed, counters = process_corpus(docs, ontology, fix_inverses=cfg.fix_inverses)
    processed_stats = corpus_stats(processed)

    out = Path(cfg.output_dir)
    path = write_corpus(processed, out / PROCESSED_CORPUS_FILE)

    print("=" * 60)
    print(f"CORPUS ({cfg.split})")
    print("=" * 60)
    print(f"Documents:                 {raw_stats.n_documents}")
    print(f"Gold facts:                {raw_stats.n_gold_facts}")
    print(f"Distinct relations:        {raw_stats.n_distinct_relations}")
    print(f"Max facts per document:    {raw_stats.max_facts_per_doc}")
    print(f"Max relations per doc:     {raw_stats.max_relations_per_doc}")
    print(f"Skipped labels:            {len(skipped)}")
    print(f"Duplicates removed:        {counters['duplicates_removed']}")
    print(f"Missing inverse facts:     {counters['inverse_missing']}")
    if cfg.fix_inverses:
        print(f"Inverse facts added:       {counters['inverse_added']}")
    print(f"Processed gold facts:      {processed_stats.n_gold_facts}")
    print(f"Written to:                {path}")
    print("=" * 60)

    logger.info("Ingest finished", extra={
        "corpus": raw_stats.to_dict(),
        "processed": processed_stats.to_dict(),
        "counters": counters,
        "skipped_labels": len(skipped),
    })
    return EXIT_OK


def cmd_extract(cfg: RunConfig, args: argparse.Namespace) -> int:
    ontology = _ontology(cfg)
    docs = _corpus(cfg, ontology)
    opts = _extraction_options(cfg)
    routing = build_routing(cfg.routing, docs, ontology)
    try:
        if args.stage:
            run = run_stage_corpus(
                docs, Stage(args.stage), routing, opts, ontology,
                parallelism=cfg.opts.parallelism, output_dir=cfg.output_dir,
            )
        else:
            run = run_corpus(
                docs, Paradigm(cfg.paradigm), routing, opts, ontology,
                parallelism=cfg.opts.parallelism, output_dir=cfg.output_dir,
            )
    finally:
        routing.close()

    summary = run.summary
    print(json.dumps({
        key: summary[key]
        for key in ("paradigm", "stage", "n_documents", "n_predictions", "n_calls", "calls_by_stage",
                    "n_rejected_lines", "n_truncated", "n_failed", "status")
        if key in summary
    }, indent=2, ensure_ascii=False))

    if run.failures:
        print(f"{len(run.failures)} document(s) failed; see {cfg.output_dir}", file=sys.stderr)
        return EXIT_BACKEND_FAILURE
    return EXIT_OK


def _write_rows(rows: Sequence[ScoreRow], out: Path, first_column: str) -> str:
    table = render_table(rows, first_column)
    out.mkdir(parents=True, exist_ok=True)
    (out / REPORT_JSON_FILE).write_text(
        json.dumps({"rows": [r.model_dump() for r in rows]}, indent=2, ensure_ascii=False), encoding="utf-8"
    )
    (out / REPORT_TABLE_FILE).write_text(table + "\n", encoding="utf-8")
    return table


def cmd_eval(cfg: RunConfig, args: argparse.Namespace) -> int:
    out = Path(cfg.output_dir)

    if args.counts:
        rows = audit_counts(args.counts)
        print(_write_rows(rows, out, args.first_column or "Paradigm"))
        if rows:
            _check_expected_f1(rows[0], args.expect_f1)
        return EXIT_OK

    ontology = _ontology(cfg)
    docs = _corpus(cfg, ontology)

    stage_rows: List[ScoreRow] = []
    for path in args.stage_predictions or []:
        preds = read_stage_predictions(path, ontology)
        stage = Stage(args.stage) if args.stage else (preds[0].stage if preds else None)
        if stage is None:
            raise ConfigurationError(f"{path} is empty; pass --stage to score it")
        stage_rows.extend(evaluate_stage(stage, preds, docs, name=f"{stage.value}-{cfg.split}").per_stage)

    if not args.predictions:
        if not stage_rows:
            raise ConfigurationError("eval needs --predictions, --stage-predictions or --counts")
        print(_write_rows(stage_rows, out, args.first_column or "Module"))
        _check_expected_f1(stage_rows[0], args.expect_f1)
        return EXIT_OK

    report = evaluate_run(
        args.predictions, docs, ontology,
        metadata={"split": cfg.split, "paradigm": Paradigm(cfg.paradigm).label, "predictions": str(args.predictions)},
    )
    report.per_stage = stage_rows
    _, table_path = write_report(report, out, REPORT_JSON_FILE, REPORT_TABLE_FILE, args.first_column or "Paradigm")
    print(render_table([report.overall] + stage_rows, args.first_column or "Paradigm"))
    logger.info("Report written", extra={"output_path": str(table_path)})
    _check_expected_f1(report.overall, args.expect_f1)
    return EXIT_OK


def _proportion_rows(label: str, counts: Dict[str, int], report: ProportionReport) -> List[str]:
    lines = [f"{label}: {sum(counts.values())} samples ({'ok' if report.ok else 'outside tolerance'})"]
    for stage, row in report.rows.items():
        lines.append(
            f"  {stage:<10} {counts.get(stage, 0):>8}  {row['actual']:>6.2f}%  "
            f"(expected {row['expected']:.2f}%, {row['deviation_pp']:+.2f} pp)"
        )
    return lines


def cmd_gen_tuning(cfg: RunConfig, args: argparse.Namespace) -> int:
    ontology = _ontology(cfg)
    docs, _ = parse_corpus_with_report(_require_corpus(cfg), ontology, strict=cfg.strict_corpus)
    if cfg.limit:
        docs = docs[:cfg.limit]
    processed, _ = process_corpus(docs, ontology, fix_inverses=cfg.fix_inverses)

    tuning = cfg.tuning

    def samples_for(corpus: Sequence[Document]):
        return generate_samples(
            corpus, ontology,
            with_description=cfg.opts.with_description,
            include_negatives=tuning.include_negatives,
            negatives_per_doc=tuning.negatives_per_doc,
            seed=cfg.seed,
        )

    samples = samples_for(processed)
    manifest = write_samples(
        samples, Path(cfg.output_dir) / TUNING_SAMPLES_FILE, tuning.format,
        n_documents=len(processed), inverse_fixed=cfg.fix_inverses,
    )

    if not tuning.include_negatives and manifest.counts != expected_counts(processed):
        raise AcceptanceMismatchError(
            f"Sample counts {manifest.counts} break the counting law {expected_counts(processed)}"
        )

    print(json.dumps(manifest.model_dump(), indent=2, ensure_ascii=False))

    if not tuning.check_proportions:
        return EXIT_OK

    # Shares before and after inverse augmentation, whichever one was written
    other_docs, _ = process_corpus(docs, ontology, fix_inverses=not cfg.fix_inverses)
    other = build_manifest(samples_for(other_docs), n_documents=len(other_docs), inverse_fixed=not cfg.fix_inverses)
    reports = []
    for variant in sorted([manifest, other], key=lambda m: m.inverse_fixed):
        report = proportion_check(variant)
        reports.append(report)
        label = "after inverse augmentation" if variant.inverse_fixed else "before inverse augmentation"
        print("\n".join(_proportion_rows(label, variant.counts, report)))

    if not any(r.ok for r in reports):
        raise AcceptanceMismatchError("Stage shares outside tolerance before and after inverse augmentation")
    return EXIT_OK


def cmd_compare_paradigms(cfg: RunConfig, args: argparse.Namespace) -> int:
    ontology = _ontology(cfg)
    docs = _corpus(cfg, ontology)
    opts = _extraction_options(cfg)
    out = Path(cfg.output_dir)
    paradigms = [Paradigm(p) for p in (args.paradigms or PARADIGMS)]

    rows: List[ScoreRow] = []
    failed = 0
    routing = build_routing(cfg.routing, docs, ontology)
    try:
        for paradigm in paradigms:
            run_dir = out / paradigm.value
            run = run_corpus(docs, paradigm, routing, opts, ontology,
                             parallelism=cfg.opts.parallelism, output_dir=run_dir)
            failed += len(run.failures)
            report = evaluate_run(run.all_predictions, docs, ontology,
                                  metadata={"split": cfg.split, "paradigm": paradigm.label})
            write_report(report, run_dir, REPORT_JSON_FILE, REPORT_TABLE_FILE)
            overall = report.overall
            rows.append(score_row(paradigm.label, overall.tp, overall.fp, overall.gold,
                                  overall.duplicate_hits, calls=run.summary["n_calls"]))
    finally:
        routing.close()

    table = render_table(rows)
    (out / COMPARISON_TABLE_FILE).write_text(table + "\n", encoding="utf-8")
    print(table)

    if failed:
        print(f"{failed} document run(s) failed; see per-paradigm summaries", file=sys.stderr)
        return EXIT_BACKEND_FAILURE
    return EXIT_OK


# ===== Parser =====

def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration; flags override its values")
    common.add_argument("--log-level", choices=LOG_LEVELS, help="Default: DOCRE_LOG_LEVEL")
    common.add_argument("--log-dir", help="Directory for docre.log / errors.log; default: DOCRE_LOG_DIR")
    common.add_argument("--log-format", choices=["json", "text"], help="Log file format; default: DOCRE_LOG_FORMAT")
    common.add_argument("--quiet", action="store_true", help="No log output on stderr")
    _flag(common, "--corpus", path="corpus_path", help="Corpus file (release JSON array)")
    _flag(common, "--split", path="split", help="Split tag used in reports (default: test)")
    _flag(common, "--ontology", path="ontology_path", help="Relation ontology YAML")
    _flag(common, "--description-overlay", path="description_overlay", help="Alternate relation descriptions YAML")
    _flag(common, "--no-description", path="opts.with_description", action="store_const", const=False,
          help="Leave relation descriptions out of prompts")
    _flag(common, "--lenient", path="strict_corpus", action="store_const", const=False,
          help="Skip labels with unknown relation codes instead of failing")
    _flag(common, "--output-dir", path="output_dir", help="Where outputs and the config snapshot go")
    _flag(common, "--seed", path="seed", type=int, help="Seed for sampled negatives")
    _flag(common, "--limit", path="limit", type=int, help="Only the first N documents")
    return common


def _inverse_flag(parser: argparse.ArgumentParser) -> None:
    # Training-side only; extract, eval and compare-paradigms score the release gold as published
    _flag(parser, "--fix-inverses", path="fix_inverses", action="store_const",
          help="Add missing inverse facts to the written corpus / training samples")


def _run_parser() -> argparse.ArgumentParser:
    run = argparse.ArgumentParser(add_help=False)
    _flag(run, "--paradigm", path="paradigm", choices=PARADIGMS, help="Extraction paradigm (default: drhf)")
    _flag(run, "--oracle", path="routing.oracle", action="store_const", help="Answer every stage from gold")
    _flag(run, "--api-base", path="routing.api_base", help="Chat-completions endpoint base URL")
    _flag(run, "--model", path="routing.model", help="Model for every stage without a --stage-model")
    run.add_argument("--stage-model", action="append", metavar="STAGE=MODEL",
                     help=f"Per-stage model; stage is one of {STAGES}; repeatable")
    _flag(run, "--api-key-env", path="routing.api_key_env", help="Environment variable holding the API key")
    _flag(run, "--cache-dir", path="routing.cache_dir", help="Response cache directory (record / replay)")
    _flag(run, "--replay-only", path="routing.replay_only", action="store_const",
          help="Serve responses from --cache-dir only; a miss fails the document")
    _flag(run, "--parallelism", path="opts.parallelism", type=int, help="Concurrent document runs")
    _flag(run, "--call-budget", path="opts.call_budget", type=int, help="Maximum backend calls per document")
    _flag(run, "--gold-relation-prior", path="opts.gold_relation_prior", action="store_const",
          help="Use gold relations instead of the relation stage")
    _flag(run, "--strict-entities", path="opts.strict_entities", action="store_const",
          help="Reject entities that are not verbatim in the passage")
    _flag(run, "--prompt-style", path="opts.prompt_style", choices=PROMPT_STYLES,
          help="chat (candidate list) or tuned (open listing)")
    _flag(run, "--temperature", path="opts.decode.temperature", type=float, help="Decoding temperature")
    _flag(run, "--max-tokens", path="opts.decode.max_tokens", type=int, help="Maximum completion tokens")
    return run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="docre", description="Document-level relation extraction with chat models")
    subparsers = parser.add_subparsers(dest="command", required=True)
    common = _common_parser()
    run = _run_parser()

    ingest = subparsers.add_parser("ingest", parents=[common], help="Parse and clean a corpus")
    _inverse_flag(ingest)
    ingest.set_defaults(handler=cmd_ingest)

    extract = subparsers.add_parser("extract", parents=[common, run], help="Extract facts with one paradigm")
    extract.add_argument("--stage", choices=STAGES,
                         help="Run a single RHF stage with gold upstream inputs instead of a paradigm")
    extract.set_defaults(handler=cmd_extract)

    evaluate = subparsers.add_parser("eval", parents=[common], help="Score predictions against gold")
    evaluate.add_argument("--predictions", help="predictions.jsonl to score")
    evaluate.add_argument("--stage-predictions", nargs="+", help="stage_predictions.jsonl file(s) to score")
    evaluate.add_argument("--stage", choices=STAGES, help="Stage of --stage-predictions (default: from the file)")
    evaluate.add_argument("--counts", help="Counts-only JSON {\"rows\": [{name, tp, fp, gold}]} (audit mode)")
    evaluate.add_argument("--expect-f1", type=float, help="Exit 1 unless the first row's F1 is within 0.01")
    evaluate.add_argument("--first-column", help="Header of the name column")
    _flag(evaluate, "--paradigm", path="paradigm", choices=PARADIGMS, help="Paradigm label for the report")
    evaluate.set_defaults(handler=cmd_eval)

    tuning = subparsers.add_parser("gen-tuning", parents=[common], help="Write instruction-tuning samples")
    _inverse_flag(tuning)
    _flag(tuning, "--format", path="tuning.format", choices=TUNING_FORMATS, help="Line shape (default: records)")
    _flag(tuning, "--include-negatives", path="tuning.include_negatives", action="store_const",
          help="Add head samples answered 'no entity' for absent relations")
    _flag(tuning, "--negatives-per-doc", path="tuning.negatives_per_doc", type=int,
          help="Negative head samples per document")
    _flag(tuning, "--check-proportions", path="tuning.check_proportions", action="store_const",
          help="Report stage shares before and after inverse augmentation")
    tuning.set_defaults(handler=cmd_gen_tuning)

    compare = subparsers.add_parser("compare-paradigms", parents=[common, run],
                                    help="Run several paradigms and render one table")
    compare.add_argument("--paradigms", nargs="+", choices=PARADIGMS, help="Paradigms to compare (default: all)")
    compare.set_defaults(handler=cmd_compare_paradigms)
    return parser


@handle_errors
def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    log_format = args.log_format or Config.LOG_FORMAT
    setup_logging(
        log_dir=args.log_dir or Config.LOG_DIR,
        log_level=args.log_level or Config.validated_log_level(),
        json_format=log_format == LOG_FORMAT_JSON,
        console_output=not args.quiet,
        run_id=f"{args.command}-{datetime.now():%Y%m%d-%H%M%S}",
    )

    cfg = load_run_config(args)
    write_snapshot(cfg, Path(cfg.output_dir))
    logger.info("Command started", extra={
        "command": args.command, "output_dir": cfg.output_dir, "environment": Config.get_config_info(),
    })
    return args.handler(cfg, args)


if __name__ == "__main__":
    sys.exit(main())
