"""
Application Constants Module

Central repository for all application constants to eliminate magic strings
and provide a single source of truth for configuration values.

This module is organized into logical sections for easy maintenance.
"""
from pathlib import Path

# =============================================================================
# PATHS
# =============================================================================

PROJECT_ROOT = Path(__file__).resolve().parents[2]
DATA_DIR = PROJECT_ROOT / "data"
DEFAULT_ONTOLOGY_PATH = DATA_DIR / "ontology" / "redocred_relations.yaml"
WIKIDATA_OVERLAY_PATH = DATA_DIR / "ontology" / "wikidata_descriptions.yaml"
TEMPLATE_DIR = Path(__file__).resolve().parent / "nlp" / "templates"

# Number of relation types in the shipped Re-DocRED ontology
REDOCRED_RELATION_COUNT = 96


# =============================================================================
# STAGE / PARADIGM CONSTANTS
# =============================================================================

STAGE_RELATION = "relation"
STAGE_HEAD = "head"
STAGE_FACT = "fact"

STAGES = [STAGE_RELATION, STAGE_HEAD, STAGE_FACT]

PARADIGM_DF = "df"
PARADIGM_DRSF = "drsf"
PARADIGM_DRF = "drf"
PARADIGM_DRHF = "drhf"

PARADIGMS = [PARADIGM_DF, PARADIGM_DRSF, PARADIGM_DRF, PARADIGM_DRHF]

# Display labels used in report tables
PARADIGM_LABELS = {
    PARADIGM_DF: "D-F",
    PARADIGM_DRSF: "D-RS-F",
    PARADIGM_DRF: "D-R-F",
    PARADIGM_DRHF: "D-R-H-F",
}

PROMPT_STYLE_CHAT = "chat"
PROMPT_STYLE_TUNED = "tuned"
PROMPT_STYLES = [PROMPT_STYLE_CHAT, PROMPT_STYLE_TUNED]

LISTING_MODE_WITH_CANDIDATES = "with-candidates"
LISTING_MODE_OPEN = "open"


# =============================================================================
# RESPONSE SENTINELS / PARSE REJECTION REASONS
# =============================================================================

NO_RELATION_SENTINEL = "no relation"
NO_ENTITY_SENTINEL = "no entity"

REJECT_NOT_IN_ONTOLOGY = "not-in-ontology"
REJECT_DUPLICATE = "duplicate"
REJECT_NOT_IN_PASSAGE = "not-in-passage"
REJECT_NOT_BRACKETED = "not-bracketed"
REJECT_ANCHOR_MISSING = "relation-anchor-missing"
REJECT_AMBIGUOUS_RELATION = "ambiguous-relation"
REJECT_SUBJECT_MISMATCH = "subject-mismatch"
REJECT_EMPTY_ENTITY = "empty-entity"

# Leading list decorations stripped from response lines: "-", "*", "•", "1.", "2)", "(3)"
PATTERN_LINE_BULLET = r"^\s*(?:[-*•]+|\d+[.)]|\(\d+\))\s*"


# =============================================================================
# BACKEND DEFAULTS
# =============================================================================

DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 1024
DEFAULT_TIMEOUT_S = 60.0
DEFAULT_MAX_RETRIES = 4
DEFAULT_RETRY_BASE_DELAY_S = 1.0
DEFAULT_RETRY_MAX_DELAY_S = 30.0
DEFAULT_MAX_IN_FLIGHT = 8
DEFAULT_REQUESTS_PER_MINUTE = 600
DEFAULT_API_BASE = "http://localhost:8000/v1"
DEFAULT_API_KEY_ENV = "DOCRE_API_KEY"
DEFAULT_MODEL = "gpt-3.5-turbo"

# HTTP statuses treated as transient and retried
RETRYABLE_STATUS_CODES = {408, 409, 429, 500, 502, 503, 504}

BACKEND_ID_ORACLE = "oracle"
BACKEND_ID_REPLAY = "replay"
BACKEND_ID_SCRIPTED = "scripted"


# =============================================================================
# PIPELINE DEFAULTS
# =============================================================================

DEFAULT_CALL_BUDGET = 512
DEFAULT_PARALLELISM = 1

TRACE_STATUS_OK = "ok"
TRACE_STATUS_FAILED = "failed"
TRACE_STATUS_TRUNCATED = "truncated"

# Calls slower than this are logged as slow
SLOW_CALL_THRESHOLD_MS = 20000.0


# =============================================================================
# OUTPUT FILE NAMES
# =============================================================================

PREDICTIONS_FILE = "predictions.jsonl"
TRACES_FILE = "traces.jsonl"
RUN_SUMMARY_FILE = "run_summary.json"
STAGE_PREDICTIONS_FILE = "stage_predictions.jsonl"
CONFIG_SNAPSHOT_FILE = "config_snapshot.yaml"
REPORT_JSON_FILE = "eval_report.json"
REPORT_TABLE_FILE = "eval_report.txt"
PROCESSED_CORPUS_FILE = "processed_corpus.json"
TUNING_SAMPLES_FILE = "tuning_samples.jsonl"
TUNING_MANIFEST_FILE = "tuning_manifest.json"
COMPARISON_TABLE_FILE = "paradigm_comparison.txt"


# =============================================================================
# TUNING DATA
# =============================================================================

TUNING_FORMAT_RECORDS = "records"
TUNING_FORMAT_ALPACA = "alpaca"
TUNING_FORMATS = [TUNING_FORMAT_RECORDS, TUNING_FORMAT_ALPACA]

# Stage shares (percent) of the three-stage training set reported for Re-DocRED train
EXPECTED_STAGE_SHARES = {
    STAGE_RELATION: 2.8,
    STAGE_HEAD: 24.23,
    STAGE_FACT: 72.97,
}
STAGE_SHARE_TOLERANCE_PP = 1.0


# =============================================================================
# EXIT CODES
# =============================================================================

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INPUT_ERROR = 2
EXIT_BACKEND_FAILURE = 3


# =============================================================================
# LOGGING
# =============================================================================

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
DEFAULT_LOG_LEVEL = "INFO"
DEFAULT_LOG_DIR = "logs"
LOG_FORMAT_JSON = "json"
LOG_FORMAT_TEXT = "text"
