"""
Pydantic schemas for on-disk formats and run configuration
Defines data models for ontology files, corpus records, prediction lines and RunConfig
"""
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from src.docre.constants import (
    PARADIGMS,
    PARADIGM_DRHF,
    PROMPT_STYLES,
    PROMPT_STYLE_CHAT,
    STAGES,
    DEFAULT_API_BASE,
    DEFAULT_API_KEY_ENV,
    DEFAULT_MODEL,
    DEFAULT_CALL_BUDGET,
    DEFAULT_PARALLELISM,
    DEFAULT_TEMPERATURE,
    DEFAULT_MAX_TOKENS,
    DEFAULT_ONTOLOGY_PATH,
    TUNING_FORMATS,
    TUNING_FORMAT_RECORDS,
)


# ===== Ontology file =====

class RelationRecord(BaseModel):
    """One relation entry of the ontology file"""
    id: str = Field(..., min_length=1, description="Knowledge-base property code")
    name: str = Field(..., min_length=1, description="Canonical relation name")
    description: str = Field(default="", description="Rewritten description with example triple")
    inverse_id: Optional[str] = Field(None, description="Id of the reciprocal relation")
    symmetric: bool = Field(default=False, description="Relation is its own inverse")

    @field_validator("id", "name")
    @classmethod
    def strip_required(cls, v):
        v = v.strip()
        if not v:
            raise ValueError("must be non-empty")
        return v


class OntologyFile(BaseModel):
    """Top-level ontology document"""
    relations: List[RelationRecord]


class DescriptionOverlay(BaseModel):
    """Alternate description overlay keyed by relation name or id"""
    descriptions: Dict[str, str] = Field(default_factory=dict)


# ===== Corpus file (DocRED / Re-DocRED release format) =====

class MentionRecord(BaseModel):
    name: str = Field(..., min_length=1)
    sent_id: int = Field(..., ge=0)
    pos: List[int] = Field(..., min_length=2, max_length=2)
    type: str = ""


class LabelRecord(BaseModel):
    h: int = Field(..., ge=0)
    t: int = Field(..., ge=0)
    r: str = Field(..., min_length=1)
    evidence: List[int] = Field(default_factory=list)


class DocumentRecord(BaseModel):
    title: str = ""
    sents: List[List[str]]
    vertexSet: List[List[MentionRecord]]
    labels: List[LabelRecord] = Field(default_factory=list)


# ===== Predictions file =====

class PredictionRecord(BaseModel):
    """One line of predictions.jsonl"""
    doc_id: str
    head: str
    relation: str
    tail: str
    paradigm: Optional[str] = None


# ===== Run configuration =====

class DecodeConfig(BaseModel):
    temperature: float = Field(default=DEFAULT_TEMPERATURE, ge=0.0)
    max_tokens: int = Field(default=DEFAULT_MAX_TOKENS, ge=1)
    stop: Optional[List[str]] = None


class RoutingConfig(BaseModel):
    """Per-stage endpoint/model bindings; unset stages fall back to the shared model"""
    api_base: str = DEFAULT_API_BASE
    api_key_env: str = DEFAULT_API_KEY_ENV
    model: str = DEFAULT_MODEL
    stage_models: Dict[str, str] = Field(default_factory=dict)
    oracle: bool = False
    replay_only: bool = False
    cache_dir: Optional[str] = None

    @field_validator("stage_models")
    @classmethod
    def validate_stage_names(cls, v):
        unknown = [s for s in v if s not in STAGES]
        if unknown:
            raise ValueError(f"Unknown stage(s) {unknown}; expected one of {STAGES}")
        return v


class ExtractionOptionsConfig(BaseModel):
    with_description: bool = True
    strict_entities: bool = False
    gold_relation_prior: bool = False
    prompt_style: str = Field(default=PROMPT_STYLE_CHAT)
    parallelism: int = Field(default=DEFAULT_PARALLELISM, ge=1)
    call_budget: int = Field(default=DEFAULT_CALL_BUDGET, ge=1)
    decode: DecodeConfig = Field(default_factory=DecodeConfig)

    @field_validator("prompt_style")
    @classmethod
    def validate_style(cls, v):
        if v not in PROMPT_STYLES:
            raise ValueError(f"prompt_style must be one of {PROMPT_STYLES}")
        return v


class TuningConfig(BaseModel):
    format: str = TUNING_FORMAT_RECORDS
    include_negatives: bool = False
    negatives_per_doc: int = Field(default=1, ge=1)
    check_proportions: bool = False

    @field_validator("format")
    @classmethod
    def validate_format(cls, v):
        if v not in TUNING_FORMATS:
            raise ValueError(f"format must be one of {TUNING_FORMATS}")
        return v


class RunConfig(BaseModel):
    """Reproducible configuration of one command invocation"""
    corpus_path: Optional[str] = None
    split: str = "test"
    ontology_path: str = str(DEFAULT_ONTOLOGY_PATH)
    description_overlay: Optional[str] = None
    strict_corpus: bool = True
    fix_inverses: bool = False
    paradigm: str = PARADIGM_DRHF
    routing: RoutingConfig = Field(default_factory=RoutingConfig)
    opts: ExtractionOptionsConfig = Field(default_factory=ExtractionOptionsConfig)
    tuning: TuningConfig = Field(default_factory=TuningConfig)
    output_dir: str = "runs/latest"
    seed: int = 13
    limit: Optional[int] = Field(default=None, ge=1)

    @field_validator("paradigm")
    @classmethod
    def validate_paradigm(cls, v):
        v = v.lower().replace("-", "")
        if v not in PARADIGMS:
            raise ValueError(f"paradigm must be one of {PARADIGMS}")
        return v

    @model_validator(mode="after")
    def validate_paths(self):
        if self.corpus_path is not None and not Path(self.corpus_path).is_file():
            raise ValueError(f"corpus_path does not exist: {self.corpus_path}")
        if not Path(self.ontology_path).is_file():
            raise ValueError(f"ontology_path does not exist: {self.ontology_path}")
        if self.description_overlay is not None and not Path(self.description_overlay).is_file():
            raise ValueError(f"description_overlay does not exist: {self.description_overlay}")
        return self


# ===== Evaluation reports =====

class ScoreRow(BaseModel):
    """One table row: counts plus percentages kept at full precision"""
    name: str
    tp: int = Field(..., ge=0)
    fp: int = Field(..., ge=0)
    gold: int = Field(..., ge=0)
    recall: float = 0.0
    precision: float = 0.0
    f1: float = 0.0
    duplicate_hits: int = Field(default=0, ge=0)
    calls: Optional[int] = None


class EvalReport(BaseModel):
    """Scores of one run: overall row, per-relation and per-stage breakdowns"""
    overall: ScoreRow
    per_relation: List[ScoreRow] = Field(default_factory=list)
    per_stage: List[ScoreRow] = Field(default_factory=list)
    metadata: Dict[str, Optional[str]] = Field(default_factory=dict)


class AuditRow(BaseModel):
    name: str
    tp: int = Field(..., ge=0)
    fp: int = Field(..., ge=0)
    gold: int = Field(..., ge=0)


class AuditFile(BaseModel):
    """Counts-only input of audit mode: {"rows": [{"name", "tp", "fp", "gold"}]}"""
    rows: List[AuditRow]


# ===== Tuning data =====

class TuningManifest(BaseModel):
    """Per-stage sample counts and shares (percent) of one tuning file"""
    path: str
    format: str
    n_samples: int = Field(..., ge=0)
    counts: Dict[str, int]
    shares: Dict[str, float]
    n_documents: int = Field(default=0, ge=0)
    inverse_fixed: bool = False
