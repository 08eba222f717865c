"""
Exception hierarchy for the DocRE toolkit

Parse failures of model output are data (ParseOutcome.rejected_lines) and never
raise; everything below signals input, configuration or transport problems.
"""
from typing import List, Optional


class DocREError(Exception):
    """Base class for all toolkit errors"""


# ===== Input errors =====

class OntologyValidationError(DocREError):
    """Ontology file violates a uniqueness or inverse-pairing invariant"""

    def __init__(self, message: str, offenders: Optional[List[str]] = None):
        super().__init__(message)
        self.offenders = offenders or []


class CorpusFormatError(DocREError):
    """Malformed corpus record; carries the document ordinal and field path"""

    def __init__(self, message: str, ordinal: Optional[int] = None, field_path: str = ""):
        location = f"document #{ordinal}" if ordinal is not None else "corpus"
        if field_path:
            location = f"{location} at {field_path}"
        super().__init__(f"{location}: {message}")
        self.ordinal = ordinal
        self.field_path = field_path


class ConfigurationError(DocREError):
    """Invalid or incomplete run configuration (raised before any network activity)"""


# ===== Backend errors =====

class BackendError(DocREError):
    """Base class for chat backend failures"""

    def __init__(self, message: str, stage: Optional[str] = None, backend_id: Optional[str] = None):
        super().__init__(message)
        self.stage = stage
        self.backend_id = backend_id


class BackendUnavailableError(BackendError):
    """Transport failure after all retries"""


class ProviderError(BackendError):
    """The provider answered with an error payload"""

    def __init__(self, message: str, raw_body: str = "", status_code: Optional[int] = None,
                 stage: Optional[str] = None, backend_id: Optional[str] = None):
        super().__init__(message, stage=stage, backend_id=backend_id)
        self.raw_body = raw_body
        self.status_code = status_code


class BackendTimeoutError(BackendError):
    """Request did not complete within the timeout budget"""


class OracleContextError(BackendError):
    """Oracle request lacks the context fields its stage needs, or names an unknown relation"""


class CacheCorruptionError(DocREError):
    """A cached response could not be decoded"""


# ===== Evaluation errors =====

class EvaluationError(DocREError):
    """Base class for evaluation failures"""


class UnknownDocumentError(EvaluationError):
    """Predictions reference doc_ids absent from the corpus"""

    def __init__(self, offenders: List[str]):
        preview = ", ".join(offenders[:10])
        more = f" (+{len(offenders) - 10} more)" if len(offenders) > 10 else ""
        super().__init__(f"Unknown doc_id(s) in predictions: {preview}{more}")
        self.offenders = offenders


class AcceptanceMismatchError(EvaluationError):
    """A checked expectation (F1 target, stage proportions) did not hold"""


class OutputWriteError(DocREError):
    """An output file could not be written"""

    def __init__(self, path: str, reason: str):
        super().__init__(f"Cannot write {path}: {reason}")
        self.path = path
