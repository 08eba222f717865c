"""
Command Error Handler

Maps exception families to process exit codes and reports them consistently:
one line on stderr, one structured log record.

    0  success
    1  evaluation / acceptance mismatch
    2  input error (ontology, corpus, configuration, unreadable files)
    3  backend failure

Usage:
    from src.docre.error_handler import handle_errors

    @handle_errors
    def main(argv=None) -> int:
        ...
"""
import functools
import logging
import sys
from typing import Callable, Tuple, Type

from pydantic import ValidationError

from src.docre.constants import EXIT_BACKEND_FAILURE, EXIT_INPUT_ERROR, EXIT_MISMATCH, EXIT_OK
from src.docre.exceptions import (
    AcceptanceMismatchError,
    BackendError,
    ConfigurationError,
    CorpusFormatError,
    DocREError,
    EvaluationError,
    OntologyValidationError,
    OutputWriteError,
)

logger = logging.getLogger(__name__)

# Checked in order; the first matching family wins
EXIT_CODE_MAP: Tuple[Tuple[Tuple[Type[BaseException], ...], int, str], ...] = (
    ((AcceptanceMismatchError,), EXIT_MISMATCH, "mismatch"),
    ((BackendError,), EXIT_BACKEND_FAILURE, "backend_error"),
    ((OntologyValidationError, CorpusFormatError, ConfigurationError, OutputWriteError), EXIT_INPUT_ERROR, "input_error"),
    ((EvaluationError,), EXIT_INPUT_ERROR, "evaluation_input_error"),
    ((ValidationError, FileNotFoundError, IsADirectoryError, PermissionError), EXIT_INPUT_ERROR, "input_error"),
)


def exit_code_for(exc: BaseException) -> Tuple[int, str]:
    """(exit code, error type label) for an exception"""
    for families, code, label in EXIT_CODE_MAP:
        if isinstance(exc, families):
            return code, label
    if isinstance(exc, DocREError):
        return EXIT_INPUT_ERROR, "input_error"
    return EXIT_BACKEND_FAILURE if isinstance(exc, OSError) else EXIT_INPUT_ERROR, "unexpected_error"


def report_error(exc: BaseException) -> int:
    code, label = exit_code_for(exc)
    extra = {"error_type": label, "exception_type": type(exc).__name__, "exit_code": code}
    if isinstance(exc, BackendError):
        extra.update({"stage": exc.stage, "backend_id": exc.backend_id})
    if label == "unexpected_error":
        logger.error(f"Unhandled error: {exc}", exc_info=exc, extra=extra)
    else:
        logger.error(str(exc), extra=extra)
    print(f"error ({label}): {exc}", file=sys.stderr)
    return code


def handle_errors(fn: Callable[..., int]) -> Callable[..., int]:
    """Wrap a command entry point so every failure becomes an exit code"""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs) -> int:
        try:
            result = fn(*args, **kwargs)
        except KeyboardInterrupt:
            print("interrupted", file=sys.stderr)
            return 130
        except Exception as exc:
            return report_error(exc)
        return EXIT_OK if result is None else result

    return wrapper
