"""
Unit tests for exit-code mapping
"""
import pytest
from pydantic import ValidationError

from src.docre.error_handler import exit_code_for, handle_errors
from src.docre.exceptions import (
    AcceptanceMismatchError,
    BackendTimeoutError,
    ConfigurationError,
    CorpusFormatError,
    OntologyValidationError,
    OracleContextError,
    UnknownDocumentError,
)
from src.docre.schemas import RunConfig


class TestExitCodeFor:
    """Exception family to exit code"""

    @pytest.mark.parametrize("exc, code", [
        (AcceptanceMismatchError("F1 differs"), 1),
        (OntologyValidationError("duplicate"), 2),
        (CorpusFormatError("bad span", ordinal=0, field_path="vertexSet.0.0.pos"), 2),
        (ConfigurationError("missing key"), 2),
        (UnknownDocumentError(["Atlantis"]), 2),
        (FileNotFoundError("corpus.json"), 2),
        (BackendTimeoutError("slow", stage="fact"), 3),
        (OracleContextError("no document"), 3),
    ])
    def test_families(self, exc, code):
        assert exit_code_for(exc)[0] == code

    def test_pydantic_validation_is_input_error(self):
        with pytest.raises(ValidationError) as exc_info:
            RunConfig(paradigm="dxf")
        assert exit_code_for(exc_info.value) == (2, "input_error")


class TestHandleErrors:
    """Decorated entry points return exit codes"""

    def test_success_and_explicit_code(self):
        assert handle_errors(lambda: None)() == 0
        assert handle_errors(lambda: 1)() == 1

    def test_error_reported_on_stderr(self, capsys):
        @handle_errors
        def command():
            raise CorpusFormatError("entity index out of range", ordinal=3, field_path="labels.0.h")

        assert command() == 2
        err = capsys.readouterr().err
        assert err.startswith("error (input_error): document #3 at labels.0.h")

    def test_unexpected_error(self, capsys):
        @handle_errors
        def command():
            raise RuntimeError("boom")

        assert command() == 2
        assert "unexpected_error" in capsys.readouterr().err
