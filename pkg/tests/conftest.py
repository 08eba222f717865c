"""
Shared fixtures: the shipped ontology and the sample corpus
"""
import logging

import pytest

from src.docre.constants import DEFAULT_ONTOLOGY_PATH
from src.docre.services.corpus_loader import parse_corpus
from src.docre.services.ontology_loader import load_ontology
from tests.sample_data import sample_records, write_records


@pytest.fixture(scope="session")
def ontology():
    """The shipped 96-relation ontology"""
    return load_ontology(DEFAULT_ONTOLOGY_PATH)


@pytest.fixture
def sample_docs(ontology):
    return parse_corpus(sample_records(), ontology)


@pytest.fixture
def harvard_doc(sample_docs):
    return sample_docs[0]


@pytest.fixture
def obama_doc(sample_docs):
    return sample_docs[1]


@pytest.fixture
def corpus_file(tmp_path):
    return write_records(tmp_path / "sample_corpus.json", sample_records())


@pytest.fixture
def isolated_logging():
    """Drop the handlers setup_logging attaches to the root logger once the test ends"""
    root = logging.getLogger()
    level = root.level
    yield root
    for handler in list(root.handlers):
        if not type(handler).__module__.startswith("_pytest"):
            root.removeHandler(handler)
            handler.close()
    root.setLevel(level)
