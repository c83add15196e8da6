from __future__ import annotations

from pathlib import Path

import pytest

from policyrag.corpus import Corpus, ingest
from policyrag.encoder import EncoderParams
from policyrag.retriever import LateInteractionIndex, build_index

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_corpus_path() -> Path:
    return FIXTURES / "corpus_3docs.jsonl"


@pytest.fixture(scope="session")
def fixture_corpus(fixture_corpus_path) -> Corpus:
    return ingest(fixture_corpus_path)


@pytest.fixture(scope="session")
def default_params() -> EncoderParams:
    return EncoderParams.initialize(hash_seed=0)


@pytest.fixture(scope="session")
def fixture_index(fixture_corpus, default_params) -> LateInteractionIndex:
    return build_index(fixture_corpus, default_params)


@pytest.fixture()
def answer_backend() -> str:
    return f"mock:{FIXTURES / 'answer_fixture.jsonl'}"
