import numpy as np
import pytest

from qmdsminer.corpus_io import load_documents, load_qa_examples
from qmdsminer.embedding import HashingEmbedder, VectorStore
from qmdsminer.fixture import bundled_fixture_dir
from qmdsminer.miner import build_shard_indices


def random_store(n, dim, seed=0, prefix="v"):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, dim))
    x /= np.linalg.norm(x, axis=1)[:, None]
    return VectorStore(dim, [f"{prefix}#{i}" for i in range(n)], x)


@pytest.fixture(scope="session")
def fixture_corpus():
    return load_documents(bundled_fixture_dir() / "documents.jsonl")


@pytest.fixture(scope="session")
def fixture_qa():
    return load_qa_examples(bundled_fixture_dir() / "qa.jsonl").examples


@pytest.fixture(scope="session")
def fixture_vectors(fixture_corpus, fixture_qa):
    sentences = list(fixture_corpus.sentences()) + [s for q in fixture_qa for s in q.answer_sentences]
    return HashingEmbedder(512).embed_many(sentences)


@pytest.fixture(scope="session")
def fixture_indices(fixture_corpus, fixture_vectors):
    return build_shard_indices(fixture_corpus, fixture_vectors, shards=1, leaf_capacity=32)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
