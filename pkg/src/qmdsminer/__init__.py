"""Mine query-based multi-document summarization datasets from QA and document corpora."""

from .corpus_io import (
    Document,
    DocumentCorpus,
    QAExample,
    Sentence,
    load_documents,
    load_qa_examples,
    read_dataset,
    segment_sentences,
    tokenize,
    write_dataset,
)
from .embedding import HashingEmbedder, VectorStore, embed_baseline, load_vectors, similarity
from .miner import MinerConfig, QmdsExample, make_extractive, mine_corpus, mine_example
from .vector_index import Index, brute_force_query, build_index, query_threshold

__version__ = "0.1.0"
