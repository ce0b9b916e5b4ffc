"""TextRank extractive baseline and a query-driven paragraph pre-filter."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus_io import Document, Sentence, tokenize

logger = logging.getLogger(__name__)

DEFAULT_NUM_SENTENCES = 4


def _log_length(n: int) -> float:
    # log 1 = 0 would zero the denominator for one-token sentences
    return math.log(n) if n >= 2 else math.log(n + 1)


def sentence_weight(a: Sequence[str], b: Sequence[str]) -> float:
    """Shared word types over the sum of log sentence lengths."""
    shared = len(set(a) & set(b))
    denom = _log_length(len(a)) + _log_length(len(b))
    if not shared or denom == 0.0:
        return 0.0
    return shared / denom


def similarity_matrix(token_lists: Sequence[Sequence[str]]) -> np.ndarray:
    n = len(token_lists)
    w = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            w[i, j] = w[j, i] = sentence_weight(token_lists[i], token_lists[j])
    return w


@dataclass
class PageRankResult:
    scores: np.ndarray
    iterations: int
    converged: bool
    residuals: list[float]


def weighted_pagerank(
    weights: np.ndarray, damping: float = 0.85, tolerance: float = 1e-6, max_iterations: int = 100
) -> PageRankResult:
    """Iterate ``WS = (1 - d) + d * M^T WS`` from all-ones.

    Scores keep summing to the node count: a node with no edges spreads its
    share uniformly instead of dropping it.
    """
    if not 0.0 < damping < 1.0:
        raise ValueError("damping must lie in (0, 1)")
    n = weights.shape[0]
    out_weight = weights.sum(axis=1)
    dangling = out_weight == 0
    transition = np.divide(weights, out_weight[:, None], out=np.zeros_like(weights), where=~dangling[:, None])
    ws = np.ones(n)
    residuals = []
    for it in range(1, max_iterations + 1):
        spread = ws[dangling].sum() / n
        new = (1.0 - damping) + damping * (transition.T @ ws + spread)
        residual = float(np.abs(new - ws).max())
        residuals.append(residual)
        ws = new
        if residual < tolerance:
            return PageRankResult(ws, it, True, residuals)
    return PageRankResult(ws, max_iterations, False, residuals)


@dataclass
class TextRankSummary:
    sentences: list[Sentence]
    scores: dict[tuple[str, int], float]
    iterations: int
    converged: bool
    # more sentences were requested than the input has
    truncated: bool


def textrank_summarize(
    docs: Sequence[Document],
    num_sentences: int = DEFAULT_NUM_SENTENCES,
    damping: float = 0.85,
    tolerance: float = 1e-6,
    max_iterations: int = 100,
) -> TextRankSummary:
    """Rank all sentences of ``docs`` with weighted PageRank and keep the best.

    Selected sentences come back ordered by (doc id, sentence index).
    """
    if num_sentences < 1:
        raise ValueError("num_sentences must be positive")
    nodes = [s for d in docs for s in d.sentences]
    if not nodes:
        raise ValueError("TextRank needs at least one sentence")
    pr = weighted_pagerank(similarity_matrix([tokenize(s.text) for s in nodes]), damping, tolerance, max_iterations)
    if not pr.converged:
        logger.warning("TextRank stopped after %d iterations without converging", max_iterations)
    order = sorted(range(len(nodes)), key=lambda i: (-pr.scores[i], nodes[i].doc_id, nodes[i].index))
    chosen = sorted((nodes[i] for i in order[:num_sentences]), key=lambda s: (s.doc_id, s.index))
    return TextRankSummary(
        sentences=chosen,
        scores={(s.doc_id, s.index): float(pr.scores[i]) for i, s in enumerate(nodes)},
        iterations=pr.iterations,
        converged=pr.converged,
        truncated=num_sentences > len(nodes),
    )


def query_precision(query_tokens: Sequence[str], passage_tokens: Sequence[str]) -> float:
    """Clipped unigram precision of the query against one passage."""
    q = Counter(query_tokens)
    p = Counter(passage_tokens)
    return sum(min(c, p[g]) for g, c in q.items()) / len(query_tokens)


def query_filter(query: str, docs: Sequence[Document], max_paragraphs: int) -> list[Document]:
    """Keep the ``max_paragraphs`` paragraphs most relevant to ``query``.

    Paragraph relevance is the query's clipped unigram precision against it.
    Kept paragraphs stay in their documents in original order; documents
    that lose every paragraph are dropped.
    """
    if max_paragraphs < 1:
        raise ValueError("max_paragraphs must be positive")
    q = tokenize(query)
    if not q:
        raise ValueError("query has no tokens")
    scored = []
    for doc in docs:
        for p, text in enumerate(doc.paragraphs()):
            scored.append((query_precision(q, tokenize(text)), doc.id, p))
    scored.sort(key=lambda t: (-t[0], t[1], t[2]))
    keep: dict[str, set[int]] = {}
    for _, doc_id, p in scored[:max_paragraphs]:
        keep.setdefault(doc_id, set()).add(p)
    out = []
    for doc in docs:
        kept = keep.get(doc.id)
        if not kept:
            continue
        texts: list[str] = []
        breaks: list[int] = []
        for p, (a, b) in enumerate(doc.paragraph_spans()):
            if p in kept:
                breaks.append(len(texts))
                texts.extend(s.text for s in doc.sentences[a:b])
        out.append(Document.from_sentences(doc.id, doc.url, texts, breaks))
    return out
