"""Mine (query, long answer, documents) examples by semantic sentence matching.

Each answer sentence is matched against every corpus sentence; matches whose
score falls strictly inside ``(theta_L, theta_U)`` count toward their
document's relevance score (the plain sum of match scores).  The top-K
documents form the example's inputs, provided enough answer sentences are
supported by them.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Sequence
from urllib.parse import urlparse

from .corpus_io import Document, DocumentCorpus, QAExample, Sentence, key_order, split_key, tokenize
from .embedding import VectorStore
from .vector_index import (
    DEFAULT_LEAF_CAPACITY,
    DEFAULT_SEED,
    DEFAULT_SPILL_FRACTION,
    Index,
    build_index,
    query_threshold,
)

SPLITS = ("train", "dev", "test")
OUTCOMES = ("emitted", "low_recall", "no_matches")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


class ParameterError(ValueError):
    """A setting is out of range; ``field`` names it."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class MinerConfig:
    theta_L: float = 0.8
    theta_U: float = 0.99
    top_k: int = 7
    min_summary_recall: float = 0.75
    split_fractions: tuple[float, float, float] = (0.825, 0.08, 0.095)
    dedup_url_host: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.theta_L < self.theta_U <= 1.0:
            name = "theta_L" if not 0.0 < self.theta_L < 1.0 else "theta_U"
            raise ParameterError(name, "need 0 < theta_L < theta_U <= 1")
        if self.top_k < 1:
            raise ParameterError("top_k", "must be >= 1")
        if not 0.0 < self.min_summary_recall <= 1.0:
            raise ParameterError("min_summary_recall", "must lie in (0, 1]")
        fr = tuple(float(f) for f in self.split_fractions)
        if len(fr) != 3 or min(fr) <= 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise ParameterError("split_fractions", "must be three positive numbers summing to 1")
        object.__setattr__(self, "split_fractions", fr)


@dataclass(frozen=True)
class SentenceMatch:
    answer_index: int
    doc_id: str
    sentence_index: int
    score: float


@dataclass(frozen=True)
class DocumentScore:
    doc_id: str
    psi: float
    matches: tuple[SentenceMatch, ...]


@dataclass(frozen=True)
class InputDoc:
    document: Document
    score: DocumentScore


@dataclass(frozen=True)
class Substitution:
    doc_id: str
    sentence_index: int
    answer_index: int
    score: float


@dataclass(frozen=True)
class QmdsExample:
    example_id: str
    query: str
    target: tuple[str, ...]
    input_docs: tuple[InputDoc, ...]
    summary_recall: float
    split: str
    variant: str = "abstractive"
    substitutions: tuple[Substitution, ...] = ()

    @property
    def target_text(self) -> str:
        return " ".join(self.target)

    def to_record(self) -> dict:
        return {
            "example_id": self.example_id,
            "query": self.query,
            "target": self.target_text,
            "variant": self.variant,
            "split": self.split,
            "summary_recall": self.summary_recall,
            "input_docs": [
                {
                    "id": d.document.id,
                    "url": d.document.url,
                    "text": d.document.text,
                    "score": d.score.psi,
                    "sentences": [s.text for s in d.document.sentences],
                    "paragraph_breaks": list(d.document.paragraph_breaks),
                    "matches": [[m.answer_index, m.sentence_index, m.score] for m in d.score.matches],
                }
                for d in self.input_docs
            ],
            "target_sentences": list(self.target),
            "substitutions": [
                {
                    "doc_id": s.doc_id,
                    "sentence_index": s.sentence_index,
                    "answer_index": s.answer_index,
                    "score": s.score,
                }
                for s in self.substitutions
            ],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "QmdsExample":
        docs = []
        for d in rec["input_docs"]:
            doc = Document.from_sentences(d["id"], d["url"], d["sentences"], d["paragraph_breaks"])
            if doc.text != d["text"]:
                raise ValueError(f"document {d['id']!r}: text does not match its sentences")
            matches = tuple(SentenceMatch(int(k), d["id"], int(j), float(s)) for k, j, s in d["matches"])
            docs.append(InputDoc(doc, DocumentScore(d["id"], float(d["score"]), matches)))
        subs = tuple(
            Substitution(s["doc_id"], int(s["sentence_index"]), int(s["answer_index"]), float(s["score"]))
            for s in rec.get("substitutions", [])
        )
        if rec["variant"] not in ("abstractive", "extractive") or rec["split"] not in SPLITS:
            raise ValueError("unknown variant or split")
        return cls(
            example_id=rec["example_id"],
            query=rec["query"],
            target=tuple(rec["target_sentences"]),
            input_docs=tuple(docs),
            summary_recall=float(rec["summary_recall"]),
            split=rec["split"],
            variant=rec["variant"],
            substitutions=subs,
        )


@dataclass(frozen=True)
class Rejection:
    example_id: str
    reason: str
    summary_recall: float = 0.0
    psis: tuple[float, ...] = ()


@dataclass(frozen=True)
class MiningLogEntry:
    example_id: str
    outcome: str
    recall: float
    num_docs: int
    psi: tuple[float, ...]

    def to_record(self) -> dict:
        return {
            "example_id": self.example_id,
            "outcome": self.outcome,
            "recall": self.recall,
            "num_docs": self.num_docs,
            "psi": list(self.psi),
        }


def _as_indices(index: Index | Sequence[Index]) -> Sequence[Index]:
    return [index] if isinstance(index, Index) else index


def match_answer_sentence(
    sentence: Sentence,
    vectors: VectorStore,
    index: Index | Sequence[Index],
    config: MinerConfig,
    corpus: DocumentCorpus | None = None,
    exact: bool = True,
) -> list[SentenceMatch]:
    """In-band corpus matches for one answer sentence.

    ``index`` may be a list of shard indices; their hits are merged by score
    (descending) and key.  Keys whose owner is not a corpus document are
    dropped when ``corpus`` is given.
    """
    if sentence.key not in vectors:
        raise KeyError(f"no vector for answer sentence {sentence.key!r}")
    q = vectors[sentence.key]
    hits: list[tuple[str, float]] = []
    for shard in _as_indices(index):
        hits.extend(query_threshold(shard, q, config.theta_L, exact=exact))
    hits.sort(key=lambda kv: (-kv[1], key_order(kv[0])))
    out = []
    for key, score in hits:
        if not config.theta_L < score < config.theta_U:
            continue
        doc_id, j = split_key(key)
        if corpus is not None and doc_id not in corpus:
            continue
        out.append(SentenceMatch(sentence.index, doc_id, j, score))
    return out


def score_documents(match_sets: Iterable[Iterable[SentenceMatch]]) -> list[DocumentScore]:
    by_doc: dict[str, list[SentenceMatch]] = {}
    for matches in match_sets:
        for m in matches:
            by_doc.setdefault(m.doc_id, []).append(m)
    scores = []
    for doc_id, matches in by_doc.items():
        matches.sort(key=lambda m: (m.answer_index, m.sentence_index))
        scores.append(DocumentScore(doc_id, math.fsum(m.score for m in matches), tuple(matches)))
    scores.sort(key=lambda d: (-d.psi, d.doc_id))
    return scores


def summary_recall(answer_sentences: Sequence[Sentence], selected_docs: Iterable[DocumentScore]) -> float:
    """Fraction of answer sentences with at least one match in the selected documents."""
    n = len(answer_sentences)
    if n == 0:
        raise ValueError("an answer needs at least one sentence")
    covered = {m.answer_index for d in selected_docs for m in d.matches}
    return len(covered) / n


def _url_host(url: str) -> str:
    return urlparse(url).netloc.lower()


def _dedup_hosts(scores: list[DocumentScore], corpus: DocumentCorpus) -> list[DocumentScore]:
    seen: set[str] = set()
    kept = []
    for d in scores:
        host = _url_host(corpus[d.doc_id].url)
        if host and host in seen:
            continue
        seen.add(host)
        kept.append(d)
    return kept


def _fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def assign_split(qa: QAExample | Sequence[str], fractions: Sequence[float] = MinerConfig.split_fractions) -> str:
    """Deterministic train/dev/test label from a hash of the long answer alone."""
    texts = [s.text for s in qa.answer_sentences] if isinstance(qa, QAExample) else list(qa)
    normalized = " ".join(tok for text in texts for tok in tokenize(text))
    u = _fnv1a_64(normalized.encode("utf-8")) / 2.0**64
    f_train, f_dev = fractions[0], fractions[1]
    if u < f_train:
        return "train"
    if u < f_train + f_dev:
        return "dev"
    return "test"


def rank_documents(
    qa: QAExample,
    corpus: DocumentCorpus,
    vectors: VectorStore,
    index: Index | Sequence[Index],
    config: MinerConfig,
    exact: bool = True,
) -> tuple[list[DocumentScore], float]:
    """Top-K document scores and the summary recall they support."""
    match_sets = [match_answer_sentence(s, vectors, index, config, corpus, exact) for s in qa.answer_sentences]
    ranked = score_documents(match_sets)
    if config.dedup_url_host:
        ranked = _dedup_hosts(ranked, corpus)
    selected = ranked[: config.top_k]
    return selected, summary_recall(qa.answer_sentences, selected)


def mine_example(
    qa: QAExample,
    corpus: DocumentCorpus,
    vectors: VectorStore,
    index: Index | Sequence[Index],
    config: MinerConfig = MinerConfig(),
    exact: bool = True,
) -> QmdsExample | Rejection:
    selected, recall = rank_documents(qa, corpus, vectors, index, config, exact)
    psis = tuple(d.psi for d in selected)
    if not selected:
        return Rejection(qa.example_id, "no_matches", 0.0, ())
    if recall < config.min_summary_recall:
        return Rejection(qa.example_id, "low_recall", recall, psis)
    return QmdsExample(
        example_id=qa.example_id,
        query=qa.query,
        target=tuple(s.text for s in qa.answer_sentences),
        input_docs=tuple(InputDoc(corpus[d.doc_id], d) for d in selected),
        summary_recall=recall,
        split=assign_split(qa, config.split_fractions),
    )


def log_entry(outcome: QmdsExample | Rejection) -> MiningLogEntry:
    if isinstance(outcome, Rejection):
        o = outcome
        return MiningLogEntry(o.example_id, o.reason, o.summary_recall, len(o.psis), o.psis)
    psis = tuple(d.score.psi for d in outcome.input_docs)
    return MiningLogEntry(outcome.example_id, "emitted", outcome.summary_recall, len(psis), psis)


def make_extractive(example: QmdsExample) -> QmdsExample:
    """Copy answer sentences verbatim over their best-matching document sentences.

    Candidate (answer sentence, document sentence) pairs are taken in order
    of decreasing score (ties: doc id, sentence index, answer index); a pair
    is accepted when neither side is taken yet.  This is the fixed point of
    "every answer sentence claims its best free slot, the higher score wins
    a contested slot".
    """
    if example.variant != "abstractive":
        raise ValueError("make_extractive expects an abstractive example")
    candidates = [m for d in example.input_docs for m in d.score.matches]
    candidates.sort(key=lambda m: (-m.score, m.doc_id, m.sentence_index, m.answer_index))
    used_answers: set[int] = set()
    used_slots: set[tuple[str, int]] = set()
    subs = []
    for m in candidates:
        slot = (m.doc_id, m.sentence_index)
        if m.answer_index in used_answers or slot in used_slots:
            continue
        used_answers.add(m.answer_index)
        used_slots.add(slot)
        subs.append(Substitution(m.doc_id, m.sentence_index, m.answer_index, m.score))
    subs.sort(key=lambda s: (s.doc_id, s.sentence_index))

    by_doc: dict[str, dict[int, str]] = {}
    for s in subs:
        by_doc.setdefault(s.doc_id, {})[s.sentence_index] = example.target[s.answer_index]
    docs = []
    for d in example.input_docs:
        edits = by_doc.get(d.document.id)
        if edits:
            texts = [edits.get(j, s.text) for j, s in enumerate(d.document.sentences)]
            docs.append(InputDoc(d.document.with_sentence_texts(texts), d.score))
        else:
            docs.append(d)
    return replace(example, input_docs=tuple(docs), variant="extractive", substitutions=tuple(subs))


def shard_corpus(corpus: DocumentCorpus, shards: int) -> list[list[Document]]:
    """Round-robin documents (in file order) into ``shards`` groups."""
    if shards < 1:
        raise ValueError("shards must be >= 1")
    groups: list[list[Document]] = [[] for _ in range(shards)]
    for i, doc in enumerate(corpus):
        groups[i % shards].append(doc)
    return groups


def build_shard_indices(
    corpus: DocumentCorpus,
    vectors: VectorStore,
    shards: int = 1,
    leaf_capacity: int = DEFAULT_LEAF_CAPACITY,
    spill_fraction: float = DEFAULT_SPILL_FRACTION,
    seed: int = DEFAULT_SEED,
) -> list[Index]:
    indices = []
    for s, docs in enumerate(shard_corpus(corpus, shards)):
        keys = [sent.key for doc in docs for sent in doc.sentences]
        missing = [k for k in keys if k not in vectors]
        if missing:
            raise KeyError(f"no vectors for corpus sentences {missing[:3]}")
        indices.append(build_index(vectors.subset(keys), leaf_capacity, spill_fraction, seed + s))
    return indices


@dataclass
class MiningResult:
    examples: list[QmdsExample] = field(default_factory=list)
    log: list[MiningLogEntry] = field(default_factory=list)

    def counts(self) -> dict[str, int]:
        out = dict.fromkeys(OUTCOMES, 0)
        for entry in self.log:
            out[entry.outcome] += 1
        return out


def mine_corpus(
    qa_examples: Sequence[QAExample],
    corpus: DocumentCorpus,
    vectors: VectorStore,
    indices: Sequence[Index],
    config: MinerConfig = MinerConfig(),
    threads: int = 1,
    exact: bool = True,
) -> MiningResult:
    """Mine every QA example; output is ordered by example id whatever ``threads`` is."""

    def one(qa: QAExample):
        return mine_example(qa, corpus, vectors, indices, config, exact)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one, qa_examples))
    else:
        outcomes = [one(qa) for qa in qa_examples]
    outcomes.sort(key=lambda o: o.example_id)
    result = MiningResult()
    for o in outcomes:
        result.log.append(log_entry(o))
        if isinstance(o, QmdsExample):
            result.examples.append(o)
    return result


CONFIG_FIELDS = tuple(f.name for f in fields(MinerConfig))
