"""Corpus ingestion, sentence segmentation, tokenization and dataset files.

All corpus files are JSON lines.  Documents carry ``id``, ``url`` and
``text`` (blank lines separate paragraphs); QA files carry ``example_id``,
``query`` and ``long_answer``.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Iterable, Iterator, Sequence

if TYPE_CHECKING:
    from .miner import QmdsExample

logger = logging.getLogger(__name__)

VARIANTS = ("abstractive", "extractive")


class CorpusFormatError(ValueError):
    """A corpus or dataset file does not follow its line-delimited schema."""


def _load_abbreviations() -> frozenset[str]:
    raw = resources.files("qmdsminer").joinpath("data/abbreviations.txt").read_text("utf-8")
    words = (line.strip().lower() for line in raw.splitlines())
    return frozenset(w for w in words if w and not w.startswith("#"))


ABBREVIATIONS = _load_abbreviations()

_BLANK_LINE = re.compile(r"\n[^\S\n]*\n")
# terminal punctuation, optional closing quotes/brackets, then exactly one space
# (paragraphs are whitespace-normalized before this runs)
_BOUNDARY = re.compile(r"[.?!]+[\"'”’)\]]* ")
_OPENERS = frozenset("\"'“‘([")
_TOKEN = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class Sentence:
    text: str
    doc_id: str
    index: int

    @property
    def key(self) -> str:
        return sentence_key(self.doc_id, self.index)


@dataclass(frozen=True)
class Document:
    id: str
    url: str
    sentences: tuple[Sentence, ...]
    paragraph_breaks: tuple[int, ...]

    @classmethod
    def from_text(cls, doc_id: str, url: str, text: str, segmenter=None) -> "Document":
        texts, breaks = (segmenter or segment_sentences)(text)
        sentences = tuple(Sentence(t, doc_id, j) for j, t in enumerate(texts))
        return cls(doc_id, url, sentences, tuple(breaks))

    @classmethod
    def from_sentences(
        cls, doc_id: str, url: str, texts: Sequence[str], breaks: Sequence[int] | None = None
    ) -> "Document":
        """A document from already segmented text; one paragraph unless ``breaks`` says otherwise."""
        if breaks is None:
            breaks = (0,) if texts else ()
        sentences = tuple(Sentence(t, doc_id, j) for j, t in enumerate(texts))
        return cls(doc_id, url, sentences, tuple(breaks))

    def paragraph_spans(self) -> list[tuple[int, int]]:
        """Half-open sentence index ranges, one per paragraph."""
        ends = list(self.paragraph_breaks[1:]) + [len(self.sentences)]
        return list(zip(self.paragraph_breaks, ends))

    def paragraphs(self) -> list[str]:
        return [" ".join(s.text for s in self.sentences[a:b]) for a, b in self.paragraph_spans()]

    @property
    def text(self) -> str:
        return "\n\n".join(self.paragraphs())

    def with_sentence_texts(self, texts: Sequence[str]) -> "Document":
        return Document.from_sentences(self.id, self.url, texts, self.paragraph_breaks)


@dataclass(frozen=True)
class QAExample:
    example_id: str
    query: str
    answer_sentences: tuple[Sentence, ...]

    @property
    def long_answer(self) -> str:
        return " ".join(s.text for s in self.answer_sentences)


@dataclass
class DocumentCorpus:
    """Documents in file order, indexed by id.  Treat as read-only once built."""

    documents: list[Document] = field(default_factory=list)
    skipped: int = 0

    def __post_init__(self) -> None:
        self._by_id: dict[str, Document] = {}
        for doc in self.documents:
            if doc.id in self._by_id:
                raise CorpusFormatError(f"duplicate document id {doc.id!r}")
            self._by_id[doc.id] = doc

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    def __getitem__(self, doc_id: str) -> Document:
        return self._by_id[doc_id]

    def __contains__(self, doc_id: object) -> bool:
        return doc_id in self._by_id

    def sentence(self, doc_id: str, index: int) -> Sentence:
        return self._by_id[doc_id].sentences[index]

    def sentences(self) -> Iterator[Sentence]:
        for doc in self.documents:
            yield from doc.sentences


def sentence_key(owner_id: str, index: int) -> str:
    return f"{owner_id}#{index}"


def split_key(key: str) -> tuple[str, int]:
    owner, sep, index = key.rpartition("#")
    if not sep or not index.isdigit():
        raise ValueError(f"malformed sentence key {key!r}")
    return owner, int(index)


def key_order(key: str) -> tuple[str, int]:
    """Sort key for sentence keys: owner id, then numeric sentence index."""
    return split_key(key)


def _ends_with_abbreviation(prefix: str) -> bool:
    word = prefix.rsplit(" ", 1)[-1]
    word = word.lstrip("\"'“‘([").rstrip(".").lower()
    return word in ABBREVIATIONS


def _split_paragraph(paragraph: str) -> list[str]:
    sentences = []
    start = 0
    for m in _BOUNDARY.finditer(paragraph):
        nxt = paragraph[m.end() : m.end() + 1]
        if not nxt or not (nxt.isupper() or nxt.isdigit() or nxt in _OPENERS):
            continue
        punct = m.group(0)
        if punct[0] == "." and _ends_with_abbreviation(paragraph[start : m.start()]):
            if len(punct.rstrip(" \"'”’)]")) == 1:
                continue
        sentences.append(paragraph[start : m.end() - 1])
        start = m.end()
    if start < len(paragraph):
        sentences.append(paragraph[start:])
    return sentences


def normalize_paragraphs(text: str) -> list[str]:
    paragraphs = (" ".join(p.split()) for p in _BLANK_LINE.split(text))
    return [p for p in paragraphs if p]


def segment_sentences(text: str) -> tuple[list[str], list[int]]:
    """Split ``text`` into sentences and record paragraph starts.

    A boundary is a run of ``.?!`` followed by a space and an uppercase
    letter, digit or opening quote.  A single period after a stop-listed
    abbreviation ("Dr.", "e.g.") is not a boundary.  Every blank line starts
    a new paragraph.

    >>> segment_sentences("Dr. Smith left. He ran.")
    (['Dr. Smith left.', 'He ran.'], [0])
    """
    sentences: list[str] = []
    breaks: list[int] = []
    for paragraph in normalize_paragraphs(text):
        breaks.append(len(sentences))
        sentences.extend(_split_paragraph(paragraph))
    return sentences, breaks


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens; punctuation and underscores act as separators."""
    return _TOKEN.findall(text.lower())


def _iter_records(path: Path, required: Sequence[str]) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise CorpusFormatError(f"{path}:{lineno}: expected an object")
            for name in required:
                if not isinstance(record.get(name), str):
                    raise CorpusFormatError(f"{path}:{lineno}: missing or non-string field {name!r}")
            yield lineno, record


def _presegmented(path: Path, lineno: int, rec: dict) -> Document:
    texts, breaks = rec["sentences"], rec.get("paragraph_breaks", [0] if rec["sentences"] else [])
    if texts and (breaks[:1] != [0] or any(b >= a for b, a in zip(breaks, breaks[1:])) or breaks[-1] >= len(texts)):
        raise CorpusFormatError(f"{path}:{lineno}: invalid paragraph_breaks")
    doc = Document.from_sentences(rec["id"], rec["url"], texts, breaks)
    if doc.text != rec["text"]:
        raise CorpusFormatError(f"{path}:{lineno}: sentences do not reproduce text")
    return doc


def load_documents(path: str | Path, segmenter: Callable | None = None) -> DocumentCorpus:
    path = Path(path)
    docs: list[Document] = []
    seen: dict[str, int] = {}
    skipped = 0
    for lineno, rec in _iter_records(path, ("id", "url", "text")):
        doc_id = rec["id"]
        if doc_id in seen:
            raise CorpusFormatError(
                f"{path}:{lineno}: duplicate document id {doc_id!r} (first on line {seen[doc_id]})"
            )
        seen[doc_id] = lineno
        if "sentences" in rec:
            doc = _presegmented(path, lineno, rec)
        else:
            doc = Document.from_text(doc_id, rec["url"], rec["text"], segmenter)
        if not doc.sentences:
            skipped += 1
            logger.warning("%s:%d: document %r has empty text, skipped", path, lineno, doc_id)
            continue
        docs.append(doc)
    return DocumentCorpus(docs, skipped)


@dataclass
class QALoadResult:
    examples: list[QAExample]
    skipped: int


def load_qa_examples(path: str | Path, segmenter: Callable | None = None) -> QALoadResult:
    path = Path(path)
    examples: list[QAExample] = []
    skipped = 0
    for lineno, rec in _iter_records(path, ("example_id", "query", "long_answer")):
        if "answer_sentences" in rec:
            texts = list(rec["answer_sentences"])
            if " ".join(texts) != rec["long_answer"]:
                raise CorpusFormatError(f"{path}:{lineno}: answer_sentences do not reproduce long_answer")
        else:
            texts, _ = (segmenter or segment_sentences)(rec["long_answer"])
        if not rec["query"].strip() or not texts:
            skipped += 1
            logger.warning("%s:%d: example %r has an empty query or answer, skipped", path, lineno, rec["example_id"])
            continue
        eid = rec["example_id"]
        sentences = tuple(Sentence(t, eid, k) for k, t in enumerate(texts))
        examples.append(QAExample(eid, rec["query"], sentences))
    return QALoadResult(examples, skipped)


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for rec in records:
                fh.write(json.dumps(rec, ensure_ascii=False))
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def read_jsonl(path: str | Path) -> Iterator[dict]:
    for _, rec in _iter_records(Path(path), ()):
        yield rec


def write_documents(path: str | Path, corpus: Iterable[Document], with_sentences: bool = False) -> None:
    """Write documents; ``with_sentences`` also stores the segmentation so reloading skips it."""

    def record(d: Document) -> dict:
        rec = {"id": d.id, "url": d.url, "text": d.text}
        if with_sentences:
            rec["sentences"] = [s.text for s in d.sentences]
            rec["paragraph_breaks"] = list(d.paragraph_breaks)
        return rec

    write_jsonl(path, (record(d) for d in corpus))


def write_qa_examples(path: str | Path, examples: Iterable[QAExample], with_sentences: bool = False) -> None:
    def record(q: QAExample) -> dict:
        rec = {"example_id": q.example_id, "query": q.query, "long_answer": q.long_answer}
        if with_sentences:
            rec["answer_sentences"] = [s.text for s in q.answer_sentences]
        return rec

    write_jsonl(path, (record(q) for q in examples))


def write_dataset(examples: Sequence["QmdsExample"], path: str | Path, variant: str) -> None:
    """Write mined examples sorted by ``example_id``, one JSON record per line."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    wrong = [ex.example_id for ex in examples if ex.variant != variant]
    if wrong:
        raise ValueError(f"examples {wrong[:3]} are not {variant}")
    ordered = sorted(examples, key=lambda ex: ex.example_id)
    write_jsonl(path, (ex.to_record() for ex in ordered))


def read_dataset(path: str | Path) -> list["QmdsExample"]:
    from .miner import QmdsExample

    path = Path(path)
    out = []
    for lineno, rec in _iter_records(path, ("example_id", "query", "target", "variant", "split")):
        try:
            out.append(QmdsExample.from_record(rec))
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusFormatError(f"{path}:{lineno}: bad dataset record ({exc})") from None
    return out
