"""Deterministic synthetic corpus with planted paraphrases.

Answer sentences use words that never occur in filler text, so a document
sentence scores high against an answer sentence only if it was planted as a
copy or an edited copy of it.  Edit strength sets where the hashing
embedder's score lands:

* ``verbatim``  exact copy, score 1.0 (above the upper threshold)
* ``append``    one extra word at the end, around 0.97
* ``swap1``     one interior word replaced, around 0.9
* ``swap3``     three interior words replaced, around 0.7 (below the band)

The bundled files under ``data/fixture`` are the output of
``generate_fixture()`` with default arguments.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .corpus_io import write_jsonl

FIXTURE_SEED = 13
NUM_DOCS = 60

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr", "pl"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]


def _word_pool(rng: random.Random, count: int, syllables: int, exclude: set[str]) -> list[str]:
    words: list[str] = []
    seen = set(exclude)
    while len(words) < count:
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(syllables))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def _sentence(words: list[str]) -> str:
    return " ".join([words[0].capitalize()] + words[1:]) + "."


# per example: answer length, then (sentence k, edit kind, number of documents)
_PLANS: list[tuple[int, list[tuple[int, str, int]]]] = [
    # nine supporting documents, truncated to the top seven
    (4, [(0, "swap1", 5), (1, "append", 4), (2, "swap1", 3), (3, "swap1", 3), (0, "verbatim", 1)]),
    (3, [(0, "append", 2), (1, "swap1", 2), (2, "swap1", 2), (1, "swap3", 2)]),
    (5, [(0, "swap1", 2), (1, "swap1", 1), (2, "append", 2), (3, "swap1", 1), (4, "swap1", 2)]),
    (4, [(0, "swap1", 3), (1, "swap1", 3), (2, "swap1", 2), (3, "append", 1), (2, "swap3", 3)]),
    # three documents only
    (3, [(0, "swap1", 1), (1, "append", 1), (2, "swap1", 1)]),
    # two of four answer sentences supported: rejected for low recall
    (4, [(0, "swap1", 2), (1, "swap1", 1), (2, "verbatim", 2), (3, "swap3", 2)]),
    # nothing inside the band: rejected with no matches
    (4, [(0, "verbatim", 2), (1, "swap3", 2), (2, "swap3", 1)]),
    # three of four supported: recall exactly 0.75, kept
    (4, [(0, "swap1", 2), (1, "append", 2), (2, "swap1", 1), (3, "swap3", 1)]),
    (3, [(0, "swap1", 4), (1, "swap1", 3), (2, "append", 3)]),
    # one document supports the same answer sentence twice
    (4, [(0, "swap1", 2), (0, "append", 2), (1, "swap1", 2), (2, "swap1", 2), (3, "swap1", 2)]),
]

_QUERY_STEMS = ["why do", "what is", "how does", "when did", "where is"]


@dataclass
class Fixture:
    documents: list[dict] = field(default_factory=list)
    qa: list[dict] = field(default_factory=list)

    def write(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_jsonl(directory / "documents.jsonl", self.documents)
        write_jsonl(directory / "qa.jsonl", self.qa)


def _edit(tokens: list[str], kind: str, rng: random.Random, spare: list[str]) -> list[str]:
    out = list(tokens)
    if kind == "verbatim":
        return out
    if kind == "append":
        return out + [spare.pop()]
    swaps = {"swap1": 1, "swap3": 3}[kind]
    # interior positions two apart, so no two edits share a bigram
    positions = rng.sample(range(2, len(out) - 2, 2), swaps)
    for p in positions:
        out[p] = spare.pop()
    return out


def generate_fixture(seed: int = FIXTURE_SEED, num_docs: int = NUM_DOCS) -> Fixture:
    rng = random.Random(seed)
    answer_words = _word_pool(rng, 14 * sum(n for n, _ in _PLANS), 3, set())
    spare_words = _word_pool(rng, 400, 3, set(answer_words))
    filler_words = _word_pool(rng, 300, 2, set(answer_words) | set(spare_words))

    doc_sentences: list[list[str]] = [[] for _ in range(num_docs)]
    qa = []
    cursor = 0
    for e, (n_sents, plan) in enumerate(_PLANS):
        answer = []
        for _ in range(n_sents):
            answer.append(answer_words[cursor : cursor + 14])
            cursor += 14
        example_id = f"q{e:03d}"
        stem = _QUERY_STEMS[e % len(_QUERY_STEMS)]
        qa.append(
            {
                "example_id": example_id,
                "query": f"{stem} {answer[0][1]} {answer[0][3]} {answer[1][5]}",
                "long_answer": " ".join(_sentence(a) for a in answer),
            }
        )
        for k, kind, n_docs in plan:
            for d in rng.sample(range(num_docs), n_docs):
                doc_sentences[d].append(_sentence(_edit(answer[k], kind, rng, spare_words)))

    documents = []
    for d in range(num_docs):
        planted = doc_sentences[d]
        filler = [
            _sentence(rng.sample(filler_words, rng.randint(8, 15))) for _ in range(rng.randint(6, 14))
        ]
        sentences = filler
        for s in planted:
            sentences.insert(rng.randint(0, len(sentences)), s)
        paragraphs = []
        i = 0
        while i < len(sentences):
            take = rng.randint(2, 5)
            paragraphs.append(" ".join(sentences[i : i + take]))
            i += take
        documents.append(
            {
                "id": f"doc-{d:03d}",
                "url": f"https://site{d % 17:02d}.example.com/page/{d}",
                "text": "\n\n".join(paragraphs),
            }
        )
    return Fixture(documents, qa)


def bundled_fixture_dir() -> Path:
    return Path(str(resources.files("qmdsminer").joinpath("data/fixture")))


FIXTURE_CONFIG = """\
# Synthetic fixture pipeline configuration
documents = documents.jsonl
qa = qa.jsonl
workdir = work
embedder = baseline
dimension = 512
"""


def write_fixture(directory: str | Path, seed: int = FIXTURE_SEED) -> Path:
    """Write fixture corpora plus a ready-to-run config; returns the config path."""
    directory = Path(directory)
    generate_fixture(seed).write(directory)
    config = directory / "qmdsminer.conf"
    config.write_text(FIXTURE_CONFIG, encoding="utf-8")
    return config
