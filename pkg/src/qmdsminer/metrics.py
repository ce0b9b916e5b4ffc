"""Summary/source diagnostics and plain token-level ROUGE.

Every function takes token lists produced by :func:`corpus_io.tokenize`.
ROUGE here has no stemming or stopword removal, so numbers are comparable
across runs of this package but not with other ROUGE implementations.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

from .corpus_io import tokenize

HISTOGRAM_BINS = 20


@dataclass(frozen=True)
class Fragment:
    summary_start: int
    source_start: int
    length: int


class CoverageDensity(NamedTuple):
    coverage: float
    density: float
    normalized_density: float
    compression: float


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, overlap: int, n_candidate: int, n_reference: int) -> "RougeScore":
        p = overlap / n_candidate
        r = overlap / n_reference
        return cls(p, r, 2 * p * r / (p + r) if p + r > 0 else 0.0)


def extractive_fragments(summary: Sequence[str], source: Sequence[str]) -> list[Fragment]:
    """Greedy longest-match fragments of ``summary`` found in ``source``.

    At each summary position take the longest run that also occurs in the
    source (leftmost source start on ties) and jump past it; positions with
    no match advance by one.
    """
    positions: dict[str, list[int]] = defaultdict(list)
    for p, tok in enumerate(source):
        positions[tok].append(p)
    fragments = []
    i = 0
    while i < len(summary):
        best_len, best_start = 0, -1
        for p in positions.get(summary[i], ()):
            n = 1
            while i + n < len(summary) and p + n < len(source) and summary[i + n] == source[p + n]:
                n += 1
            if n > best_len:
                best_len, best_start = n, p
        if best_len:
            fragments.append(Fragment(i, best_start, best_len))
            i += best_len
        else:
            i += 1
    return fragments


def coverage_density(fragments: Sequence[Fragment], summary_length: int, source_length: int) -> CoverageDensity:
    if summary_length < 1:
        raise ValueError("summary must contain at least one token")
    lengths = [f.length for f in fragments]
    coverage = sum(lengths) / summary_length
    density = sum(n * n for n in lengths) / summary_length
    return CoverageDensity(coverage, density, density / summary_length, source_length / summary_length)


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def ngram_precision(summary: Sequence[str], sources: Sequence[Sequence[str]], n: int) -> float:
    """Clipped n-gram precision of the summary against the pooled sources.

    Source n-grams are counted per document and pooled, so no n-gram spans
    two documents and each source occurrence can be claimed only once.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(summary) < n:
        raise ValueError(f"summary has fewer than {n} tokens")
    pooled: Counter = Counter()
    for src in sources:
        pooled.update(ngrams(src, n))
    cand = ngrams(summary, n)
    return sum(min(c, pooled[g]) for g, c in cand.items()) / sum(cand.values())


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int) -> RougeScore:
    cand, ref = ngrams(candidate, n), ngrams(reference, n)
    if not cand or not ref:
        raise ValueError(f"both texts need at least {n} tokens for ROUGE-{n}")
    overlap = sum(min(c, ref[g]) for g, c in cand.items())
    return RougeScore.from_counts(overlap, sum(cand.values()), sum(ref.values()))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> RougeScore:
    if not candidate or not reference:
        raise ValueError("ROUGE-L needs non-empty texts")
    return RougeScore.from_counts(lcs_length(candidate, reference), len(candidate), len(reference))


def histogram(values: Sequence[float], bins: int = HISTOGRAM_BINS) -> list[int]:
    """Counts over equal-width bins on [0, 1]; 1.0 lands in the last bin."""
    counts = [0] * bins
    for v in values:
        counts[min(int(v * bins), bins - 1)] += 1
    return counts


@dataclass
class ExampleStats:
    example_id: str
    split: str
    summary_words: int
    summary_sents: int
    input_words: int
    input_sents: int
    num_docs: int
    coverage: float
    density: float
    normalized_density: float
    compression: float
    unigram_p: float
    bigram_p: float


def example_stats(example) -> ExampleStats:
    summary = tokenize(example.target_text)
    doc_tokens = [tokenize(d.document.text) for d in example.input_docs]
    source = [t for toks in doc_tokens for t in toks]
    cd = coverage_density(extractive_fragments(summary, source), len(summary), len(source))
    # a one-token summary has no bigrams; count it as having no bigram overlap
    bigram = ngram_precision(summary, doc_tokens, 2) if len(summary) >= 2 else 0.0
    return ExampleStats(
        example_id=example.example_id,
        split=example.split,
        summary_words=len(summary),
        summary_sents=len(example.target),
        input_words=len(source),
        input_sents=sum(len(d.document.sentences) for d in example.input_docs),
        num_docs=len(example.input_docs),
        coverage=cd.coverage,
        density=cd.density,
        normalized_density=cd.normalized_density,
        compression=cd.compression,
        unigram_p=ngram_precision(summary, doc_tokens, 1),
        bigram_p=bigram,
    )


@dataclass
class StatsReport:
    num_examples: int
    split_sizes: dict[str, int]
    summary_words: float
    summary_sents: float
    input_words: float
    input_sents: float
    per_doc_words: float
    per_doc_sents: float
    input_doc_histogram: dict[int, int]
    mean_coverage: float
    mean_density: float
    mean_normalized_density: float
    compression_mean: float
    unigram_histogram: list[int]
    bigram_histogram: list[int]
    bigram_above_0_9: float
    per_example: list[ExampleStats] = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        out = asdict(self)
        del out["per_example"]
        out["input_doc_histogram"] = {str(k): v for k, v in self.input_doc_histogram.items()}
        return out

    def write(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "stats.json").write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        with open(directory / "coverage_density.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["example_id", "coverage", "normalized_density"])
            for s in self.per_example:
                w.writerow([s.example_id, repr(s.coverage), repr(s.normalized_density)])
        with open(directory / "overlap.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["example_id", "unigram_p", "bigram_p"])
            for s in self.per_example:
                w.writerow([s.example_id, repr(s.unigram_p), repr(s.bigram_p)])


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values) if values else 0.0


def dataset_stats(examples: Sequence, top_k: int = 7) -> StatsReport:
    if not examples:
        raise ValueError("dataset_stats needs at least one example")
    per = sorted((example_stats(ex) for ex in examples), key=lambda s: s.example_id)
    n_docs = sum(s.num_docs for s in per)
    splits = Counter(s.split for s in per)
    doc_hist = {k: 0 for k in range(1, max(top_k, max(s.num_docs for s in per)) + 1)}
    for s in per:
        doc_hist[s.num_docs] += 1
    return StatsReport(
        num_examples=len(per),
        split_sizes={name: splits.get(name, 0) for name in ("train", "dev", "test")},
        summary_words=_mean([s.summary_words for s in per]),
        summary_sents=_mean([s.summary_sents for s in per]),
        input_words=_mean([s.input_words for s in per]),
        input_sents=_mean([s.input_sents for s in per]),
        per_doc_words=math.fsum(s.input_words for s in per) / n_docs,
        per_doc_sents=math.fsum(s.input_sents for s in per) / n_docs,
        input_doc_histogram=doc_hist,
        mean_coverage=_mean([s.coverage for s in per]),
        mean_density=_mean([s.density for s in per]),
        mean_normalized_density=_mean([s.normalized_density for s in per]),
        compression_mean=_mean([s.compression for s in per]),
        unigram_histogram=histogram([s.unigram_p for s in per]),
        bigram_histogram=histogram([s.bigram_p for s in per]),
        bigram_above_0_9=sum(s.bigram_p > 0.9 for s in per) / len(per),
        per_example=per,
    )


@dataclass
class EvalReport:
    """Mean ROUGE over examples, shaped like a results-table row."""

    system: str
    num_examples: int
    rouge_1: RougeScore
    rouge_2: RougeScore
    rouge_l: RougeScore

    def table_row(self) -> dict[str, float]:
        return {
            "R-1": round(100 * self.rouge_1.f1, 2),
            "R-2": round(100 * self.rouge_2.f1, 2),
            "R-L": round(100 * self.rouge_l.f1, 2),
        }

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "num_examples": self.num_examples,
            "R-1": asdict(self.rouge_1),
            "R-2": asdict(self.rouge_2),
            "R-L": asdict(self.rouge_l),
            "table": self.table_row(),
        }


def _mean_score(scores: Sequence[RougeScore]) -> RougeScore:
    return RougeScore(
        _mean([s.precision for s in scores]), _mean([s.recall for s in scores]), _mean([s.f1 for s in scores])
    )


def evaluate(system: str, pairs: Sequence[tuple[str, str]]) -> EvalReport:
    """Score (system output, reference) text pairs.

    Pairs too short for an order score zero at that order.
    """
    if not pairs:
        raise ValueError("nothing to evaluate")
    r1, r2, rl = [], [], []
    zero = RougeScore(0.0, 0.0, 0.0)
    for cand_text, ref_text in pairs:
        cand, ref = tokenize(cand_text), tokenize(ref_text)
        r1.append(rouge_n(cand, ref, 1) if cand and ref else zero)
        r2.append(rouge_n(cand, ref, 2) if len(cand) > 1 and len(ref) > 1 else zero)
        rl.append(rouge_l(cand, ref) if cand and ref else zero)
    return EvalReport(system, len(pairs), _mean_score(r1), _mean_score(r2), _mean_score(rl))
