import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmdsminer.corpus_io import Document
from qmdsminer.metrics import (
    Fragment,
    RougeScore,
    coverage_density,
    dataset_stats,
    evaluate,
    example_stats,
    extractive_fragments,
    histogram,
    lcs_length,
    ngram_precision,
    rouge_l,
    rouge_n,
)
from qmdsminer.miner import DocumentScore, InputDoc, QmdsExample

tokens = st.lists(st.sampled_from("abcd"), max_size=12)


def naive_fragments(summary, source):
    """The greedy rule spelled out with no indexing tricks."""
    out, i = [], 0
    while i < len(summary):
        best = (0, None)
        for p in range(len(source)):
            n = 0
            while i + n < len(summary) and p + n < len(source) and summary[i + n] == source[p + n]:
                n += 1
            if n > best[0]:
                best = (n, p)
        if best[0]:
            out.append(Fragment(i, best[1], best[0]))
            i += best[0]
        else:
            i += 1
    return out


def naive_lcs(a, b):
    for r in range(min(len(a), len(b)), 0, -1):
        subs = set(itertools.combinations(a, r))
        if any(c in subs for c in itertools.combinations(b, r)):
            return r
    return 0


def distinct_mapping_precision(summary, sources, n):
    # claim a distinct source n-gram for every summary n-gram, one at a time
    pool = [tuple(s[i : i + n]) for s in sources for i in range(len(s) - n + 1)]
    grams = [tuple(summary[i : i + n]) for i in range(len(summary) - n + 1)]
    hits = 0
    for g in grams:
        if g in pool:
            pool.remove(g)
            hits += 1
    return hits / len(grams)


class TestFragments:
    def test_identity(self):
        s = "the cat sat down".split()
        assert extractive_fragments(s, s) == [Fragment(0, 0, 4)]

    def test_hand_trace(self):
        frags = extractive_fragments(list("abcd"), list("xabycz"))
        assert frags == [Fragment(0, 1, 2), Fragment(2, 4, 1)]

    def test_no_overlap(self):
        assert extractive_fragments(["q", "r"], ["a", "b"]) == []
        assert extractive_fragments([], ["a"]) == []

    def test_leftmost_source_on_ties(self):
        assert extractive_fragments(["a", "b"], ["a", "b", "z", "a", "b"]) == [Fragment(0, 0, 2)]

    @settings(max_examples=200)
    @given(tokens, tokens)
    def test_properties(self, summary, source):
        frags = extractive_fragments(summary, source)
        assert frags == naive_fragments(summary, source)
        end = 0
        for f in frags:
            assert f.summary_start >= end
            end = f.summary_start + f.length
            assert summary[f.summary_start : end] == source[f.source_start : f.source_start + f.length]
        assert end <= len(summary)


class TestCoverageDensity:
    def test_fragment_arithmetic(self):
        cd = coverage_density([Fragment(0, 1, 2), Fragment(2, 4, 1)], 4, 6)
        assert cd.coverage == 0.75
        assert cd.density == 1.25
        assert cd.normalized_density == 0.3125
        assert cd.compression == 1.5

    def test_full_copy(self):
        summary = [f"w{i}" for i in range(20)]
        source = ["pad"] * 90 + summary + ["pad"] * 90
        cd = coverage_density(extractive_fragments(summary, source), 20, 200)
        assert cd == (1.0, 20.0, 1.0, 10.0)

    def test_no_fragments_and_empty(self):
        cd = coverage_density([], 5, 10)
        assert (cd.coverage, cd.density) == (0.0, 0.0)
        with pytest.raises(ValueError):
            coverage_density([], 0, 10)

    @settings(max_examples=200)
    @given(st.lists(st.sampled_from("abcd"), min_size=1, max_size=12), tokens)
    def test_bounds(self, summary, source):
        cd = coverage_density(extractive_fragments(summary, source), len(summary), len(source))
        assert 0.0 <= cd.coverage <= 1.0
        assert 0.0 <= cd.normalized_density <= 1.0
        assert cd.density <= len(summary) * cd.coverage + 1e-12


class TestNgramPrecision:
    def test_subset(self):
        src = "one two three four five".split()
        for n in (1, 2, 3):
            assert ngram_precision(src[1:4], [src], n) == 1.0

    def test_hand_enumeration(self):
        summary = "the cat sat".split()
        sources = [["the", "cat", "ran"], ["sat", "down"]]
        assert ngram_precision(summary, sources, 1) == 1.0
        assert ngram_precision(summary, sources, 2) == 0.5

    def test_clipping(self):
        assert ngram_precision(["x", "x", "x"], [["x", "y"]], 1) == pytest.approx(1 / 3)

    def test_no_cross_document_ngrams(self):
        assert ngram_precision(["a", "b"], [["a"], ["b"]], 2) == 0.0

    def test_too_short(self):
        with pytest.raises(ValueError):
            ngram_precision(["a"], [["a"]], 2)

    @settings(max_examples=200)
    @given(st.lists(st.sampled_from("abc"), min_size=2, max_size=10), st.lists(tokens, max_size=3), st.integers(1, 2))
    def test_matches_distinct_mapping(self, summary, sources, n):
        assert ngram_precision(summary, sources, n) == pytest.approx(distinct_mapping_precision(summary, sources, n))


class TestRouge:
    cand = "the cat sat on the mat".split()
    ref = "the cat lay on the mat".split()

    def test_identity(self):
        assert rouge_n(self.cand, self.cand, 2) == RougeScore(1.0, 1.0, 1.0)
        assert rouge_l(self.cand, self.cand) == RougeScore(1.0, 1.0, 1.0)

    def test_bigrams(self):
        r = rouge_n(self.cand, self.ref, 2)
        assert (r.precision, r.recall, r.f1) == pytest.approx((0.6, 0.6, 0.6))

    def test_lcs(self):
        r = rouge_l(self.cand, self.ref)
        assert lcs_length(self.cand, self.ref) == 5
        assert (r.precision, r.recall) == pytest.approx((5 / 6, 5 / 6))

    def test_one_common_token(self):
        r = rouge_l(["a", "b", "c", "d"], ["a", "w", "x", "y", "z"])
        assert (r.precision, r.recall) == (0.25, 0.2)
        assert r.f1 == pytest.approx(2 * 0.25 * 0.2 / 0.45)

    def test_disjoint(self):
        assert rouge_n(["a", "b"], ["c", "d"], 1) == RougeScore(0.0, 0.0, 0.0)
        assert rouge_l(["a"], ["b"]) == RougeScore(0.0, 0.0, 0.0)

    def test_errors(self):
        with pytest.raises(ValueError):
            rouge_n(["a"], ["a", "b"], 2)
        with pytest.raises(ValueError):
            rouge_l([], ["a"])

    @settings(max_examples=200)
    @given(st.lists(st.sampled_from("abc"), min_size=1, max_size=7), st.lists(st.sampled_from("abc"), min_size=1, max_size=7))
    def test_lcs_oracle_and_f1(self, a, b):
        assert lcs_length(a, b) == naive_lcs(a, b)
        r = rouge_l(a, b)
        assert r.f1 == (2 * r.precision * r.recall / (r.precision + r.recall) if r.precision + r.recall else 0.0)


def example(eid, n_docs, target=("Cat sat.",), split="train"):
    docs = tuple(
        InputDoc(Document.from_text(f"d{i}", "", "The cat sat. A dog ran."), DocumentScore(f"d{i}", 0.9, ()))
        for i in range(n_docs)
    )
    return QmdsExample(eid, "q", tuple(target), docs, 1.0, split)


class TestDatasetStats:
    def test_histogram_and_means(self):
        report = dataset_stats([example("b", 7), example("a", 1, split="test")])
        assert {k: v for k, v in report.input_doc_histogram.items() if v} == {1: 1, 7: 1}
        assert sum(report.unigram_histogram) == sum(report.bigram_histogram) == 2
        assert report.split_sizes == {"train": 1, "dev": 0, "test": 1}
        assert report.summary_words == 2.0
        assert report.input_words == (6 * 7 + 6) / 2
        assert report.per_doc_words == 6.0
        assert report.per_doc_sents == 2.0
        assert report.bigram_above_0_9 == 1.0
        assert [s.example_id for s in report.per_example] == ["a", "b"]

    def test_example_values(self):
        s = example_stats(example("x", 1, target=("The dog sat.",)))
        assert (s.unigram_p, s.bigram_p) == (1.0, 0.0)
        assert s.coverage == 1.0 and s.compression == 2.0
        assert example_stats(example("y", 1, target=("Cat.",))).bigram_p == 0.0

    def test_write(self, tmp_path):
        dataset_stats([example("a", 2)]).write(tmp_path)
        assert (tmp_path / "coverage_density.csv").read_text().splitlines()[0] == "example_id,coverage,normalized_density"
        assert (tmp_path / "overlap.csv").read_text().splitlines()[1].startswith("a,")
        assert (tmp_path / "stats.json").exists()

    def test_histogram_edges(self):
        assert histogram([0.0, 0.049, 0.05, 0.999, 1.0]) == [2, 1] + [0] * 17 + [2]


class TestEvaluate:
    def test_identity(self):
        report = evaluate("gold", [("The cat sat on the mat.", "The cat sat on the mat.")] * 3)
        assert report.table_row() == {"R-1": 100.0, "R-2": 100.0, "R-L": 100.0}

    def test_mean_of_pairs(self):
        report = evaluate("s", [("the cat sat on the mat", "the cat lay on the mat"), ("a b", "c d")])
        assert report.rouge_2.f1 == pytest.approx(0.3)
        assert report.table_row()["R-2"] == 30.0
