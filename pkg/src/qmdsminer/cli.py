"""``qmdsminer`` command line: run pipeline stages against a work directory.

Layout under ``workdir``::

    normalized/  documents.jsonl, qa.jsonl
    vectors/     vectors.jsonl
    index/       shard-000.jsonl ...
    datasets/    abstractive.jsonl, extractive.jsonl, system_*.jsonl
    reports/     mining_log.jsonl, stats/<variant>/, eval/

Each stage also writes ``<dir>/<stage>.manifest.json`` with the config
digest and SHA-256 digests of its inputs and outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .baselines import DEFAULT_NUM_SENTENCES, query_filter, textrank_summarize
from .config import ConfigError, PipelineConfig, load_config
from .corpus_io import (
    CorpusFormatError,
    DocumentCorpus,
    QAExample,
    load_documents,
    load_qa_examples,
    read_dataset,
    write_dataset,
    write_documents,
    write_jsonl,
    write_qa_examples,
)
from .embedding import HashingEmbedder, VectorFormatError, VectorStore, load_vectors, save_vectors
from .fixture import write_fixture
from .metrics import dataset_stats, evaluate
from .miner import build_shard_indices, make_extractive, mine_corpus
from .vector_index import load_index, save_index

logger = logging.getLogger("qmdsminer")


class MissingArtifact(FileNotFoundError):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Workspace:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.root = Path(cfg.workdir)

    def path(self, *parts: str) -> Path:
        return self.root.joinpath(*parts)

    def require(self, *parts: str) -> Path:
        p = self.path(*parts)
        if not p.exists():
            raise MissingArtifact(str(p))
        return p

    def output(self, *parts: str) -> Path:
        p = self.path(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def rel(self, p: Path) -> str:
        try:
            return p.relative_to(self.root).as_posix()
        except ValueError:
            return p.name

    def manifest(self, directory: str, stage: str, inputs: dict[str, Path], outputs: Sequence[Path], **extra) -> None:
        record = {
            "stage": stage,
            "version": __version__,
            "config_hash": self.cfg.semantic_hash(),
            "inputs": {name: _sha256(p) for name, p in sorted(inputs.items())},
            "outputs": {self.rel(p): _sha256(p) for p in sorted(outputs)},
            **extra,
        }
        path = self.output(directory, f"{stage}.manifest.json")
        path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def corpus(self) -> DocumentCorpus:
        return load_documents(self.require("normalized", "documents.jsonl"))

    def qa(self) -> list[QAExample]:
        return load_qa_examples(self.require("normalized", "qa.jsonl")).examples

    def vectors(self) -> VectorStore:
        return load_vectors(self.require("vectors", "vectors.jsonl"), self.cfg.dimension)


def _input_file(cfg: PipelineConfig, name: str) -> Path:
    path = getattr(cfg, name)
    if path is None:
        raise ConfigError(name, "path not set")
    if not Path(path).exists():
        raise MissingArtifact(str(path))
    return Path(path)


def cmd_ingest(ws: Workspace, args) -> dict:
    docs_path, qa_path = _input_file(ws.cfg, "documents"), _input_file(ws.cfg, "qa")
    corpus = load_documents(docs_path)
    qa = load_qa_examples(qa_path)
    clash = sorted({q.example_id for q in qa.examples} & {d.id for d in corpus})
    if clash:
        raise CorpusFormatError(f"ids used both as document and QA example id: {clash[:3]}")
    out_docs = ws.output("normalized", "documents.jsonl")
    out_qa = ws.output("normalized", "qa.jsonl")
    write_documents(out_docs, corpus, with_sentences=True)
    write_qa_examples(out_qa, qa.examples, with_sentences=True)
    counts = {
        "documents": len(corpus),
        "documents_skipped": corpus.skipped,
        "qa_examples": len(qa.examples),
        "qa_skipped": qa.skipped,
        "sentences": sum(len(d.sentences) for d in corpus),
    }
    ws.manifest("normalized", "ingest", {"documents": docs_path, "qa": qa_path}, [out_docs, out_qa], counts=counts)
    return counts


def cmd_embed(ws: Workspace, args) -> dict:
    corpus, qa = ws.corpus(), ws.qa()
    sentences = list(corpus.sentences()) + [s for q in qa for s in q.answer_sentences]
    inputs = {"documents": ws.path("normalized", "documents.jsonl"), "qa": ws.path("normalized", "qa.jsonl")}
    if ws.cfg.embedder == "baseline":
        embedder = HashingEmbedder(ws.cfg.dimension)
        threads = ws.cfg.threads
        chunks = [sentences[i::threads] for i in range(threads)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(embedder.embed_many, chunks))
        store = parts[0]
        for part in parts[1:]:
            store = store.merged(part)
    else:
        source = _input_file(ws.cfg, "vectors")
        inputs["vectors"] = source
        loaded = load_vectors(source, ws.cfg.dimension)
        missing = [s.key for s in sentences if s.key not in loaded]
        if missing:
            raise VectorFormatError(f"{source}: no vectors for {len(missing)} sentences, e.g. {missing[:3]}")
        orphans = len(loaded) - len(sentences)
        if orphans:
            logger.warning("dropping %d vectors that match no corpus or answer sentence", orphans)
        store = loaded.subset(s.key for s in sentences)
    out = ws.output("vectors", "vectors.jsonl")
    save_vectors(store, out)
    ws.manifest("vectors", "embed", inputs, [out], embedder=ws.cfg.embedder, dimension=ws.cfg.dimension)
    return {"vectors": len(store), "dimension": store.dimension}


def cmd_index(ws: Workspace, args) -> dict:
    cfg = ws.cfg
    corpus, vectors = ws.corpus(), ws.vectors()
    for stale in ws.path("index").glob("shard-*.jsonl"):
        stale.unlink()
    indices = build_shard_indices(corpus, vectors, cfg.shards, cfg.leaf_capacity, cfg.spill_fraction, cfg.seed)
    outs = []
    for s, index in enumerate(indices):
        out = ws.output("index", f"shard-{s:03d}.jsonl")
        save_index(index, out)
        outs.append(out)
    ws.manifest(
        "index",
        "index",
        {"documents": ws.path("normalized", "documents.jsonl"), "vectors": ws.path("vectors", "vectors.jsonl")},
        outs,
        shards=cfg.shards,
        depths=[ix.depth() for ix in indices],
    )
    return {"shards": len(indices), "sentences": sum(len(ix) for ix in indices)}


def cmd_mine(ws: Workspace, args) -> dict:
    corpus, qa, vectors = ws.corpus(), ws.qa(), ws.vectors()
    shard_files = sorted(ws.path("index").glob("shard-*.jsonl"))
    if not shard_files:
        raise MissingArtifact(str(ws.path("index", "shard-000.jsonl")))
    indices = [load_index(p, vectors) for p in shard_files]
    result = mine_corpus(qa, corpus, vectors, indices, ws.cfg.miner, ws.cfg.threads, ws.cfg.exact_mode)
    out = ws.output("datasets", "abstractive.jsonl")
    write_dataset(result.examples, out, "abstractive")
    log = ws.output("reports", "mining_log.jsonl")
    write_jsonl(log, (e.to_record() for e in result.log))
    inputs = {
        "documents": ws.path("normalized", "documents.jsonl"),
        "qa": ws.path("normalized", "qa.jsonl"),
        "vectors": ws.path("vectors", "vectors.jsonl"),
    }
    counts = result.counts()
    ws.manifest("datasets", "mine", inputs, [out, log], counts=counts)
    return counts


def cmd_extractive(ws: Workspace, args) -> dict:
    src = ws.require("datasets", "abstractive.jsonl")
    examples = [make_extractive(ex) for ex in read_dataset(src)]
    out = ws.output("datasets", "extractive.jsonl")
    write_dataset(examples, out, "extractive")
    ws.manifest("datasets", "extractive", {"abstractive": src}, [out])
    return {"examples": len(examples), "substitutions": sum(len(ex.substitutions) for ex in examples)}


def cmd_stats(ws: Workspace, args) -> dict:
    src = ws.require("datasets", f"{args.variant}.jsonl")
    examples = read_dataset(src)
    if not examples:
        raise CorpusFormatError(f"{src}: dataset is empty")
    report = dataset_stats(examples, ws.cfg.miner.top_k)
    directory = ws.path("reports", "stats", args.variant)
    report.write(directory)
    outs = [directory / n for n in ("stats.json", "coverage_density.csv", "overlap.csv")]
    ws.manifest(f"reports/stats/{args.variant}", "stats", {args.variant: src}, outs)
    return report.to_dict()


def _select_split(examples, split: str):
    return examples if split == "all" else [ex for ex in examples if ex.split == split]


def cmd_baseline(ws: Workspace, args) -> dict:
    if args.query_filter and args.max_paragraphs is None:
        raise ConfigError("max_paragraphs", "--query-filter requires --max-paragraphs")
    src = ws.require("datasets", f"{args.variant}.jsonl")
    examples = _select_split(read_dataset(src), args.split)
    outputs = []
    not_converged = 0
    for ex in examples:
        docs = [d.document for d in ex.input_docs]
        if args.query_filter:
            docs = query_filter(ex.query, docs, args.max_paragraphs)
        summary = textrank_summarize(docs, args.num_sentences)
        not_converged += not summary.converged
        outputs.append(replace(ex, target=tuple(s.text for s in summary.sentences)))
    filt = f"_qf{args.max_paragraphs}" if args.query_filter else ""
    name = f"system_{args.method}{filt}_{args.variant}_{args.split}"
    out = Path(args.output) if args.output else ws.output("datasets", f"{name}.jsonl")
    write_dataset(outputs, out, args.variant)
    ws.manifest("datasets", name, {args.variant: src}, [out])
    return {"system": str(out), "examples": len(outputs), "not_converged": not_converged}


def cmd_eval(ws: Workspace, args) -> dict:
    system_path = Path(args.system)
    if not system_path.exists():
        raise MissingArtifact(str(system_path))
    system = read_dataset(system_path)
    variant = args.variant or (system[0].variant if system else "abstractive")
    ref_path = ws.require("datasets", f"{variant}.jsonl")
    refs = {ex.example_id: ex for ex in read_dataset(ref_path)}
    pairs = []
    for ex in _select_split(system, args.split):
        if ex.example_id not in refs:
            raise CorpusFormatError(f"{system_path}: example {ex.example_id!r} is not in {ref_path.name}")
        pairs.append((ex.target_text, refs[ex.example_id].target_text))
    report = evaluate(system_path.stem, pairs)
    out = ws.output("reports", "eval", f"{system_path.stem}.json")
    out.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    ws.manifest("reports/eval", system_path.stem, {"system": system_path, "reference": ref_path}, [out])
    return report.to_dict()


def cmd_run(ws: Workspace, args) -> dict:
    """Every stage in order, with TextRank over all extractive examples."""
    summary = {}
    for name, fn in (("ingest", cmd_ingest), ("embed", cmd_embed), ("index", cmd_index), ("mine", cmd_mine)):
        summary[name] = fn(ws, args)
    if not summary["mine"]["emitted"]:
        return summary
    summary["extractive"] = cmd_extractive(ws, args)
    for variant in ("abstractive", "extractive"):
        summary[f"stats_{variant}"] = cmd_stats(ws, argparse.Namespace(variant=variant))
    bargs = argparse.Namespace(
        method="textrank",
        variant="extractive",
        split="all",
        query_filter=False,
        max_paragraphs=None,
        num_sentences=DEFAULT_NUM_SENTENCES,
        output=None,
    )
    system = cmd_baseline(ws, bargs)["system"]
    summary["eval"] = cmd_eval(ws, argparse.Namespace(system=system, variant="extractive", split="all"))["table"]
    return summary


def cmd_config(args) -> dict:
    cfg = PipelineConfig() if args.defaults or not args.config else load_config(args.config)
    sys.stdout.write(cfg.to_text())
    return {}


def cmd_fixture(args) -> dict:
    config = write_fixture(args.out)
    return {"config": str(config)}


COMMANDS = {
    "ingest": cmd_ingest,
    "embed": cmd_embed,
    "index": cmd_index,
    "mine": cmd_mine,
    "extractive": cmd_extractive,
    "stats": cmd_stats,
    "baseline": cmd_baseline,
    "eval": cmd_eval,
    "run": cmd_run,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmdsminer", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def stage(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", required=True, help="key = value pipeline config file")
        p.add_argument("--threads", type=int, help="override the config's thread count")
        p.add_argument("--shards", type=int, help="override the config's shard count")
        return p

    stage("ingest", "validate corpora and write normalized, segmented copies")
    stage("embed", "compute or import sentence vectors for all corpus and answer sentences")
    stage("index", "build one search tree per corpus shard")
    stage("mine", "mine the abstractive dataset and the per-example mining log")
    stage("extractive", "derive the extractive dataset by in-place sentence substitution")
    p = stage("stats", "dataset statistics plus coverage/density and overlap CSVs")
    p.add_argument("--variant", choices=("abstractive", "extractive"), default="abstractive")
    p = stage("baseline", "run an extractive baseline and write its summaries in dataset format")
    p.add_argument("--method", choices=("textrank",), default="textrank")
    p.add_argument("--variant", choices=("abstractive", "extractive"), default="extractive")
    p.add_argument("--split", choices=("train", "dev", "test", "all"), default="test")
    p.add_argument("--query-filter", action="store_true", help="keep only paragraphs most relevant to the query")
    p.add_argument("--max-paragraphs", type=int, help="paragraphs kept by --query-filter (required with it)")
    p.add_argument("--num-sentences", type=int, default=DEFAULT_NUM_SENTENCES, help="summary length in sentences")
    p.add_argument("--output", help="system file path (default: datasets/system_*.jsonl)")
    p = stage("eval", "ROUGE-1/2/L of a system file against dataset targets")
    p.add_argument("--system", required=True, help="system summaries in dataset format")
    p.add_argument("--variant", choices=("abstractive", "extractive"), help="reference dataset (default: system's)")
    p.add_argument("--split", choices=("train", "dev", "test", "all"), default="all")
    stage("run", "run every stage in order")

    p = sub.add_parser("config", help="print the effective (or default) configuration")
    p.add_argument("--config", help="config file to resolve")
    p.add_argument("--defaults", action="store_true", help="print built-in defaults")
    p = sub.add_parser("fixture", help="write the synthetic fixture corpora and a config")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _fail(code: int, **record) -> int:
    sys.stderr.write(json.dumps(record) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "config":
            result = cmd_config(args)
        elif args.command == "fixture":
            result = cmd_fixture(args)
        else:
            cfg = load_config(args.config).with_overrides(threads=args.threads, shards=args.shards)
            result = COMMANDS[args.command](Workspace(cfg), args)
    except ConfigError as exc:
        return _fail(2, error="config", field=exc.field, message=str(exc))
    except MissingArtifact as exc:
        return _fail(3, error="missing_artifact", path=str(exc), message=f"required file not found: {exc}")
    except (CorpusFormatError, VectorFormatError, ValueError, KeyError, OSError) as exc:
        return _fail(1, error=type(exc).__name__, message=str(exc))
    if result:
        sys.stdout.write(json.dumps({"command": args.command, "result": result}, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
