import json
import subprocess
import sys

import pytest

from qmdsminer.cli import main
from qmdsminer.corpus_io import read_dataset, read_jsonl
from qmdsminer.fixture import bundled_fixture_dir, generate_fixture, write_fixture


def run(*argv):
    return main([str(a) for a in argv])


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    config = write_fixture(tmp_path_factory.mktemp("fx"))
    assert run("run", "--config", config) == 0
    return config, config.parent / "work"


def test_bundled_fixture_is_generated_fixture(tmp_path):
    generate_fixture().write(tmp_path)
    for name in ("documents.jsonl", "qa.jsonl"):
        assert (tmp_path / name).read_bytes() == (bundled_fixture_dir() / name).read_bytes()


def test_fixture_size():
    fx = generate_fixture()
    assert len(fx.documents) >= 50 and len(fx.qa) == 10


def test_layout_and_manifests(pipeline):
    _, work = pipeline
    for rel in (
        "normalized/documents.jsonl",
        "vectors/vectors.jsonl",
        "index/shard-000.jsonl",
        "datasets/abstractive.jsonl",
        "datasets/extractive.jsonl",
        "reports/mining_log.jsonl",
        "reports/stats/extractive/stats.json",
        "reports/stats/abstractive/overlap.csv",
    ):
        assert (work / rel).is_file(), rel
    manifest = json.loads((work / "datasets" / "mine.manifest.json").read_text())
    assert set(manifest["inputs"]) == {"documents", "qa", "vectors"}
    assert "datasets/abstractive.jsonl" in manifest["outputs"]
    assert str(work) not in json.dumps(manifest)


def test_mining_log(pipeline):
    _, work = pipeline
    log = list(read_jsonl(work / "reports" / "mining_log.jsonl"))
    assert [r["example_id"] for r in log] == [f"q{i:03d}" for i in range(10)]
    assert {r["outcome"] for r in log} == {"emitted", "low_recall", "no_matches"}
    assert set(log[0]) >= {"example_id", "outcome", "recall", "num_docs", "psi"}


def test_eval_identity(pipeline, capsys):
    config, work = pipeline
    capsys.readouterr()
    assert run("eval", "--config", config, "--system", work / "datasets" / "extractive.jsonl") == 0
    table = json.loads(capsys.readouterr().out)["result"]["table"]
    assert table == {"R-1": 100.0, "R-2": 100.0, "R-L": 100.0}


def test_baseline_query_filter(pipeline, capsys):
    config, work = pipeline
    capsys.readouterr()
    assert run("baseline", "--config", config, "--split", "all", "--query-filter") == 2
    err = json.loads(capsys.readouterr().err)
    assert err["field"] == "max_paragraphs"
    out = work / "qf.jsonl"
    assert run("baseline", "--config", config, "--split", "all", "--query-filter", "--max-paragraphs", 3, "--output", out) == 0
    system = read_dataset(out)
    gold = {e.example_id: e for e in read_dataset(work / "datasets" / "extractive.jsonl")}
    assert [e.example_id for e in system] == sorted(gold)
    for ex in system:
        source = {s.text for d in gold[ex.example_id].input_docs for s in d.document.sentences}
        assert set(ex.target) <= source and 1 <= len(ex.target) <= 4


def test_missing_artifact(tmp_path, capsys):
    config = write_fixture(tmp_path)
    assert run("mine", "--config", config) == 3
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "missing_artifact" and "documents.jsonl" in err["path"]


def test_config_error_exit(tmp_path, capsys):
    config = write_fixture(tmp_path)
    with open(config, "a") as fh:
        fh.write("top_k = 0\n")
    assert run("ingest", "--config", config) == 2
    assert json.loads(capsys.readouterr().err)["field"] == "top_k"
    assert run("ingest", "--config", tmp_path / "absent.conf") == 2


def test_env_path_override(tmp_path, monkeypatch):
    config = write_fixture(tmp_path)
    monkeypatch.setenv("QMDS_WORKDIR", str(tmp_path / "elsewhere"))
    assert run("ingest", "--config", config) == 0
    assert (tmp_path / "elsewhere" / "normalized" / "qa.jsonl").exists()


def test_precomputed_vectors(pipeline, tmp_path):
    config, work = pipeline
    conf = tmp_path / "p.conf"
    conf.write_text(
        f"documents = {config.parent / 'documents.jsonl'}\nqa = {config.parent / 'qa.jsonl'}\n"
        f"vectors = {work / 'vectors' / 'vectors.jsonl'}\nembedder = precomputed\nworkdir = w\n"
    )
    for stage in ("ingest", "embed", "index", "mine"):
        assert run(stage, "--config", conf) == 0
    assert (tmp_path / "w" / "datasets" / "abstractive.jsonl").read_bytes() == (work / "datasets" / "abstractive.jsonl").read_bytes()


def test_config_command(capsys):
    assert run("config", "--defaults") == 0
    assert "theta_U = 0.99" in capsys.readouterr().out


def test_help_documents_flags():
    out = subprocess.run([sys.executable, "-m", "qmdsminer.cli", "baseline", "--help"], capture_output=True, text=True, check=True).stdout
    for flag in ("--config", "--query-filter", "--max-paragraphs", "--threads", "--shards"):
        assert flag in out


def test_determinism(tmp_path):
    outputs = []
    for rep in range(2):
        for threads in (1, 8):
            for shards in (1, 4):
                config = write_fixture(tmp_path / f"r{rep}t{threads}s{shards}")
                assert run("run", "--config", config, "--threads", threads, "--shards", shards) == 0
                work = config.parent / "work"
                outputs.append({**tree_bytes(work / "datasets"), **tree_bytes(work / "reports")})
    assert all(o == outputs[0] for o in outputs[1:])
    assert len(outputs[0]) > 10
