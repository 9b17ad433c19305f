import csv
import io
import json

import httpx
import numpy as np
import pytest
import yaml

from devicerank import cli as cli_mod
from devicerank.cli import main
from devicerank.embed import load_precomputed
from devicerank.synthetic import make_suite

from conftest import write_jsonl


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def workspace(tmp_path):
    suite = make_suite(n_labels=40, n_topics=2, seed=2)
    corpus, targets, vectors = suite.write(tmp_path)
    config = tmp_path / "run.yaml"
    config.write_text(yaml.safe_dump({
        "corpus": "corpus.jsonl",
        "targets": "targets.jsonl",
        "backend": "bag_of_vectors",
        "vectors": "vectors.vec",
        "output_dir": "out",
        "trials": 200,
    }))
    return tmp_path, config, suite


def test_ingest(workspace, capsys):
    root, config, _ = workspace
    code, out, _ = run(["--config", config, "ingest"], capsys)
    assert code == 0
    assert json.loads(out) == {"corpus": str(root / "corpus.jsonl"), "labels": 40, "targets": 40,
                               "mislabeled": 0, "targets_file": str(root / "targets.jsonl")}


def test_ingest_errors(tmp_path, capsys):
    code, _, err = run(["ingest", "--corpus", tmp_path / "missing.jsonl"], capsys)
    assert code == 2 and "missing.jsonl" in err
    rec = {"label_id": "868.5320", "name": "x", "description": "y"}
    dup = write_jsonl(tmp_path / "dup.jsonl", [rec, rec])
    code, _, err = run(["ingest", "--corpus", dup], capsys)
    assert code == 2 and "868.5320" in err
    code, _, err = run(["ingest"], capsys)
    assert code == 1 and "corpus_path" in err
    code, _, _ = run(["--config", tmp_path / "nope.yaml", "ingest"], capsys)
    assert code == 1
    code, _, _ = run(["no-such-command"], capsys)
    assert code == 1


def test_build_and_classify(workspace, capsys):
    root, config, suite = workspace
    code, out, _ = run(["--config", config, "build"], capsys)
    assert code == 0, out
    meta = json.loads(out)
    assert meta["n_labels"] == 40 and meta["dim"] == 50 and meta["backend_id"] == "bag_of_vectors"
    store = load_precomputed(root / "out" / "labels.vec")
    assert len(store) == 40 and store.dim == 50
    assert (root / "out" / "stopwords.txt").read_text().split() == ["device", "for", "is", "the", "used"]

    text = suite.targets[5].description
    code, out, _ = run(["--config", config, "classify", text, "-k", 15], capsys)
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["rank", "label_id", "name", "score"] and len(rows) == 16
    assert [r[0] for r in rows[1:]] == [str(i) for i in range(1, 16)]
    assert all(len(r[3].split(".")[1]) == 6 for r in rows[1:])
    assert "L0005" in [r[1] for r in rows[1:6]]

    label_text = suite.labels[9].description
    code, out, _ = run(["--config", config, "classify", label_text, "-k", 1], capsys)
    assert code == 0 and out.splitlines()[1].split(",")[1] == "L0009"


def test_classify_errors(workspace, capsys):
    _, config, _ = workspace
    run(["--config", config, "build"], capsys)
    code, _, err = run(["--config", config, "classify", "zzzz qqqq", "-k", 3], capsys)
    assert code == 2 and "zzzz" in err
    code, _, _ = run(["--config", config, "classify", "anything", "-k", 41], capsys)
    assert code == 1


def test_classify_stdin(workspace, capsys, monkeypatch):
    _, config, suite = workspace
    run(["--config", config, "build"], capsys)
    monkeypatch.setattr("sys.stdin", io.StringIO(suite.labels[3].description))
    code, out, _ = run(["--config", config, "classify", "-k", 2], capsys)
    assert code == 0 and out.splitlines()[1].split(",")[1] == "L0003"


def test_build_reports_unembeddable_labels(tmp_path, capsys):
    corpus = write_jsonl(tmp_path / "c.jsonl", [
        {"label_id": "A", "name": "a", "description": "alpha beta"},
        {"label_id": "B", "name": "b", "description": "gamma"},
        {"label_id": "C", "name": "c", "description": "delta"},
    ])
    vec = tmp_path / "v.vec"
    vec.write_text("2 2\nalpha 1 0\nbeta 0 1\n")
    code, _, err = run(["build", "--corpus", corpus, "--vectors", vec, "--out", tmp_path / "o", "--theta", 1.0], capsys)
    assert code == 2 and "B" in err and "C" in err


def test_evaluate_outputs(workspace, capsys):
    root, config, _ = workspace
    run(["--config", config, "build"], capsys)
    code, out, _ = run(["--config", config, "evaluate"], capsys)
    assert code == 0
    report = json.loads((root / "out" / "report.json").read_text())
    assert report["n_correct"] == 40 and report["n_labels"] == 40
    assert report["hit_at_k"]["40"] == 1.0 and report["random_seed"] == 0
    rows = list(csv.reader(io.StringIO((root / "out" / "per_target.csv").read_text())))
    assert rows[0] == ["target_id", "word_count", "gold_rank", "flagged"] and len(rows) == 41
    assert b"\r\n" not in (root / "out" / "per_target.csv").read_bytes()


def test_evaluate_mislabel_counts(tmp_path, capsys):
    suite = make_suite(n_labels=40, n_topics=2, seed=2)
    from devicerank.synthetic import reassign

    suite.targets = suite.targets[:30]
    for i in (0, 1, 2):
        reassign(suite, f"T{i:04d}", f"L{39 - i:04d}")
    suite.write(tmp_path)
    common = ["--corpus", tmp_path / "corpus.jsonl", "--out", tmp_path / "out", "--vectors", tmp_path / "vectors.vec"]
    assert run(["build", *common], capsys)[0] == 0
    code, out, _ = run(["evaluate", *common, "--targets", tmp_path / "targets.jsonl"], capsys)
    summary = json.loads(out)
    assert code == 0 and summary["n_correct"] == 27 and summary["n_mislabeled"] == 3


def test_precomputed_replay_matches(workspace, capsys):
    root, config, suite = workspace
    run(["--config", config, "build"], capsys)
    run(["--config", config, "evaluate"], capsys)
    first = (root / "out" / "per_target.csv").read_text()
    # rebuild from the emitted index through the precomputed backend
    from devicerank.embed import BagOfVectorsBackend, write_precomputed
    from devicerank.cli import load_index

    index, _, lexicon = load_index(root / "out")
    backend = BagOfVectorsBackend(suite.table, lexicon, backend_id="bag_of_vectors")
    queries = backend.embed([(t.target_id, t.description) for t in suite.targets])
    write_precomputed([(t.target_id, q) for t, q in zip(suite.targets, queries)], root / "queries.vec")
    cfg2 = root / "replay.yaml"
    cfg2.write_text(yaml.safe_dump({
        "corpus": "corpus.jsonl", "targets": "targets.jsonl", "backend": "precomputed",
        "precomputed": {"labels": "out/labels.vec", "targets": "queries.vec"},
        "output_dir": "replay", "trials": 200,
    }))
    assert run(["--config", cfg2, "build"], capsys)[0] == 0
    assert run(["--config", cfg2, "evaluate"], capsys)[0] == 0
    assert (root / "replay" / "per_target.csv").read_text() == first
    a = load_precomputed(root / "out" / "labels.vec")
    b = load_precomputed(root / "replay" / "labels.vec")
    assert all(np.array_equal(a[k].vector, b[k].vector) for k in a)


def test_stopwords_command(workspace, capsys):
    root, config, _ = workspace
    code, out, _ = run(["--config", config, "stopwords", "--grid", "0.1,0.5,1.0"], capsys)
    assert code == 0
    assert out.splitlines()[0] == "theta,remaining_vocab"
    sizes = [int(line.split(",")[1]) for line in out.splitlines()[1:]]
    assert sizes == sorted(sizes) and sizes[-1] == 40 * 8 + 5
    assert (root / "out" / "stopword_curve.csv").read_text() == out
    code, _, _ = run(["--config", config, "stopwords", "--grid", "0.5,0.1"], capsys)
    assert code == 1


def test_stats_command(tmp_path, capsys):
    code, out, _ = run(["stats", "--r", -0.15185, "--n", 25], capsys)
    assert code == 0
    row = out.splitlines()[1].split(",")
    assert float(row[2]) == pytest.approx(0.4687, abs=1e-4)
    pairs = tmp_path / "p.csv"
    pairs.write_text("x,y\n1,2\n2,1\n3,4\n4,3\n")
    code, out, _ = run(["stats", "--pairs", pairs], capsys)
    assert code == 0 and float(out.splitlines()[1].split(",")[0]) == pytest.approx(0.6)
    assert run(["stats", "--r", 0.5], capsys)[0] == 1
    assert run(["stats", "--r", 0.5, "--n", 2], capsys)[0] == 1


def test_external_backend_transport_failure(workspace, capsys, monkeypatch):
    root, _, _ = workspace
    cfg = root / "ext.yaml"
    cfg.write_text(yaml.safe_dump({
        "corpus": "corpus.jsonl", "backend": "external", "output_dir": "ext",
        "provider": {"url": "http://127.0.0.1:9/embed", "model": "m", "max_retries": 1, "backoff": 0.0},
    }))
    code, _, err = run(["--config", cfg, "build"], capsys)
    assert code == 3 and "failed after 2 attempts" in err


def test_external_backend_build(workspace, capsys, monkeypatch):
    root, _, suite = workspace
    table = suite.table

    def handler(request):
        body = json.loads(request.content)
        rows = [np.mean([table.lookup(w) for w in t.split() if w in table] or [np.ones(50)], axis=0).tolist()
                for t in body["texts"]]
        return httpx.Response(200, json={"dim": 50, "embeddings": rows})

    real = cli_mod.make_backend

    def patched(cfg, lexicon=None):
        from devicerank import provider

        original = provider.EmbeddingClient.__init__

        def init(self, config, transport=None, sleep=None):
            original(self, config, transport=httpx.MockTransport(handler), sleep=lambda s: None)

        monkeypatch.setattr(provider.EmbeddingClient, "__init__", init)
        return real(cfg, lexicon)

    monkeypatch.setattr(cli_mod, "make_backend", patched)
    cfg = root / "ext.yaml"
    cfg.write_text(yaml.safe_dump({
        "corpus": "corpus.jsonl", "targets": "targets.jsonl", "backend": "external", "output_dir": "ext",
        "provider": {"url": "http://embed.test", "model": "m", "dim": 50, "batch_size": 16},
        "trials": 100,
    }))
    assert run(["--config", cfg, "build"], capsys)[0] == 0
    meta = json.loads((root / "ext" / "index.json").read_text())
    assert meta["role"] == "document" and meta["backend_id"] == "external:m"
    code, out, _ = run(["--config", cfg, "evaluate"], capsys)
    assert code == 0 and json.loads(out)["n_correct"] == 40
