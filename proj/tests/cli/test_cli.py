"""End-to-end checks of the uhgr command line: exit codes, determinism,
file round trips and atomic outputs."""

import csv
import io
import json
import os
import random
import subprocess
from pathlib import Path

import pytest

BIN = os.environ.get("UHGR_BIN", "build/uhgr")


def run(*args, check=False):
    proc = subprocess.run([BIN, *map(str, args)], capture_output=True, text=True)
    if check and proc.returncode != 0:
        raise AssertionError(f"{args} -> {proc.returncode}\n{proc.stdout}\n{proc.stderr}")
    return proc


def community_graph(path, n=60, k=3, seed=0):
    rng = random.Random(seed)
    labels = [i % k for i in range(n)]
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            p = 0.25 if labels[i] == labels[j] else 0.01
            if rng.random() < p or j == i + 1:
                edges.add((i, j))
    features = []
    for i in range(n):
        row = [0.0] * 12
        for _ in range(3):
            row[4 * labels[i] + rng.randrange(4)] = 1.0
        features.append(row)
    doc = {"n": n, "edges": sorted(edges), "features": features, "node_labels": labels}
    path.write_text(json.dumps(doc))
    return path


def graph_corpus(path, count=12, seed=0):
    rng = random.Random(seed)
    graphs = []
    for g in range(count):
        n = rng.randrange(6, 11)
        dense = g % 2 == 0
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)
                 if j == i + 1 or rng.random() < (0.6 if dense else 0.05)]
        feats = [[rng.random() for _ in range(3)] for _ in range(n)]
        graphs.append({"n": n, "edges": edges, "features": feats, "graph_label": int(dense)})
    path.write_text(json.dumps({"name": "corpus", "num_classes": 2, "graphs": graphs}))
    return path


@pytest.fixture
def graph(tmp_path):
    return community_graph(tmp_path / "g.json")


def train(dataset, ckpt, *extra):
    return run("train", "--dataset", dataset, "--checkpoint", ckpt, "--epochs", 15, "--hidden", 16,
               "--embed", 16, "--quiet", *extra, check=True)


def test_fixed_seed_gives_identical_checkpoints(graph, tmp_path):
    a, b, c = tmp_path / "a.ckpt", tmp_path / "b.ckpt", tmp_path / "c.ckpt"
    train(graph, a, "--seed", 3)
    train(graph, b, "--seed", 3)
    train(graph, c, "--seed", 4)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()
    log = list(csv.DictReader(io.StringIO((tmp_path / "a.ckpt.log.csv").read_text())))
    assert [int(r["epoch"]) for r in log] == list(range(1, len(log) + 1))


def test_embed_then_eval_round_trip(graph, tmp_path):
    ckpt, emb, report = tmp_path / "m.ckpt", tmp_path / "m.emb", tmp_path / "r.json"
    train(graph, ckpt)
    run("embed", "--dataset", graph, "--checkpoint", ckpt, "--out", emb, check=True)
    out = run("eval", "--dataset", graph, "--embeddings", emb, "--runs", 3, "--split", "random",
              "--out", report, check=True)
    row = out.stdout.strip().splitlines()[-1].split(",")
    assert row[0] == "node" and row[-1] == "3"
    doc = json.loads(report.read_text())
    assert len(doc["per_run"]) == 3
    assert all(0.0 <= a <= 1.0 for a in doc["per_run"])
    # Evaluating from the checkpoint gives the same numbers as from the file.
    again = run("eval", "--dataset", graph, "--checkpoint", ckpt, "--runs", 3, "--split", "random",
                check=True)
    assert again.stdout.strip().splitlines()[-1] == out.stdout.strip().splitlines()[-1]


def test_graph_corpus_train_and_eval(tmp_path):
    corpus = graph_corpus(tmp_path / "c.json")
    ckpt = tmp_path / "c.ckpt"
    run("train", "--dataset", corpus, "--checkpoint", ckpt, "--epochs", 5, "--hidden", 8,
        "--embed", 8, "--quiet", check=True)
    out = run("eval", "--dataset", corpus, "--checkpoint", ckpt, "--frozen", "--folds", 3, check=True)
    assert out.stdout.strip().splitlines()[-1].startswith("graph,")


def test_export_formats(graph, tmp_path):
    ckpt = tmp_path / "m.ckpt"
    train(graph, ckpt)
    js = run("export", "--dataset", graph, "--checkpoint", ckpt, check=True)
    doc = json.loads(js.stdout)
    assert doc["num_nodes"] == 60
    assert doc["levels"][-1]["clusters"] == 1
    dot = tmp_path / "h.dot"
    run("export", "--dataset", graph, "--checkpoint", ckpt, "--format", "dot", "--out", dot, check=True)
    text = dot.read_text()
    assert text.startswith("graph {") and text.rstrip().endswith("}")
    bad = run("export", "--dataset", graph, "--checkpoint", ckpt, "--format", "svg")
    assert bad.returncode == 2


def test_error_exit_codes(graph, tmp_path):
    missing = run("embed", "--dataset", graph, "--checkpoint", tmp_path / "nope.ckpt",
                  "--out", tmp_path / "e.emb")
    assert missing.returncode == 4
    assert missing.stderr.startswith("error code=")
    assert run("train", "--bogus").returncode == 2
    assert run("train", "--dataset", tmp_path / "absent.json", "--checkpoint",
               tmp_path / "x.ckpt").returncode == 3

    ckpt = tmp_path / "m.ckpt"
    train(graph, ckpt)
    data = bytearray(ckpt.read_bytes())
    data[len(data) // 2] ^= 0xFF
    corrupt = tmp_path / "bad.ckpt"
    corrupt.write_bytes(bytes(data))
    r = run("embed", "--dataset", graph, "--checkpoint", corrupt, "--out", tmp_path / "e.emb")
    assert r.returncode == 6

    other = community_graph(tmp_path / "wide.json")
    doc = json.loads(other.read_text())
    doc["features"] = [row + [0.0] for row in doc["features"]]
    other.write_text(json.dumps(doc))
    r = run("embed", "--dataset", other, "--checkpoint", ckpt, "--out", tmp_path / "e.emb")
    assert r.returncode == 5


def test_outputs_written_atomically(graph, tmp_path):
    ckpt = tmp_path / "m.ckpt"
    train(graph, ckpt)
    before = ckpt.read_bytes()
    # A failing run must leave the previous checkpoint untouched.
    r = run("train", "--dataset", graph, "--checkpoint", ckpt, "--lr", -1)
    assert r.returncode == 2
    assert ckpt.read_bytes() == before
    assert not [p for p in Path(tmp_path).iterdir() if ".tmp" in p.name]
