"""Smoke tests for the Python bindings, with numpy oracles where they are cheap."""

import json

import numpy as np
import pytest

uhgr = pytest.importorskip("uhgr")


def ring(n=12, f=4, seed=0, labels=True):
    rng = np.random.default_rng(seed)
    edges = [(i, (i + 1) % n) for i in range(n)] + [(0, n // 2)]
    return uhgr.Graph(n, edges, rng.random((n, f)),
                      node_labels=[i % 2 for i in range(n)] if labels else None)


def small_config(**kw):
    c = uhgr.Config.parse("hidden_dim = 8\nembed_dim = 8\nmax_epochs = 5\ninterlevel_gcn_layers = 1\n")
    for k, v in kw.items():
        setattr(c, k, v)
    return c


def test_graph_round_trip():
    g = ring()
    assert g.num_nodes == 12
    assert g.num_edges == 13
    a = g.adjacency
    assert np.array_equal(a, a.T)
    assert a.diagonal().sum() == 0
    assert sorted(g.edges) == sorted(tuple(sorted(e)) for e in [(i, (i + 1) % 12) for i in range(12)] + [(0, 6)])


def test_normalize_adjacency_matches_numpy():
    rng = np.random.default_rng(1)
    a = (rng.random((7, 7)) < 0.4).astype(float)
    a = np.triu(a, 1)
    a = a + a.T
    a_hat = a + np.eye(7)
    d = a_hat.sum(1) ** -0.5
    expected = d[:, None] * a_hat * d[None, :]
    assert np.allclose(uhgr.normalize_adjacency(a), expected, atol=1e-12)


def test_config_text_round_trip_and_errors():
    c = small_config(seed=7)
    back = uhgr.Config.parse(c.to_text())
    assert back.hash() == c.hash()
    assert back.seed == 7
    with pytest.raises(uhgr.ConfigError):
        uhgr.Config.parse("no_such_key = 1\n")
    with pytest.raises(uhgr.UhgrError):
        c.set("lr", "-1")
        c.validate()


def test_train_embed_save_load(tmp_path):
    g = ring()
    model, log = uhgr.train(small_config(), g)
    assert log["epoch"] == list(range(1, len(log["epoch"]) + 1))
    assert all(np.isfinite(log["loss"]))
    nodes, summary = model.embed(g)
    assert nodes.shape == (12, 8)
    assert summary.shape == (1, 8)

    path = str(tmp_path / "m.ckpt")
    model.save(path)
    again = uhgr.Model.load(path)
    n2, s2 = again.embed(g)
    assert np.array_equal(nodes, n2)
    assert np.array_equal(summary, s2)
    assert again.config.hash() == model.config.hash()

    wide = uhgr.Graph(12, g.edges, np.zeros((12, 5)))
    with pytest.raises(uhgr.ShapeError):
        again.embed(wide)
    with pytest.raises(uhgr.IoError):
        uhgr.Model.load(str(tmp_path / "missing.ckpt"))


def test_fixed_seed_is_deterministic():
    g = ring()
    a, _ = uhgr.train(small_config(seed=3), g)
    b, _ = uhgr.train(small_config(seed=3), g)
    assert np.array_equal(a.embed(g)[0], b.embed(g)[0])


def test_assignments_are_row_stochastic_and_end_in_one_cluster():
    g = ring(n=20)
    model, _ = uhgr.train(small_config(), g)
    levels = model.assignments(g)
    assert levels[0].shape[0] == 20
    for s in levels:
        assert np.all(s >= 0)
        assert np.allclose(s.sum(1), 1.0, atol=1e-9)
    assert levels[-1].shape[1] == 1
    doc = json.loads(model.export(g))
    assert [lvl["clusters"] for lvl in doc["levels"]] == [s.shape[1] for s in levels]
    for lvl, s in zip(doc["levels"], levels):
        assert lvl["hard"] == list(np.argmax(s, axis=1))


def test_dot_export_parses_with_pydot():
    pydot = pytest.importorskip("pydot")
    g = ring(n=10)
    model, _ = uhgr.train(small_config(), g)
    (parsed,) = pydot.graph_from_dot_data(model.export(g, "dot"))
    names = {n.get_name().strip('"') for n in parsed.get_nodes()} - {"node"}
    clusters = {n for n in names if n.startswith("cluster_")}
    assert len(names - clusters) == 10
    edges = parsed.get_edges()
    dashed = [e for e in edges if (e.get_style() or "").strip('"') == "dashed"]
    assert len(dashed) == 10
    assert len(edges) - len(dashed) == g.num_edges
    with pytest.raises(uhgr.ConfigError):
        model.export(g, "svg")


def test_dataset_training_and_summaries():
    rng = np.random.default_rng(2)
    graphs = []
    for i in range(6):
        n = 6 + i
        edges = [(j, j + 1) for j in range(n - 1)]
        graphs.append(uhgr.Graph(n, edges, rng.random((n, 3)), graph_label=i % 2))
    ds = uhgr.Dataset(graphs, "toy")
    assert len(ds) == 6 and ds.num_classes == 2
    model, _ = uhgr.train(small_config(), ds)
    z = model.summaries(ds)
    assert z.shape == (6, 8)
    fs = uhgr.folds(ds, 3, 0)
    assert sorted(i for f in fs for i in f.test) == list(range(6))


def test_probe_separates_one_hot_classes():
    x = np.eye(4)[[0, 1, 2, 3] * 10]
    labels = [0, 1, 2, 3] * 10
    idx = list(range(40))
    probe = uhgr.LinearProbe.fit(x, labels, idx[:20], 4)
    assert probe.accuracy(x, labels, idx[20:]) == 1.0
    assert probe.predict(x[:4]) == [0, 1, 2, 3]
    split = uhgr.node_splits(ring(n=30), 0, "random")
    assert len(split.train) + len(split.val) + len(split.test) == 30
