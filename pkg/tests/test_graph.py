import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgae.graph import (
    DatasetFormatError,
    DimensionMismatchError,
    Graph,
    canonical_edges,
    featureless,
    lazy_walk_matrix,
    load_dataset,
    normalize_adjacency,
    read_edge_file,
)
from dgae.synthetic import erdos_renyi, path_graph


def test_path_graph_normalized_entries():
    # degrees with self-loops: 2, 3, 2
    adj = normalize_adjacency(path_graph(3)).toarray()
    expected = np.array([
        [1 / 2, 1 / np.sqrt(6), 0],
        [1 / np.sqrt(6), 1 / 3, 1 / np.sqrt(6)],
        [0, 1 / np.sqrt(6), 1 / 2],
    ])
    np.testing.assert_allclose(adj, expected, atol=1e-15)


def test_single_edge_gives_halves():
    np.testing.assert_allclose(normalize_adjacency(path_graph(2)).toarray(), np.full((2, 2), 0.5))


def test_isolated_node_keeps_self_loop():
    g = Graph.from_edges(3, [(0, 1)])
    adj = normalize_adjacency(g).toarray()
    assert adj[2, 2] == 1.0
    assert adj[2, :2].sum() == 0.0


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 25), p=st.floats(0.0, 1.0), seed=st.integers(0, 10_000))
def test_normalized_adjacency_spectrum_and_symmetry(n, p, seed):
    adj = normalize_adjacency(erdos_renyi(n, p, seed=seed))
    assert adj.is_symmetric()
    eig = np.linalg.eigvalsh(adj.toarray())
    assert eig.max() <= 1 + 1e-10
    assert eig.min() >= -1 - 1e-10


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 20), p=st.floats(0.0, 1.0), seed=st.integers(0, 10_000))
def test_lazy_walk_is_row_stochastic(n, p, seed):
    walk = lazy_walk_matrix(erdos_renyi(n, p, seed=seed)).toarray()
    np.testing.assert_allclose(walk.sum(axis=1), 1.0, atol=1e-12)
    assert (walk >= 0).all()


def test_canonical_edges_dedups_and_drops_self_loops():
    edges = canonical_edges([(2, 1), (1, 2), (3, 3), (0, 4), (4, 0)])
    assert edges.tolist() == [[0, 4], [1, 2]]


def test_featureless_is_identity_and_idempotent():
    g = erdos_renyi(6, 0.5, seed=0, features=np.ones((6, 3)))
    f1 = featureless(g)
    np.testing.assert_array_equal(f1.features, np.eye(6))
    np.testing.assert_array_equal(featureless(f1).features, f1.features)
    np.testing.assert_array_equal(f1.edges, g.edges)


def test_graph_arrays_are_read_only():
    g = path_graph(4)
    with pytest.raises(ValueError):
        g.edges[0, 0] = 3


def test_graph_rejects_bad_input():
    with pytest.raises(ValueError):
        Graph.from_edges(3, [(0, 5)])
    with pytest.raises(ValueError):
        Graph.from_edges(2, [(0, 1)], features=np.array([[np.nan], [1.0]]))


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_dataset_roundtrip(tmp_path):
    edges = _write(tmp_path / "e.tsv", "# comment\n0\t1\n1\t0\n1\t2\n2\t2\n")
    feats = _write(tmp_path / "f.tsv", "1\t0\n0\t1\n1\t1\n0\t0\n")
    g = load_dataset(edges, feats)
    assert g.n == 4 and g.m == 2
    assert g.edges.tolist() == [[0, 1], [1, 2]]
    assert g.raw_edge_lines == 4
    np.testing.assert_array_equal(g.features[2], [1, 1])


def test_load_dataset_without_features_uses_identity(tmp_path):
    edges = _write(tmp_path / "e.tsv", "0\t3\n")
    g = load_dataset(edges)
    assert g.n == 4
    np.testing.assert_array_equal(g.features, np.eye(4))


def test_malformed_edge_line_reports_line_number(tmp_path):
    path = _write(tmp_path / "e.tsv", "0\t1\nbanana\n")
    with pytest.raises(DatasetFormatError, match=r"e\.tsv:2:"):
        read_edge_file(path)


def test_negative_index_rejected(tmp_path):
    path = _write(tmp_path / "e.tsv", "0\t-1\n")
    with pytest.raises(DatasetFormatError):
        read_edge_file(path)


def test_edge_index_beyond_features(tmp_path):
    edges = _write(tmp_path / "e.tsv", "0\t5\n")
    feats = _write(tmp_path / "f.tsv", "1\n1\n")
    with pytest.raises(DimensionMismatchError):
        load_dataset(edges, feats)


def test_ragged_feature_rows(tmp_path):
    edges = _write(tmp_path / "e.tsv", "0\t1\n")
    feats = _write(tmp_path / "f.tsv", "1\t0\n1\n")
    with pytest.raises(DatasetFormatError):
        load_dataset(edges, feats)


def test_components_labels():
    g = Graph.from_edges(5, [(0, 1), (3, 4)])
    labels = g.components()
    assert labels[0] == labels[1] and labels[3] == labels[4]
    assert len({labels[0], labels[2], labels[3]}) == 3
