import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from risda.graph import KnowledgeGraph, build_graph, build_soft_graph, read_graph_csv, similarity_weights


def test_perfect_classifier_gives_identity():
    y = np.array([0, 1, 2, 2, 1])
    assert np.array_equal(build_graph(y, y, 3).eps, np.eye(3))


def test_all_misclassified():
    g = build_graph([1, 1, 1, 1], [0, 0, 0, 0], 2)
    assert g.eps[0, 1] == 1.0 and g.eps[0, 0] == 0.0


def test_forced_counting():
    g = build_graph([0, 0, 1, 2], [0, 0, 0, 0], 3)
    assert g.eps[0].tolist() == [0.5, 0.25, 0.25]
    assert g.empty.tolist() == [False, True, True]
    assert np.all(g.eps[1:] == 0)


def test_invalid_label():
    with pytest.raises(ValueError):
        build_graph([0, 3], [0, 1], 3)


labels = st.lists(st.integers(0, 5), min_size=1, max_size=200)


@given(st.data())
def test_rows_and_exact_ratios(data):
    true = np.array(data.draw(labels))
    pred = np.array(data.draw(st.lists(st.integers(0, 5), min_size=len(true), max_size=len(true))))
    g = build_graph(pred, true, 6)
    counts = np.bincount(true, minlength=6)
    for i in range(6):
        if counts[i]:
            assert abs(g.eps[i].sum() - 1.0) <= 1e-12
            for j in range(6):
                k = np.sum((true == i) & (pred == j))
                assert g.eps[i, j] == k / counts[i]
    perm = np.random.default_rng(0).permutation(len(true))
    assert np.array_equal(build_graph(pred[perm], true[perm], 6).eps, g.eps)


def test_similarity_weights_identity():
    assert np.all(similarity_weights(KnowledgeGraph.identity(4), 2) == 0)


def test_similarity_weights_raw_and_renormalized():
    g = KnowledgeGraph(np.array([[0.8, 0.15, 0.05], [0, 1, 0], [0, 0, 1]]), np.zeros(3, dtype=bool))
    assert similarity_weights(g, 0)[1:].tolist() == [0.15, 0.05]
    assert similarity_weights(g, 0, renormalize=True)[1:] == pytest.approx([0.75, 0.25])
    assert similarity_weights(g, 0, renormalize=True).sum() == pytest.approx(1.0)


def test_soft_graph_rows(rng):
    P = rng.dirichlet(np.ones(4), size=30)
    y = rng.integers(4, size=30)
    g = build_soft_graph(P, y, 4)
    for i in range(4):
        if np.any(y == i):
            assert g.eps[i] == pytest.approx(P[y == i].mean(axis=0))
            assert g.eps[i].sum() == pytest.approx(1.0, abs=1e-12)


def test_soft_graph_matches_hard_on_one_hot(rng):
    y = rng.integers(3, size=25)
    pred = rng.integers(3, size=25)
    assert np.allclose(build_soft_graph(np.eye(3)[pred], y, 3).eps, build_graph(pred, y, 3).eps, atol=1e-15)


def test_csv_round_trip(tmp_path):
    g = build_graph([0, 1, 1, 2, 0], [0, 1, 0, 2, 2], 3)
    g.to_csv(tmp_path / "g.csv")
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == ",0,1,2"
    assert np.array_equal(read_graph_csv(tmp_path / "g.csv").eps, g.eps)
