import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcnx.graphs import (
    AttributedGraph,
    ElementLabel,
    GraphStructureError,
    connected_components,
    normalize_adjacency,
)

from _oracles import union_find_components


def make_graph(adjacency, d_in=3):
    adj = np.asarray(adjacency, dtype=float)
    n = adj.shape[0]
    return AttributedGraph(
        node_features=np.zeros((n, d_in)),
        adjacency=adj,
        node_elements=tuple(ElementLabel("C") for _ in range(n)),
    )


def random_adjacency(rng, n, p=0.4):
    a = (rng.random((n, n)) < p).astype(float)
    a = np.triu(a, 1)
    return a + a.T


class TestNormalizeAdjacency:
    def test_isolated_node(self):
        assert np.array_equal(normalize_adjacency([[0.0]]), [[1.0]])

    def test_single_edge(self):
        v = normalize_adjacency([[0.0, 1.0], [1.0, 0.0]])
        assert np.allclose(v, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)

    def test_path_of_three(self):
        # degrees with self loops: 2, 3, 2
        a = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
        v = normalize_adjacency(a)
        assert v[0, 0] == pytest.approx(0.5, abs=1e-15)
        assert v[0, 1] == pytest.approx(1.0 / np.sqrt(6.0), abs=1e-15)
        assert v[1, 1] == pytest.approx(1.0 / 3.0, abs=1e-15)
        assert v[0, 2] == 0.0

    def test_rejects_non_square(self):
        with pytest.raises(GraphStructureError):
            normalize_adjacency(np.zeros((2, 3)))

    def test_rejects_asymmetric(self):
        with pytest.raises(GraphStructureError):
            normalize_adjacency([[0.0, 1.0], [0.0, 0.0]])

    def test_rejects_self_loop(self):
        with pytest.raises(GraphStructureError):
            normalize_adjacency([[1.0]])

    @given(st.integers(min_value=1, max_value=8), st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=60, deadline=None)
    def test_symmetry_and_range(self, n, seed):
        rng = np.random.default_rng(seed)
        a = random_adjacency(rng, n)
        v = normalize_adjacency(a)
        assert np.array_equal(v, v.T)
        assert np.all(v >= 0.0)
        assert np.all(v <= 1.0)

    @given(st.integers(min_value=2, max_value=8), st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=60, deadline=None)
    def test_permutation_equivariance(self, n, seed):
        rng = np.random.default_rng(seed)
        a = random_adjacency(rng, n)
        perm = rng.permutation(n)
        p = np.eye(n)[perm]
        lhs = normalize_adjacency(p @ a @ p.T)
        rhs = p @ normalize_adjacency(a) @ p.T
        assert np.allclose(lhs, rhs, atol=1e-14)


class TestAttributedGraph:
    def test_arrays_are_read_only(self):
        g = make_graph([[0, 1], [1, 0]])
        with pytest.raises(ValueError):
            g.node_features[0, 0] = 1.0
        with pytest.raises(ValueError):
            g.norm_propagation[0, 0] = 9.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(GraphStructureError):
            AttributedGraph(
                node_features=np.zeros((3, 2)),
                adjacency=np.zeros((2, 2)),
                node_elements=(ElementLabel("C"), ElementLabel("C")),
            )

    def test_unknown_element_maps_to_other(self):
        assert ElementLabel("Se").symbol == "other"
        assert ElementLabel("C").symbol == "C"


class TestConnectedComponents:
    def test_mask_splits_path(self):
        g = make_graph([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
        assert connected_components(g, [True, False, True]) == [[0], [2]]

    def test_full_mask_connected(self):
        g = make_graph([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
        assert connected_components(g, [True, True, True]) == [[0, 1, 2]]

    def test_six_cycle_two_arcs(self):
        a = np.zeros((6, 6))
        for i in range(6):
            a[i, (i + 1) % 6] = a[(i + 1) % 6, i] = 1.0
        g = make_graph(a)
        mask = [True, True, False, True, True, False]
        assert connected_components(g, mask) == [[0, 1], [3, 4]]

    def test_mask_length_checked(self):
        g = make_graph([[0.0]])
        with pytest.raises(GraphStructureError):
            connected_components(g, [True, False])

    @given(
        st.integers(min_value=1, max_value=8),
        st.integers(min_value=0, max_value=10_000),
    )
    @settings(max_examples=80, deadline=None)
    def test_matches_union_find_oracle(self, n, seed):
        rng = np.random.default_rng(seed)
        a = random_adjacency(rng, n)
        mask = rng.random(n) < 0.6
        g = make_graph(a)
        got = connected_components(g, mask.tolist())
        assert got == union_find_components(a, mask.tolist())
        # partition property: disjoint and covers exactly the masked vertices
        flattened = [v for comp in got for v in comp]
        assert sorted(flattened) == sorted(set(flattened))
        assert set(flattened) == {i for i in range(n) if mask[i]}
