import io

import numpy as np
import pytest
import scipy.sparse as sp

from igt.graph import (CHAIN, build_graph, export_edges, extend_for_inference, extract_bipartite,
                       normalize, normalized_blocks, renormalize)
from igt.orders import NODE_TYPES
from conftest import dense_block, random_hetero_graph

ORDER_A = ("r1", "o1", "d1", 9)
ORDER_B = ("r2", "o2", "d2", 10)


def test_single_order_graph():
    g = build_graph([ORDER_A])
    assert g.num_nodes() == 4 and g.num_edges() == 3


def test_duplicate_orders_deduplicated():
    g = build_graph([ORDER_A, ORDER_A])
    assert g.num_nodes() == 4 and g.num_edges() == 3


def test_disjoint_orders():
    g = build_graph([ORDER_A, ORDER_B])
    assert g.num_nodes() == 8 and g.num_edges() == 6


def test_only_chain_pairs_non_empty(small_world):
    g = build_graph(small_world)
    non_empty = [(a, b) for i, a in enumerate(NODE_TYPES) for b in NODE_TYPES[i + 1:]
                 if extract_bipartite(g, a, b) is not None]
    assert sorted(non_empty) == sorted(CHAIN)
    assert len(non_empty) <= 6


def test_retailer_slot_pair_empty():
    assert extract_bipartite(build_graph([ORDER_A]), "retailer", "slot") is None


def test_retailer_origin_single_order():
    adj = extract_bipartite(build_graph([ORDER_A]), "retailer", "origin")
    assert adj.size == 2 and adj.adjacency.nnz == 2


def test_same_type_pair_rejected():
    with pytest.raises(ValueError):
        extract_bipartite(build_graph([ORDER_A]), "origin", "origin")


def test_swap_symmetry(small_world):
    g = build_graph(small_world)
    ab = extract_bipartite(g, "origin", "destination").adjacency.toarray()
    ba = extract_bipartite(g, "destination", "origin").adjacency.toarray()
    n_o = g.registry.count("origin")
    # reorder the swapped block back to (origin, destination) node order
    perm = np.r_[np.arange(ba.shape[0] - n_o, ba.shape[0]), np.arange(ba.shape[0] - n_o)]
    np.testing.assert_array_equal(ab, ba[np.ix_(perm, perm)])


def test_pairs_partition_edges(small_world):
    g = build_graph(small_world)
    total = sum(extract_bipartite(g, a, b).adjacency.nnz // 2 for a, b in CHAIN)
    assert total == g.num_edges()


def test_single_edge_normalized_half():
    norm, degree = renormalize(sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]])))
    np.testing.assert_array_equal(norm.toarray(), np.full((2, 2), 0.5))
    np.testing.assert_array_equal(degree, [2.0, 2.0])


def test_isolated_node_self_loop():
    norm, _ = renormalize(sp.csr_matrix((3, 3)))
    np.testing.assert_array_equal(norm.toarray(), np.eye(3))


def test_asymmetric_rejected():
    with pytest.raises(ValueError, match="symmetric"):
        renormalize(sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]])))


@pytest.mark.parametrize("seed", range(20))
def test_normalized_blocks_match_dense_and_identity(seed):
    g, counts = random_hetero_graph(np.random.default_rng(seed))
    for adj in normalized_blocks(g):
        a, b = adj.types
        e = g.edges[(a, b)] if (a, b) in g.edges else g.edges[(b, a)][:, ::-1]
        dense = dense_block(counts[a], counts[b], e)
        m = adj.normalized
        assert np.max(np.abs(m.toarray() - dense)) <= 1e-12
        assert abs(m - m.T).max() <= 1e-15 if (m - m.T).nnz else True
        assert np.all(np.diff(m.indptr) > 0)
        s = np.sqrt(adj.degree)
        assert np.max(np.abs(m @ s - s)) <= 1e-9


def test_extend_all_seen_keeps_counts():
    g = build_graph([ORDER_A, ORDER_B])
    ext = extend_for_inference(g, [("r1", "o2", "d1", 10)])
    assert ext.registry.counts() == g.registry.counts()
    assert ext.num_edges() == g.num_edges() + 3


def test_extend_new_retailer_linked_to_origin():
    g = build_graph([ORDER_A])
    ext = extend_for_inference(g, [("r9", "o1", "d1", 9)])
    assert ext.registry.count("retailer") == 2
    idx = ext.registry.index
    assert [idx["retailer"]["r9"], idx["origin"]["o1"]] in ext.edges[("retailer", "origin")].tolist()
    assert idx["retailer"]["r1"] == 0


def test_extend_fully_unseen_isolated_chain():
    g = build_graph([ORDER_A])
    ext = extend_for_inference(g, [ORDER_B])
    assert ext.num_nodes() == 8 and ext.num_edges() == 6
    for t in NODE_TYPES:
        assert ext.registry.index[t][dict(zip(NODE_TYPES, ORDER_A))[t]] == 0


def test_extend_without_edges_registers_isolated_nodes():
    g = build_graph([ORDER_A])
    ext = extend_for_inference(g, [ORDER_B], add_edges=False)
    assert ext.num_nodes() == 8 and ext.num_edges() == 3


def test_export_edges_format():
    buf = io.StringIO()
    export_edges(build_graph([ORDER_A]), buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == 3
    assert lines[0] == "retailer:0\torigin:0"


def test_normalize_keeps_structure():
    adj = normalize(extract_bipartite(build_graph([ORDER_A, ORDER_B]), "origin", "destination"))
    assert adj.degree.tolist() == [2.0, 2.0, 2.0, 2.0]
