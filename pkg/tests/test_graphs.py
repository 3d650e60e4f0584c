from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mixlab.graphs import (
    CapExceeded,
    Graph,
    GroupPoint,
    cartesian_product,
    cayley_graph,
    complete_graph,
    connected_graphs,
    cycle_graph,
    hamming_graph,
    hypercube,
    parse_graph,
    path_graph,
    sphere,
    sphere_size,
    star_graph,
)


@pytest.mark.parametrize("m,edges", [(2, 1), (4, 6), (7, 21)])
def test_complete_graph_edge_counts(m, edges):
    G = complete_graph(m)
    assert G.edge_count == edges
    assert G.is_connected()


def test_single_vertex_complete_graph():
    G = complete_graph(1)
    assert G.edge_count == 0 and G.is_connected()


def test_graph_rejects_bad_edges():
    with pytest.raises(ValueError):
        Graph(3, [(0, 0)])
    with pytest.raises(ValueError):
        Graph(3, [(0, 3)])
    with pytest.raises(ValueError):
        Graph(3, [(0, 1), (1, 0)])


def test_graph_is_immutable():
    G = path_graph(3)
    with pytest.raises(AttributeError):
        G.vertex_count = 4
    with pytest.raises(ValueError):
        G.edges[0, 0] = 2


def test_square_of_k2_is_four_cycle():
    G = cartesian_product([complete_graph(2), complete_graph(2)])
    assert (G.vertex_count, G.edge_count) == (4, 4)
    assert sorted(G.degrees().tolist()) == [2, 2, 2, 2]


def test_cube_of_k2():
    G = cartesian_product([complete_graph(2)] * 3)
    assert (G.vertex_count, G.edge_count) == (8, 12)
    assert G == hypercube(3)


def test_k3_squared_degrees():
    G = cartesian_product([complete_graph(3), complete_graph(3)])
    assert G.vertex_count == 9
    assert set(G.degrees().tolist()) == {4}


def test_product_requires_factors():
    with pytest.raises(ValueError):
        cartesian_product([])


def test_product_neighbour_rule_by_enumeration():
    A, B = path_graph(3), cycle_graph(4)
    G = cartesian_product([A, B])
    ea = {tuple(e) for e in A.edge_list()}
    eb = {tuple(e) for e in B.edge_list()}
    expected = set()
    for u, v in itertools.combinations(range(G.vertex_count), 2):
        (a1, b1), (a2, b2) = G.labels[u], G.labels[v]
        if b1 == b2 and (min(a1, a2), max(a1, a2)) in ea:
            expected.add((u, v))
        if a1 == a2 and (min(b1, b2), max(b1, b2)) in eb:
            expected.add((u, v))
    assert set(G.edge_list()) == expected


def test_product_associativity_via_labels():
    A, B, C = path_graph(2), path_graph(3), cycle_graph(3)
    flat = cartesian_product([A, B, C])
    nested = cartesian_product([cartesian_product([A, B]), C])
    assert flat.labels == nested.labels
    assert flat.edge_list() == nested.edge_list()


def test_product_degree_is_sum_of_factor_degrees():
    A, B = star_graph(4), path_graph(3)
    G = cartesian_product([A, B])
    da, db = A.degrees(), B.degrees()
    for v, (a, b) in enumerate(G.labels):
        assert G.degrees()[v] == da[a] + db[b]


def test_product_connectivity():
    disconnected = Graph(2, [])
    assert not cartesian_product([disconnected, path_graph(3)]).is_connected()
    assert cartesian_product([path_graph(2), path_graph(3)]).is_connected()


def test_hamming_examples():
    assert hamming_graph(1, 5).edge_list() == complete_graph(5).edge_list()
    Q = hamming_graph(3, 2)
    assert set(Q.degrees().tolist()) == {3}
    H = hamming_graph(2, 3)
    assert (H.vertex_count, H.edge_count) == (9, 18)


def test_hamming_cap():
    with pytest.raises(CapExceeded):
        hamming_graph(21, 2)
    with pytest.raises(CapExceeded):
        hamming_graph(4, 3, cap=80)


@pytest.mark.parametrize("n,ell,k,size", [(5, 3, 0, 1), (3, 2, 2, 3), (4, 3, 2, 24)])
def test_sphere_size_examples(n, ell, k, size):
    assert sphere_size(n, ell, k) == size


def test_sphere_size_matches_enumeration():
    count = sum(1 for x in itertools.product(range(3), repeat=4) if sum(c != 0 for c in x) == 2)
    assert count == sphere_size(4, 3, 2) == len(sphere(4, 3, 2))


def test_sphere_size_out_of_range():
    with pytest.raises(ValueError):
        sphere_size(3, 2, 4)
    with pytest.raises(ValueError):
        sphere_size(3, 2, -1)


def test_sphere_sizes_sum_to_group_order():
    for n in range(1, 21):
        for ell in range(2, 6):
            assert sum(sphere_size(n, ell, k) for k in range(n + 1)) == ell**n


@given(
    st.integers(2, 5).flatmap(
        lambda ell: st.tuples(
            st.just(ell),
            st.lists(st.integers(0, ell - 1), min_size=3, max_size=3),
            st.lists(st.integers(0, ell - 1), min_size=3, max_size=3),
            st.lists(st.integers(0, ell - 1), min_size=3, max_size=3),
        )
    )
)
def test_group_point_laws(data):
    ell, a, b, c = data
    x, y, z = (GroupPoint(ell, tuple(v)) for v in (a, b, c))
    zero = GroupPoint.zero(3, ell)
    assert (x + y) + z == x + (y + z)
    assert x + zero == x
    assert x + (-x) == zero
    assert x.support() == frozenset(i for i, v in enumerate(a) if v)
    assert GroupPoint.from_index(x.index(), 3, ell) == x


def test_cayley_sphere_one_is_hamming():
    for n, ell in [(2, 2), (3, 2), (2, 3), (2, 4)]:
        gens = sphere(n, ell, 1)
        assert cayley_graph(n, ell, gens).edge_list() == hamming_graph(n, ell).edge_list()


def test_cayley_all_nonzero_is_complete():
    gens = list(range(1, 8))
    assert cayley_graph(3, 2, gens).edge_list() == complete_graph(8).edge_list()


def test_cayley_diagonal_is_disconnected():
    G = cayley_graph(2, 2, [GroupPoint(2, (1, 1))])
    assert G.component_count() == 2


def test_cayley_rejects_asymmetric_generators():
    with pytest.raises(ValueError):
        cayley_graph(1, 3, [GroupPoint(3, (1,))])
    with pytest.raises(ValueError):
        cayley_graph(1, 3, [0])


def test_catalog_counts():
    assert [len(connected_graphs(m)) for m in range(1, 7)] == [1, 1, 2, 6, 21, 112]
    assert all(G.is_connected() for G in connected_graphs(5))


def test_parse_graph_forms():
    assert parse_graph("hamming:n=3,l=2") == hamming_graph(3, 2)
    assert parse_graph("path:3").edge_list() == [(0, 1), (1, 2)]
    assert parse_graph("cycle4").edge_count == 4
    assert parse_graph("k5").edge_list() == complete_graph(5).edge_list()
    prod = parse_graph("product:path3 x cycle4")
    assert prod.edge_list() == cartesian_product([path_graph(3), cycle_graph(4)]).edge_list()
    with pytest.raises(ValueError):
        parse_graph("nonsense")


def test_json_round_trip():
    G = cartesian_product([path_graph(3), cycle_graph(3)])
    H = Graph.from_json(G.to_json())
    assert H.edge_list() == G.edge_list() and H.labels == G.labels
    assert parse_graph(G.to_json()).edge_list() == G.edge_list()


def test_edges_sorted_and_deterministic():
    G = Graph(4, [(3, 2), (1, 0), (2, 0)])
    assert G.edge_list() == [(0, 1), (0, 2), (2, 3)]
    assert np.all(G.edges[:, 0] < G.edges[:, 1])
