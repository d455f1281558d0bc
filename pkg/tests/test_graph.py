"""Graph, node-set, and decomposition tests, including hand-checked examples."""

import math

import pytest
from hypothesis import given, strategies as st

from fogd import Graph, NodeSet, bhop_neighborhood, build_decomposition, grid_graph
from fogd.errors import DegenerateSubdomainError, InputValidationError
from fogd.graph import (
    closed_neighborhood,
    derived_boundary_sets,
    graph_distance,
    load_edge_list,
    load_partition,
    open_neighborhood,
    strip_partition,
)


def path_graph(n):
    return Graph(tuple(
        tuple(j for j in (i - 1, i + 1) if 0 <= j < n) for i in range(n)
    ))


class TestGraphBasics:
    def test_grid_counts(self):
        g = grid_graph(40, 40)
        assert g.node_count == 1600
        assert g.edge_count == 3120

    def test_from_edges_dedupes_and_sorts(self):
        g = Graph.from_edges(3, [(0, 1), (1, 0), (1, 2)])
        assert g.adjacency == ((1,), (0, 2), (1,))

    def test_self_loop_rejected(self):
        with pytest.raises(InputValidationError):
            Graph(((0,),))
        with pytest.raises(InputValidationError):
            Graph.from_edges(2, [(1, 1)])

    def test_asymmetric_adjacency_rejected(self):
        with pytest.raises(InputValidationError):
            Graph(((1,), ()))

    def test_unsorted_adjacency_rejected(self):
        with pytest.raises(InputValidationError):
            Graph(((2, 1), (0, 2), (0, 1)))

    def test_neighbor_out_of_range_rejected(self):
        with pytest.raises(InputValidationError):
            Graph(((5,),))

    def test_graph_distance(self):
        g = grid_graph(4, 4)
        target = NodeSet.of(g, [15])
        assert graph_distance(g, 0, target) == 6
        assert graph_distance(g, 15, target) == 0

    def test_graph_distance_unreachable(self):
        g = Graph(((), ()))
        assert graph_distance(g, 0, NodeSet.of(g, [1])) == math.inf


class TestNodeSet:
    def test_ordering_enforced(self):
        g = path_graph(5)
        with pytest.raises(InputValidationError):
            NodeSet(g, (3, 1))
        with pytest.raises(InputValidationError):
            NodeSet(g, (1, 1))

    def test_of_sorts(self):
        g = path_graph(5)
        assert NodeSet.of(g, [3, 1, 3]).nodes == (1, 3)

    @given(a=st.sets(st.integers(0, 11)), b=st.sets(st.integers(0, 11)))
    def test_set_algebra_matches_builtin_sets(self, a, b):
        g = path_graph(12)
        sa, sb = NodeSet.of(g, a), NodeSet.of(g, b)
        assert set(sa.union(sb)) == a | b
        assert set(sa.intersection(sb)) == a & b
        assert set(sa.difference(sb)) == a - b
        assert sa.issubset(sb) == (a <= b)


class TestNeighborhoods:
    def test_bhop_zero_is_seed(self):
        g = path_graph(10)
        seed = NodeSet.of(g, [4, 5])
        assert bhop_neighborhood(g, seed, 0).nodes == (4, 5)

    def test_bhop_grows_one_hop(self):
        g = path_graph(10)
        seed = NodeSet.of(g, [4, 5])
        assert bhop_neighborhood(g, seed, 1).nodes == (3, 4, 5, 6)

    def test_bhop_validation(self):
        g = path_graph(4)
        with pytest.raises(InputValidationError):
            bhop_neighborhood(g, NodeSet(g, ()), 1)
        with pytest.raises(InputValidationError):
            bhop_neighborhood(g, NodeSet.of(g, [0]), -1)

    def test_bhop_monotone_in_b(self):
        g = grid_graph(7, 9)
        seed = NodeSet.of(g, [0, 31])
        for b in range(5):
            assert bhop_neighborhood(g, seed, b).issubset(
                bhop_neighborhood(g, seed, b + 1)
            )

    def test_open_closed_neighborhood(self):
        g = path_graph(10)
        s = NodeSet.of(g, [4, 5])
        assert open_neighborhood(g, s).nodes == (3, 6)
        assert closed_neighborhood(g, s).nodes == (3, 4, 5, 6)

    def test_grid_column_expansion(self):
        # an 8-column strip of a 40x40 grid expands by exactly b columns
        g = grid_graph(40, 40)
        seed = NodeSet.of(g, (r * 40 + c for r in range(40) for c in range(8)))
        grown = bhop_neighborhood(g, seed, 6)
        expect = {r * 40 + c for r in range(40) for c in range(14)}
        assert set(grown) == expect


class TestBoundarySets:
    def test_path_example_by_hand(self):
        # path 0..9, seed {4,5}, b=1: all five boundary sets checked by hand
        g = path_graph(10)
        w = bhop_neighborhood(g, NodeSet.of(g, [4, 5]), 1)
        assert w.nodes == (3, 4, 5, 6)
        nw, tilde, hat, bar, check = derived_boundary_sets(g, w)
        assert nw.nodes == (2, 7)
        assert tilde.nodes == (3, 6)
        assert hat.nodes == (2, 3, 6, 7)
        assert bar.nodes == (1, 2, 7, 8)
        assert check.nodes == (3, 4, 5, 6)

    def test_whole_graph_subdomain_has_empty_boundaries(self):
        g = path_graph(6)
        w = NodeSet.of(g, range(6))
        for s in derived_boundary_sets(g, w):
            assert len(s) == 0

    def test_decomposition_matches_recomputation(self, pde12):
        _, g, parts = pde12
        for b in (1, 2, 3):
            dec = build_decomposition(g, parts, b)
            for ell, w in enumerate(dec.subdomains):
                nw, tilde, hat, bar, check = derived_boundary_sets(g, w)
                assert dec.open_boundary[ell].nodes == nw.nodes
                assert dec.internal_boundary[ell].nodes == tilde.nodes
                assert dec.combined_boundary[ell].nodes == hat.nodes
                assert dec.external_depth2[ell].nodes == bar.nodes
                assert dec.internal_depth2[ell].nodes == check.nodes

    def test_interior_closure_stays_inside_subdomain(self, pde12):
        # constraints of the exclusive interior only touch subdomain variables
        _, g, parts = pde12
        for b in (1, 2):
            dec = build_decomposition(g, parts, b)
            for ell, w in enumerate(dec.subdomains):
                interior = dec.exclusive_interior(ell)
                assert closed_neighborhood(g, interior).issubset(w)


class TestDecomposition:
    def test_strip_partition_widths(self):
        g = grid_graph(40, 40)
        parts = strip_partition(g, 40, 40, 5)
        assert [len(p) for p in parts] == [320] * 5
        # second strip covers columns 8..15; two hops widen it to 6..17
        w2 = bhop_neighborhood(g, parts[1], 2)
        cols = sorted({i % 40 for i in w2})
        assert cols == list(range(6, 18))

    def test_strip_partition_uneven(self):
        g = grid_graph(3, 10)
        parts = strip_partition(g, 3, 10, 3)
        assert [len(p) for p in parts] == [12, 9, 9]
        assert sum(len(p) for p in parts) == 30

    def test_strip_count_validation(self):
        g = grid_graph(3, 4)
        with pytest.raises(InputValidationError):
            strip_partition(g, 3, 4, 0)
        with pytest.raises(InputValidationError):
            strip_partition(g, 3, 4, 5)

    def test_partition_must_cover_disjointly(self):
        g = path_graph(6)
        half = NodeSet.of(g, [0, 1, 2])
        with pytest.raises(InputValidationError):
            build_decomposition(g, [half], 1)
        with pytest.raises(InputValidationError):
            build_decomposition(g, [half, NodeSet.of(g, [2, 3, 4, 5])], 1)
        with pytest.raises(InputValidationError):
            build_decomposition(g, [half, NodeSet(g, ()), NodeSet.of(g, [3, 4, 5])], 1)

    def test_custom_subdomains_checked(self):
        g = path_graph(8)
        parts = [NodeSet.of(g, [0, 1, 2, 3]), NodeSet.of(g, [4, 5, 6, 7])]
        with pytest.raises(InputValidationError):
            build_decomposition(g, parts, 2, subdomains=[parts[0], parts[1]])
        with pytest.raises(InputValidationError):
            build_decomposition(g, parts, 1, subdomains=[parts[0]])

    def test_degenerate_subdomain_rejected(self):
        g = path_graph(10)
        parts = [NodeSet.of(g, range(4)), NodeSet.of(g, [4]),
                 NodeSet.of(g, range(5, 10))]
        with pytest.raises(DegenerateSubdomainError):
            build_decomposition(g, parts, 0)

    def test_negative_b_rejected(self, pde12):
        _, g, parts = pde12
        with pytest.raises(InputValidationError):
            build_decomposition(g, parts, -1)


class TestFileFormats:
    def test_edge_list_round_trip(self, tmp_path):
        p = tmp_path / "edges.txt"
        p.write_text("# comment\n0 1\n1 2\n\n2 3\n")
        g = load_edge_list(p)
        assert g.adjacency == ((1,), (0, 2), (1, 3), (2,))

    def test_edge_list_bad_line(self, tmp_path):
        p = tmp_path / "edges.txt"
        p.write_text("0 1 2\n")
        with pytest.raises(InputValidationError):
            load_edge_list(p)

    def test_partition_round_trip(self, tmp_path):
        g = path_graph(4)
        p = tmp_path / "parts.txt"
        p.write_text("0 0\n1 0\n2 1\n3 1\n")
        parts = load_partition(g, p)
        assert [s.nodes for s in parts] == [(0, 1), (2, 3)]

    def test_partition_duplicate_node(self, tmp_path):
        g = path_graph(3)
        p = tmp_path / "parts.txt"
        p.write_text("0 0\n0 1\n1 0\n2 0\n")
        with pytest.raises(InputValidationError):
            load_partition(g, p)

    def test_partition_must_cover(self, tmp_path):
        g = path_graph(3)
        p = tmp_path / "parts.txt"
        p.write_text("0 0\n1 0\n")
        with pytest.raises(InputValidationError):
            load_partition(g, p)
