"""Bipartite multigraph kernel: cycles, quotients, blocks, decompositions.

The fixture graphs here (a three-cycle chain glued at a shared v and a
shared w; a cactus with pendant double edges) are frozen by hand from their
adjacency lists, as are the expected block structures, merges, and subset
families.
"""

import fractions

import pytest
from hypothesis import given, settings, strategies as st

from ckspectrum.graphs import (
    BipartiteMultigraph,
    DecompositionCapError,
    SubsetFamily,
    classify,
    cycle_graph,
    enumerate_admissible_decompositions,
    induced_subgraph,
    merge_family,
    quotient,
    rho,
    to_dot,
    w_mu_finest,
    w_pi_subsets,
)
from ckspectrum.partitions import (
    Partition,
    enumerate_noncrossing,
    enumerate_set_partitions,
    is_noncrossing,
    partition_stats,
)


def graph(edges):
    """Build a graph from {(w, v): multiplicity}."""
    ws, vs = [], []
    for w, v in edges:
        if w not in ws:
            ws.append(w)
        if v not in vs:
            vs.append(v)
    return BipartiteMultigraph(tuple(ws), tuple(vs), dict(edges))


def part(k, *blocks):
    return Partition.from_blocks(k, blocks)


# Three simple cycles glued in a chain: an 8-cycle and a 12-cycle sharing
# v1, the 12-cycle and a 6-cycle sharing w5.
CHAIN = graph(
    {
        # 8-cycle on w1..w4, v1..v4
        ("w1", "v1"): 1, ("w1", "v4"): 1,
        ("w2", "v2"): 1, ("w2", "v1"): 1,
        ("w3", "v3"): 1, ("w3", "v2"): 1,
        ("w4", "v4"): 1, ("w4", "v3"): 1,
        # 12-cycle on w5..w10 through v1
        ("w5", "v5"): 1, ("w5", "v10"): 1,
        ("w6", "v6"): 1, ("w6", "v5"): 1,
        ("w7", "v7"): 1, ("w7", "v6"): 1,
        ("w8", "v1"): 1, ("w8", "v7"): 1,
        ("w9", "v9"): 1, ("w9", "v1"): 1,
        ("w10", "v10"): 1, ("w10", "v9"): 1,
        # 6-cycle on w5, w11, w12
        ("w11", "v13"): 1, ("w11", "v11"): 1,
        ("w5", "v13"): 1, ("w5", "v12"): 1,
        ("w12", "v12"): 1, ("w12", "v11"): 1,
    }
)

W1 = frozenset({"w1", "w2", "w3", "w4"})
W2 = frozenset({f"w{i}" for i in range(5, 13)})
W3 = frozenset({f"w{i}" for i in range(5, 11)})
W4 = frozenset({"w5", "w11", "w12"})

# Cactus: 8-cycle and 4-cycle sharing w3, plus pendant double edges at w1
# (to v1) and at w7 (to v5, v7, v8).
CACTUS = graph(
    {
        ("w2", "v2"): 1, ("w2", "v1"): 1,
        ("w5", "v1"): 1, ("w5", "v4"): 1,
        ("w4", "v4"): 1, ("w4", "v3"): 1,
        ("w3", "v3"): 1, ("w3", "v2"): 1,
        ("w3", "v5"): 1, ("w3", "v6"): 1,
        ("w6", "v5"): 1, ("w6", "v6"): 1,
        ("w1", "v1"): 2,
        ("w7", "v5"): 2, ("w7", "v7"): 2, ("w7", "v8"): 2,
    }
)


class TestConstruction:
    def test_cycle_graph_shape(self):
        g = cycle_graph(6)
        assert len(g.w_ids) == 6 and len(g.v_ids) == 6
        assert g.total_edges() == 12
        assert all(m == 1 for m in g.edges.values())
        assert all(g.degree(x) == 2 for x in g.w_ids + g.v_ids)
        assert g.edges == {
            **{(f"w{i}", f"v{i}"): 1 for i in range(1, 7)},
            **{(f"w{i % 6 + 1}", f"v{i}"): 1 for i in range(1, 7)},
        }

    def test_cycle_graph_k1_is_a_double_edge(self):
        g = cycle_graph(1)
        assert g.edges == {("w1", "v1"): 2}

    def test_cycle_graph_k2(self):
        g = cycle_graph(2)
        assert g.total_edges() == 4
        assert all(m == 1 for m in g.edges.values())
        assert all(g.degree(x) == 2 for x in g.w_ids + g.v_ids)

    def test_degree_consistency(self):
        total = CHAIN.total_edges()
        assert sum(CHAIN.degree(w) for w in CHAIN.w_ids) == total
        assert sum(CHAIN.degree(v) for v in CHAIN.v_ids) == total
        assert total == 26
        assert CHAIN.degree("w5") == 4 and CHAIN.degree("v1") == 4

    def test_edge_endpoint_validation(self):
        with pytest.raises(ValueError):
            BipartiteMultigraph(("w1",), ("v1",), {("w1", "v9"): 1})

    def test_to_dot_mentions_vertices_and_multiplicity(self):
        text = to_dot(cycle_graph(1))
        assert "w1" in text and "v1" in text and "2" in text


class TestQuotient:
    def test_identity_quotient(self):
        g = cycle_graph(3)
        q = quotient(g, part(3, {1}, {2}, {3}), part(3, {1}, {2}, {3}))
        assert q == g

    def test_collapsed_v_pair_gives_two_double_edges(self):
        q = quotient(cycle_graph(2), part(2, {1, 2}), part(2, {1}, {2}))
        assert q.edges == {("w1", "v~1"): 2, ("w2", "v~1"): 2}
        assert q.degree("v~1") == 4

    def test_nested_v_partition_quotient(self):
        q = quotient(cycle_graph(6), part(6, {1, 5, 6}, {2, 4}, {3}), None)
        assert q.edges == {
            ("w1", "v~1"): 2,
            ("w2", "v~1"): 1, ("w2", "v~2"): 1,
            ("w3", "v~2"): 1, ("w3", "v3"): 1,
            ("w4", "v3"): 1, ("w4", "v~2"): 1,
            ("w5", "v~2"): 1, ("w5", "v~1"): 1,
            ("w6", "v~1"): 2,
        }
        assert q.provenance["v~1"] == ("v1", "v5", "v6")

    @given(st.integers(min_value=1, max_value=6), st.data())
    @settings(max_examples=60, deadline=None)
    def test_degree_sum_preserved(self, k, data):
        pi = data.draw(st.sampled_from(enumerate_set_partitions(k)))
        mu = data.draw(st.sampled_from(enumerate_set_partitions(k)))
        g = cycle_graph(k)
        q = quotient(g, pi, mu)
        assert q.total_edges() == g.total_edges()
        assert sum(q.degree(w) for w in q.w_ids) == 2 * k
        assert len(q.w_ids) == len(mu.blocks)
        assert len(q.v_ids) == len(pi.blocks)


class TestInducedSubgraph:
    def test_first_cycle(self):
        g1 = induced_subgraph(CHAIN, W1)
        assert set(g1.w_ids) == W1
        assert set(g1.v_ids) == {"v1", "v2", "v3", "v4"}
        assert g1.total_edges() == 8

    def test_full_w_returns_whole_graph(self):
        assert induced_subgraph(CHAIN, frozenset(CHAIN.w_ids)) == CHAIN

    def test_all_incident_edges_kept(self):
        # w5 keeps its edges into the third cycle even when only the middle
        # cycle's W-set is requested, so its degree is preserved.
        g3 = induced_subgraph(CHAIN, W3)
        assert g3.degree("w5") == CHAIN.degree("w5") == 4
        assert set(g3.v_ids) == {"v1", "v5", "v6", "v7", "v9", "v10", "v12", "v13"}

    def test_common_vertex_sets(self):
        fam = SubsetFamily(CHAIN, (W1, W2))
        assert fam.common_w() == frozenset()
        assert fam.common_v() == {"v1"}
        fam34 = SubsetFamily(CHAIN, (W3, W4))
        assert fam34.common_w() == {"w5"}
        assert fam34.common_v() == {"v5", "v10", "v12", "v13"}
        assert len(fam34.common_v()) == 4

    def test_common_vertices_second_pair(self):
        fam = SubsetFamily(CHAIN, (frozenset({"w1", "w2", "w4"}), frozenset({"w3", "w4"})))
        assert fam.common_v() == {"v2", "v3", "v4"}


class TestMergeFamily:
    def test_merging_overlapping_subsets_gives_big_cycle_pair(self):
        merged, graphs = merge_family(SubsetFamily(CHAIN, (W3, W4)))
        assert merged == [W2]
        assert graphs == [induced_subgraph(CHAIN, W2)]

    def test_disjoint_family_unchanged(self):
        merged, graphs = merge_family(SubsetFamily(CHAIN, (W1, W2)))
        assert merged == [W1, W2]
        assert graphs == [induced_subgraph(CHAIN, W1), induced_subgraph(CHAIN, W2)]

    def test_merge_via_shared_w_only(self):
        fam = SubsetFamily(CHAIN, (frozenset({"w1", "w2", "w4"}), frozenset({"w3", "w4"})))
        merged, graphs = merge_family(fam)
        assert merged == [W1]
        assert graphs == [induced_subgraph(CHAIN, W1)]

    def test_idempotent_on_merged_output(self):
        merged, _ = merge_family(SubsetFamily(CHAIN, (W3, W4)))
        again, _ = merge_family(SubsetFamily(CHAIN, tuple(merged)))
        assert again == merged

    def test_disconnected_subset_rejected(self):
        with pytest.raises(ValueError):
            merge_family(SubsetFamily(CHAIN, (frozenset({"w1", "w11"}),)))


class TestRho:
    def test_simple_cycle(self):
        assert rho(cycle_graph(3)) == 2

    def test_double_edge(self):
        assert rho(cycle_graph(1)) == 0

    def test_double_trees_have_rho_zero(self):
        # Quotient collapsing all of V turns the 2k-cycle into a double star.
        for k in (2, 3, 4):
            blocks = [set(range(1, k + 1))]
            q = quotient(cycle_graph(k), part(k, *blocks), None)
            assert rho(q) == 0

    def test_half_integral_value(self):
        g = graph({("w1", "v1"): 2, ("w1", "v2"): 1})
        assert rho(g) == fractions.Fraction(1, 2)

    def test_cactus_value(self):
        assert rho(CACTUS) == 4

    def test_disconnected_rejected(self):
        g = graph({("w1", "v1"): 2, ("w2", "v2"): 2})
        with pytest.raises(ValueError):
            rho(g)


class TestClassify:
    def test_cactus_fixture(self):
        dec = classify(CACTUS)
        assert dec.admissible
        assert len(dec.blocks) == 3
        assert set(dec.separating_vertices) == {"v1", "v5"}
        assert dec.is_block_tree
        assert (dec.R, dec.S) == (1, 2)
        by_w = {frozenset(b.w_ids) for b in dec.blocks}
        assert by_w == {
            frozenset({"w1"}),
            frozenset({"w2", "w3", "w4", "w5", "w6"}),
            frozenset({"w7"}),
        }

    def test_chain_fixture(self):
        dec = classify(CHAIN)
        assert dec.admissible
        assert len(dec.blocks) == 2
        assert set(dec.separating_vertices) == {"v1"}
        assert (dec.R, dec.S) == (2, 0)
        # The shared w5 does not split its two cycles into separate blocks.
        by_w = {frozenset(b.w_ids) for b in dec.blocks}
        assert by_w == {W1, W2}

    def test_k1_cycle(self):
        dec = classify(cycle_graph(1))
        assert dec.admissible and len(dec.blocks) == 1
        assert (dec.R, dec.S) == (0, 1)

    def test_double_star_is_one_block(self):
        q = quotient(cycle_graph(3), None, part(3, {1, 2, 3}))
        dec = classify(q)
        assert dec.admissible
        assert len(dec.blocks) == 1
        assert (dec.R, dec.S) == (0, 1)

    def test_two_double_edges_at_shared_v(self):
        q = quotient(cycle_graph(2), part(2, {1, 2}), None)
        dec = classify(q)
        assert dec.admissible
        assert len(dec.blocks) == 2
        assert dec.separating_vertices == ("v~1",)
        assert (dec.R, dec.S) == (0, 2)

    def test_fat_edge_not_admissible(self):
        q = quotient(cycle_graph(2), part(2, {1, 2}), part(2, {1, 2}))
        assert q.edges == {("w~1", "v~1"): 4}
        assert not classify(q).admissible

    def test_admissible_iff_noncrossing_v_partition(self):
        for k in range(1, 7):
            singles = part(k, *[{i} for i in range(1, k + 1)])
            for pi in enumerate_set_partitions(k):
                q = quotient(cycle_graph(k), pi, singles)
                assert classify(q).admissible == is_noncrossing(pi)

    def test_admissible_graphs_have_multiplicity_at_most_two(self):
        for k in range(1, 5):
            for pi in enumerate_set_partitions(k):
                for mu in enumerate_set_partitions(k):
                    q = quotient(cycle_graph(k), pi, mu)
                    if classify(q).admissible:
                        assert all(m in (1, 2) for m in q.edges.values())


class TestAdmissibleDecompositions:
    def test_cactus_central_block_has_two(self):
        block_w = frozenset({"w2", "w3", "w4", "w5", "w6"})
        fams = enumerate_admissible_decompositions(CACTUS, block_w)
        got = {tuple(sorted(tuple(sorted(s)) for s in f.subsets)) for f in fams}
        assert got == {
            (tuple(sorted(block_w)),),
            (("w2", "w3", "w4", "w5"), ("w3", "w6")),
        }

    def test_chain_glued_block_has_two(self):
        fams = enumerate_admissible_decompositions(CHAIN, W2)
        got = {frozenset(f.subsets) for f in fams}
        assert got == {frozenset({W2}), frozenset({W3, W4})}

    def test_simple_cycle_block_is_rigid(self):
        for k in range(2, 7):
            g = cycle_graph(k)
            fams = enumerate_admissible_decompositions(g, frozenset(g.w_ids))
            assert len(fams) == 1
            assert fams[0].subsets == (frozenset(g.w_ids),)

    def test_cap(self):
        with pytest.raises(DecompositionCapError):
            g = cycle_graph(9)
            enumerate_admissible_decompositions(g, frozenset(g.w_ids))

    def test_subset_size_identity_per_block(self):
        # Sum of (|W_i| - 1) over any admissible decomposition equals the
        # block's cycle rank rho.
        for k in range(2, 6):
            for pi in enumerate_noncrossing(k):
                for mu in enumerate_set_partitions(k):
                    q = quotient(cycle_graph(k), pi, mu)
                    dec = classify(q)
                    if not dec.admissible:
                        continue
                    for b in dec.blocks:
                        if len(b.w_ids) < 2:
                            continue
                        for fam in enumerate_admissible_decompositions(q, frozenset(b.w_ids)):
                            total = sum(len(s) - 1 for s in fam.subsets)
                            assert total == rho(b)

    def test_completed_family_identity_on_whole_graph(self):
        # Per-block decompositions plus leftover singleton vertices satisfy
        # the same identity against the whole graph's rho.
        q = quotient(cycle_graph(4), part(4, {1, 3}, {2}, {4}), None)
        dec = classify(q)
        assert dec.admissible
        r_blocks = [b for b in dec.blocks if len(b.w_ids) >= 2]
        assert len(r_blocks) == 2
        fams = [
            enumerate_admissible_decompositions(q, frozenset(b.w_ids))
            for b in r_blocks
        ]
        for f1 in fams[0]:
            for f2 in fams[1]:
                subsets = list(f1.subsets) + list(f2.subsets)
                covered = set().union(*subsets)
                singletons = [{w} for w in set(q.w_ids) - covered]
                total = sum(len(s) - 1 for s in subsets + singletons)
                assert total == rho(q)


class TestWPiSubsets:
    def test_nested_example(self):
        got = w_pi_subsets(6, part(6, {1, 5, 6}, {2, 4}, {3}))
        assert got == [
            frozenset({"w2", "w5"}),
            frozenset({"w3", "w4"}),
            frozenset({"w1"}),
            frozenset({"w6"}),
        ]

    def test_nested_example_structure(self):
        pi = part(6, {1, 5, 6}, {2, 4}, {3})
        subsets = w_pi_subsets(6, pi)
        s, r = partition_stats(pi, "V-cycle")
        large = [x for x in subsets if len(x) >= 2]
        assert len(large) == r and len(subsets) - len(large) == s
        # Each large subset induces a simple bipartite cycle of length 2|W|
        # in the quotient.
        q = quotient(cycle_graph(6), pi, None)
        for ws in large:
            sub = induced_subgraph(q, ws)
            assert sub.total_edges() == 2 * len(ws)
            assert all(sub.degree(x) == 2 for x in sub.w_ids + sub.v_ids)
            assert len(sub.v_ids) == len(ws)

    def test_singleton_partition_gives_whole_w(self):
        assert w_pi_subsets(4, part(4, {1}, {2}, {3}, {4})) == [
            frozenset({"w1", "w2", "w3", "w4"})
        ]

    def test_one_block_partition_gives_singletons(self):
        got = w_pi_subsets(3, part(3, {1, 2, 3}))
        assert got == [frozenset({"w1"}), frozenset({"w2"}), frozenset({"w3"})]

    def test_crossing_rejected(self):
        with pytest.raises(ValueError):
            w_pi_subsets(4, part(4, {1, 3}, {2, 4}))

    def test_disjoint_cover(self):
        for k in range(1, 7):
            for pi in enumerate_noncrossing(k):
                subsets = w_pi_subsets(k, pi)
                all_ws = sorted(w for s in subsets for w in s)
                assert all_ws == sorted(f"w{i}" for i in range(1, k + 1))


class TestWMuFinest:
    def test_two_merged_blocks(self):
        got = w_mu_finest(6, part(6, {1, 2}, {3}, {4, 6}, {5}))
        assert got == [
            frozenset({"w~1", "w~2", "w3"}),
            frozenset({"w~2", "w5"}),
            frozenset({"w~1"}),
        ]

    def test_crossing_partition_single_subset(self):
        got = w_mu_finest(6, part(6, {1, 4}, {2}, {3, 5}, {6}))
        assert got == [frozenset({"w~1", "w2", "w~2", "w6"})]

    def test_singletons_give_whole_w(self):
        assert w_mu_finest(3, part(3, {1}, {2}, {3})) == [
            frozenset({"w1", "w2", "w3"})
        ]

    def test_one_block_gives_k_token_copies(self):
        got = w_mu_finest(3, part(3, {1, 2, 3}))
        assert got == [frozenset({"w~1"})] * 3

    def test_counts_match_partition_stats(self):
        for k in range(1, 7):
            for mu in enumerate_set_partitions(k):
                s, r = partition_stats(mu, "W-cycle")
                subsets = w_mu_finest(k, mu)
                assert len(subsets) == s + r
                assert sum(1 for x in subsets if len(x) == 1) == s
                assert sum(1 for x in subsets if len(x) >= 2) == r

    def test_large_subsets_cover_quotient_w(self):
        for k in range(2, 7):
            for mu in enumerate_set_partitions(k):
                if len(mu.blocks) == 1:
                    continue
                large = [x for x in w_mu_finest(k, mu) if len(x) >= 2]
                q = quotient(cycle_graph(k), None, mu)
                if large:
                    assert set().union(*large) == set(q.w_ids)
                for ws in large:
                    assert induced_subgraph(q, ws).is_connected()
