import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from conftest import mixed_instance
from qergo.errors import DegreeOutOfRange, DisconnectedGraph, MultiEdge, PathBudgetExceeded, SelfLoop
from qergo.graph import (build_graph, complete_bipartite, count_nb_paths, distances_from, enumerate_nb_paths,
                         injectivity_radii, injectivity_radius, is_nb_path, iter_path_blocks, nb_adjoint_apply,
                         nb_apply, nb_paths, nb_successors, parse_graph, path_edges, read_graph, regular_tree,
                         write_graph)


def test_k4_and_petersen_degrees(k4, petersen):
    assert (k4.degrees == 3).all() and k4.n == 4
    assert (petersen.degrees == 3).all() and petersen.n == 10
    assert k4.oriented.count == 12
    assert petersen.oriented.count == 30


def test_build_graph_rejections():
    with pytest.raises(DegreeOutOfRange):
        build_graph([(0, 1), (1, 2), (0, 2)], 3)
    with pytest.raises(SelfLoop):
        build_graph([(0, 0), (0, 1), (0, 2), (1, 2), (1, 3), (2, 3)], 4)
    k4_edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    with pytest.raises(MultiEdge):
        build_graph(k4_edges + [(1, 0)], 4)
    two_k4 = k4_edges + [(a + 4, b + 4) for a, b in k4_edges]
    with pytest.raises(DisconnectedGraph):
        build_graph(two_k4, 8)
    with pytest.raises(DegreeOutOfRange):
        build_graph(k4_edges, 4, max_degree=2)


def test_neighbor_lists_sorted(medium_instance):
    g, _ = medium_instance
    for x in range(g.n):
        nb = g.neighbors(x)
        assert (np.diff(nb) > 0).all()


@pytest.mark.parametrize("name", ["k4", "petersen", "mixed"])
def test_reversal_involution(name, k4, petersen, medium_instance):
    g = {"k4": k4, "petersen": petersen, "mixed": medium_instance[0]}[name]
    o = g.oriented
    e = np.arange(o.count)
    assert (o.reverse[o.reverse] == e).all()
    assert (o.reverse != e).all()
    assert (o.origin[o.reverse] == o.terminus).all()
    assert (o.terminus[o.reverse] == o.origin).all()
    pairs = {tuple(sorted(p)) for p in zip(o.origin.tolist(), o.terminus.tolist())}
    assert len(pairs) * 2 == o.count


def test_successor_counts(k4, medium_instance):
    for e in range(k4.oriented.count):
        assert len(nb_successors(k4, e)) == 2
    g, _ = medium_instance
    o = g.oriented
    for e in range(o.count):
        succ = nb_successors(g, e)
        assert len(succ) == g.degrees[o.terminus[e]] - 1
        assert (o.origin[succ] == o.terminus[e]).all()
        assert (succ != o.reverse[e]).all()


def test_k4_path_counts(k4):
    assert count_nb_paths(k4, 0) == 4
    assert count_nb_paths(k4, 1) == 12
    assert count_nb_paths(k4, 2) == 24
    assert len(list(enumerate_nb_paths(k4, 2))) == 24


@pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
def test_regular_count_formula(petersen, k):
    # N (q+1) q^(k-1) on a (q+1)-regular graph
    expected = 10 if k == 0 else 10 * 3 * 2 ** (k - 1)
    assert count_nb_paths(petersen, k) == expected


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_enumeration_matches_dfs(small_instance, k):
    g, _ = small_instance
    mine = [tuple(p) for p in nb_paths(g, k).vertices.tolist()]
    assert len(set(mine)) == len(mine)
    assert set(mine) == set(oracles.nb_paths_dfs(g, k))
    assert [tuple(p) for p in enumerate_nb_paths(g, k)] == mine
    blocks = np.concatenate(list(iter_path_blocks(g, k, block=7)))
    assert [tuple(p) for p in blocks.tolist()] == mine


def test_path_structure(small_instance):
    g, _ = small_instance
    lv = nb_paths(g, 3)
    e = path_edges(g, lv.vertices)
    assert (e[:, 1:] != g.oriented.reverse[e[:, :-1]]).all()
    assert all(is_nb_path(g, p) for p in lv.vertices[:50])
    assert not is_nb_path(g, [0, g.neighbors(0)[0], 0])
    lower = nb_paths(g, 2)
    assert (lower.vertices[lv.parent] == lv.vertices[:, :-1]).all()
    assert (lower.vertices[lv.tail] == lv.vertices[:, 1:]).all()


def test_path_budget(petersen):
    with pytest.raises(PathBudgetExceeded):
        nb_paths(petersen, 6, cap=100)


def _dense_b(g):
    o = g.oriented
    B = np.zeros((o.count, o.count))
    for e in range(o.count):
        for f in range(o.count):
            if o.origin[f] == o.terminus[e] and f != o.reverse[e]:
                B[e, f] = 1
    return B


def test_nb_operator_matches_dense(small_instance, rng):
    g, _ = small_instance
    B = _dense_b(g)
    h = rng.normal(size=g.oriented.count) + 1j * rng.normal(size=g.oriented.count)
    np.testing.assert_allclose(nb_apply(g, h), B @ h, atol=1e-13)
    np.testing.assert_allclose(nb_adjoint_apply(g, h), B.T @ h, atol=1e-13)


@given(st.integers(0, 10_000))
def test_nb_adjoint_pairing(seed):
    g, _ = mixed_instance(20, seed % 7 + 1)
    r = np.random.default_rng(seed)
    f = r.normal(size=g.oriented.count) + 1j * r.normal(size=g.oriented.count)
    h = r.normal(size=g.oriented.count) + 1j * r.normal(size=g.oriented.count)
    assert abs(np.vdot(h, nb_apply(g, f)) - np.vdot(nb_adjoint_apply(g, h), f)) < 1e-10


def test_injectivity_radius_examples(k4, petersen):
    assert injectivity_radius(k4, 0) == 0
    assert (injectivity_radii(petersen) == 1).all()
    tree = regular_tree(3, 5)
    assert injectivity_radius(tree, 0) == 5


def test_injectivity_radius_matches_networkx(medium_instance):
    g, _ = medium_instance
    G = nx.Graph(g.edge_list().tolist())
    radii = injectivity_radii(g)
    for x in range(0, g.n, 7):
        r = 0
        while True:
            ball = nx.ego_graph(G, x, radius=r + 1)
            if not nx.is_forest(ball):
                break
            r += 1
        assert radii[x] == r


def test_distances_match_networkx(medium_instance):
    g, _ = medium_instance
    G = nx.Graph(g.edge_list().tolist())
    d = distances_from(g, [0, 5])
    for i, x in enumerate([0, 5]):
        ref = nx.single_source_shortest_path_length(G, x)
        assert all(d[i, y] == ref[y] for y in range(g.n))


def test_text_round_trip(tmp_path, medium_instance):
    g, _ = medium_instance
    write_graph(g, tmp_path / "g.txt")
    h = read_graph(tmp_path / "g.txt")
    assert h.digest() == g.digest()
    assert (h.indices == g.indices).all()
    assert parse_graph(g.to_text()).digest() == g.digest()


def test_construction_deterministic():
    a = complete_bipartite(3, 3)
    b = complete_bipartite(3, 3)
    assert a.digest() == b.digest()
    assert [tuple(p) for p in enumerate_nb_paths(a, 2)] == [tuple(p) for p in enumerate_nb_paths(b, 2)]
