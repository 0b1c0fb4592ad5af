import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.sparse.csgraph import bellman_ford

from wanes.latency import random_flows
from wanes.network import (NetworkError, edge_flow, enumerate_paths, k_shortest_paths, path_cost,
                           shortest_path)

from conftest import build, random_instance


def all_simple_paths(net, o, d):
    out = []

    def walk(node, seen, path):
        if node == d:
            out.append(tuple(path))
            return
        for e in net.edges:
            if e.tail == node and e.head not in seen:
                walk(e.head, seen | {e.head}, path + [e.id])

    walk(o, {o}, [])
    return out


def diamond():
    # A=1, B=2, C=3, D=4
    return build([1, 2, 3, 4], [(1, 2), (2, 4), (1, 3), (3, 4)], [(1, 4, 1.0)])


def random_graph(rng, n=7, p=0.35):
    arcs = [(a, b) for a in range(1, n + 1) for b in range(1, n + 1) if a != b and rng.random() < p]
    return build(range(1, n + 1), arcs, [])


# -- construction -------------------------------------------------------------

def test_single_edge_one_path():
    net = build([1, 2], [(1, 2)], [(1, 2, 1.0)])
    assert enumerate_paths(net, [1.0], 4) == [[(0,)]]


def test_diamond_both_paths():
    net = diamond()
    paths = enumerate_paths(net, [1.0, 1.0, 1.0, 1.0], 2)[0]
    assert sorted(paths) == [(0, 1), (2, 3)]


def test_rejects_self_loop_and_bad_paths():
    with pytest.raises(NetworkError):
        build([1, 2], [(1, 1)], [])
    with pytest.raises(NetworkError):
        build([1, 2, 3], [(1, 2), (2, 3)], [(1, 3, 1.0)], [[(1, 0)]])
    with pytest.raises(NetworkError):
        build([1, 2], [(1, 2)], [(1, 2, -1.0)])


def test_zero_demand_dropped(caplog):
    net = build([1, 2], [(1, 2)], [(1, 2, 0.0), (2, 1, 0.0)])
    assert net.od_pairs == []
    assert "zero-demand" in caplog.text


def test_incidence_and_disjoint_ranges():
    net = diamond().with_paths([[(0, 1), (2, 3)]])
    L = net.incidence.toarray()
    assert L.tolist() == [[1, 0], [1, 0], [0, 1], [0, 1]]
    assert net.od_slices == [slice(0, 2)]


# -- edge_flow ----------------------------------------------------------------

def test_edge_flow_single_path():
    net = build([1, 2, 3], [(1, 2), (2, 3)], [(1, 3, 3.0)], [[(0, 1)]])
    assert edge_flow(net, [3.0]).tolist() == [3.0, 3.0]


def test_edge_flow_disjoint_paths():
    net = build([1, 2, 3, 4], [(1, 2), (2, 4), (1, 3), (3, 4)], [(1, 4, 7.0)], [[(0, 1), (2, 3)]])
    assert edge_flow(net, [2.0, 5.0]).tolist() == [2.0, 2.0, 5.0, 5.0]


def test_edge_flow_shared_edge():
    net = build([1, 2, 3], [(1, 2), (1, 2), (2, 3)], [(1, 3, 3.0)], [[(0, 2), (1, 2)]])
    assert edge_flow(net, [1.0, 2.0])[2] == 3.0


def test_check_flow():
    net = diamond().with_paths([[(0, 1), (2, 3)]])
    net.check_flow([0.25, 0.75])
    for bad in ([0.5, 0.6], [-0.1, 1.1], [1.0]):
        with pytest.raises(NetworkError):
            net.check_flow(bad)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_edge_mass_equals_path_lengths(seed):
    rng = np.random.default_rng(seed)
    net = random_instance(rng)
    mu = random_flows(net, rng, 1)[0]
    lengths = np.array([len(p) for pl in net.paths for p in pl])
    assert np.isclose(edge_flow(net, mu).sum(), mu @ lengths)


# -- shortest paths -------------------------------------------------------------

def test_diamond_cheaper_branch():
    net = diamond()
    path, cost = shortest_path(net, [2, 2, 1, 1], (1, 4))
    assert path == (2, 3) and cost == 2.0


def test_tie_goes_to_lexicographic_first():
    net = diamond()
    assert shortest_path(net, [1, 1, 1, 1], (1, 4))[0] == (0, 1)
    par = build([1, 2], [(1, 2), (1, 2)], [])
    assert shortest_path(par, [1, 1], (1, 2))[0] == (0,)


def test_unreachable():
    net = build([1, 2, 3], [(1, 2)], [])
    with pytest.raises(NetworkError):
        shortest_path(net, [1.0], (1, 3))


def test_sioux_falls_matches_bellman_ford(sf):
    net, lat = sf
    cost = lat.free_flow()
    n = len(net.nodes)
    W = np.zeros((n, n))
    for e in net.edges:
        W[e.tail - 1, e.head - 1] = cost[e.id]
    D = bellman_ford(W, directed=True)
    for o in (1, 7, 13, 24):
        for d in range(1, n + 1):
            if d != o:
                _, c = shortest_path(net, cost, (o, d))
                assert np.isclose(c, D[o - 1, d - 1], rtol=1e-12)


def test_sioux_falls_k8_distinct_simple(sf):
    net, lat = sf
    cost = lat.free_flow()
    for w in (0, 100, 300, 527):
        paths = net.paths[w]
        assert len(paths) == 8 and len(set(paths)) == 8
        costs = [path_cost(net, cost, p) for p in paths]
        assert costs == sorted(costs)


def test_sioux_falls_yen_vs_exhaustive(sf):
    # exhaustive search over simple paths truncated at the 8th cost level
    net, lat = sf
    cost = lat.free_flow()
    od = net.od_pairs[5]
    every = all_simple_paths(net, od.origin, od.destination)
    ref = sorted(path_cost(net, cost, p) for p in every)[:8]
    got = [path_cost(net, cost, p) for p in net.paths[5]]
    assert np.allclose(got, ref)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 12))
def test_yen_against_brute_force(seed, k):
    rng = np.random.default_rng(seed)
    net = random_graph(rng)
    cost = rng.integers(1, 5, size=net.n_edges).astype(float)
    every = all_simple_paths(net, 1, 7)
    if not every:
        with pytest.raises(NetworkError):
            k_shortest_paths(net, cost, 1, 7, k)
        return
    got = k_shortest_paths(net, cost, 1, 7, k)
    # cost sequence equals that of the k cheapest simple paths
    ref = sorted(every, key=lambda p: (path_cost(net, cost, p), p))[:k]
    assert [path_cost(net, cost, p) for p in got] == [path_cost(net, cost, p) for p in ref]
    assert len(set(got)) == len(got)
    assert all(p in every for p in got)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 8))
def test_prefix_stable(seed, k):
    rng = np.random.default_rng(seed)
    net = random_graph(rng, p=0.45)
    cost = rng.integers(1, 4, size=net.n_edges).astype(float)
    if not all_simple_paths(net, 1, 7):
        return
    a = k_shortest_paths(net, cost, 1, 7, k)
    b = k_shortest_paths(net, cost, 1, 7, k + 1)
    assert b[:len(a)] == a


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_shortest_is_min_over_enumerated(seed):
    rng = np.random.default_rng(seed)
    net = random_graph(rng, n=5, p=0.4)
    every = all_simple_paths(net, 1, 5)
    if not every or len(every) > 10:
        return
    cost = rng.uniform(0.1, 3.0, size=net.n_edges)
    _, c = shortest_path(net, cost, (1, 5))
    allk = k_shortest_paths(net, cost, 1, 5, len(every))
    assert np.isclose(c, min(path_cost(net, cost, p) for p in allk))
    assert sorted(allk) == sorted(every)


def test_enumeration_deterministic(sf):
    net, lat = sf
    again = enumerate_paths(net, lat.free_flow(), 8)
    assert again == net.paths
