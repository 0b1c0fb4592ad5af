"""Road network, OD demands, path sets and the edge-path incidence map."""
from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

log = logging.getLogger(__name__)

_TIE_RTOL = 1e-12


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class Edge:
    tail: int
    head: int
    id: int


@dataclass(frozen=True)
class ODPair:
    origin: int
    destination: int
    demand: float


@dataclass
class TrafficNetwork:
    """Directed graph with OD demands and (optionally) enumerated path sets.

    Paths are stored as tuples of edge ids. Paths of OD pair ``w`` occupy the
    contiguous index range ``od_slices[w]`` of the global path index, so a
    path-flow vector ``mu`` splits per OD with ``mu[od_slices[w]]``.
    """

    nodes: list[int]
    edges: list[Edge]
    od_pairs: list[ODPair]
    paths: list[list[tuple[int, ...]]] = field(default_factory=list)

    def __post_init__(self):
        node_set = set(self.nodes)
        for k, e in enumerate(self.edges):
            if e.id != k:
                raise NetworkError(f"edge ids must be 0..|E|-1 in order; got {e.id} at position {k}")
            if e.tail == e.head:
                raise NetworkError(f"self-loop on node {e.tail} (edge {e.id})")
            if e.tail not in node_set or e.head not in node_set:
                raise NetworkError(f"edge {e.id} references unknown node")
        kept = []
        for od in self.od_pairs:
            if od.demand < 0:
                raise NetworkError(f"negative demand for OD ({od.origin}, {od.destination})")
            if od.demand == 0:
                log.warning("dropping zero-demand OD pair (%s, %s)", od.origin, od.destination)
                continue
            if od.origin == od.destination:
                raise NetworkError(f"OD pair with origin == destination ({od.origin})")
            kept.append(od)
        if self.paths and len(kept) != len(self.od_pairs):
            raise NetworkError("zero-demand OD pairs cannot carry path sets")
        self.od_pairs = kept
        self._out = {v: [] for v in self.nodes}
        for e in self.edges:
            self._out[e.tail].append(e)
        if self.paths:
            self._index_paths()

    def _index_paths(self):
        if len(self.paths) != len(self.od_pairs):
            raise NetworkError("need exactly one path list per OD pair")
        slices, start = [], 0
        rows, cols = [], []
        for w, (od, plist) in enumerate(zip(self.od_pairs, self.paths)):
            if not plist:
                raise NetworkError(f"OD pair ({od.origin}, {od.destination}) has an empty path set")
            for p in plist:
                self._check_path(od, p)
                rows.extend(p)
                cols.extend([start] * len(p))
                start += 1
            slices.append(slice(start - len(plist), start))
        self.od_slices = slices
        self.n_paths = start
        self.incidence = sparse.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(len(self.edges), start)
        )
        self.incidence_t = self.incidence.T.tocsr()
        self.od_starts = np.array([s.start for s in slices], dtype=np.intp)
        self.od_sizes = np.array([s.stop - s.start for s in slices], dtype=np.intp)
        self.path_od = np.repeat(np.arange(len(slices)), self.od_sizes)
        self.demands = np.array([od.demand for od in self.od_pairs], dtype=float)
        self.path_demand = self.demands[self.path_od]

    def _check_path(self, od, p):
        if not p:
            raise NetworkError("empty path")
        node = od.origin
        seen = {node}
        for eid in p:
            e = self.edges[eid]
            if e.tail != node:
                raise NetworkError(f"path {p} is not contiguous at edge {eid}")
            node = e.head
            if node in seen:
                raise NetworkError(f"path {p} is not simple")
            seen.add(node)
        if node != od.destination:
            raise NetworkError(f"path {p} does not end at {od.destination}")

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def total_demand(self) -> float:
        return float(sum(od.demand for od in self.od_pairs))

    @property
    def has_paths(self) -> bool:
        return bool(self.paths)

    def with_paths(self, paths) -> "TrafficNetwork":
        return TrafficNetwork(list(self.nodes), list(self.edges), list(self.od_pairs), [list(p) for p in paths])

    def check_flow(self, mu, rtol=1e-8):
        """Raise if ``mu`` is not a nonnegative path flow meeting every demand."""
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (self.n_paths,):
            raise NetworkError(f"path flow has shape {mu.shape}, expected ({self.n_paths},)")
        if np.any(mu < 0):
            raise NetworkError("path flow has negative entries")
        sums = np.add.reduceat(mu, self.od_starts)
        if not np.allclose(sums, self.demands, rtol=rtol, atol=0):
            raise NetworkError("path flow does not meet OD demands")
        return mu

    def od_sums(self, x):
        return np.add.reduceat(np.asarray(x, dtype=float), self.od_starts)


def edge_flow(network: TrafficNetwork, mu) -> np.ndarray:
    """q = Λμ."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (network.n_paths,):
        raise NetworkError(f"path flow has shape {mu.shape}, expected ({network.n_paths},)")
    return network.incidence @ mu


def path_cost(network: TrafficNetwork, edge_costs, path) -> float:
    return float(sum(edge_costs[e] for e in path))


# -- shortest paths -----------------------------------------------------------

def _dist_to(network, costs, target, banned_nodes=(), banned_edges=()):
    """Reverse Dijkstra: cost of the cheapest path from every node to ``target``."""
    into = {v: [] for v in network.nodes}
    for e in network.edges:
        if e.id in banned_edges or e.tail in banned_nodes or e.head in banned_nodes:
            continue
        into[e.head].append(e)
    dist = {target: 0.0}
    heap = [(0.0, target)]
    done = set()
    while heap:
        d, v = heapq.heappop(heap)
        if v in done:
            continue
        done.add(v)
        for e in into[v]:
            nd = d + costs[e.id]
            if nd < dist.get(e.tail, np.inf):
                dist[e.tail] = nd
                heapq.heappush(heap, (nd, e.tail))
    return dist


def _greedy_walk(network, costs, source, target, dist, key, banned_nodes=(), banned_edges=()):
    # follow tight edges, picking the smallest under ``key`` at every node
    path, node, seen = [], source, {source}
    while node != target:
        tight = []
        for e in network._out[node]:
            if e.id in banned_edges or e.head in banned_nodes or e.head in seen or e.head not in dist:
                continue
            lhs = costs[e.id] + dist[e.head]
            if abs(lhs - dist[node]) <= _TIE_RTOL * max(1.0, abs(dist[node])):
                tight.append(e)
        if not tight:
            raise NetworkError(f"tie-breaking walk stuck at node {node}")
        e = min(tight, key=key)
        path.append(e.id)
        seen.add(e.head)
        node = e.head
    return tuple(path)


def _node_key(e):
    return (e.head, e.id)


def _edge_key(e):
    return e.id


def shortest_path(network: TrafficNetwork, edge_costs, od) -> tuple[tuple[int, ...], float]:
    """Minimum-cost path for ``od`` = (origin, destination); ties go to the
    lexicographically smallest node sequence."""
    costs = np.asarray(edge_costs, dtype=float)
    if np.any(costs < 0):
        raise NetworkError("edge costs must be nonnegative")
    origin, dest = od[0], od[1]
    dist = _dist_to(network, costs, dest)
    if origin not in dist:
        raise NetworkError(f"destination {dest} unreachable from {origin}")
    path = _greedy_walk(network, costs, origin, dest, dist, _node_key)
    return path, path_cost(network, costs, path)


def _spur_path(network, costs, source, target, banned_nodes, banned_edges):
    dist = _dist_to(network, costs, target, banned_nodes, banned_edges)
    if source not in dist:
        return None
    return _greedy_walk(network, costs, source, target, dist, _edge_key, banned_nodes, banned_edges)


def k_shortest_paths(network: TrafficNetwork, costs, origin, dest, k: int) -> list[tuple[int, ...]]:
    """Yen's loopless K shortest paths. Output order is independent of ``k``."""
    costs = np.asarray(costs, dtype=float)
    first = _spur_path(network, costs, origin, dest, set(), set())
    if first is None:
        raise NetworkError(f"no path from {origin} to {dest}")
    found = [first]
    found_set = {first}
    candidates: list = []
    queued = set()
    while len(found) < k:
        last = found[-1]
        nodes_on_last = [origin] + [network.edges[e].head for e in last]
        for i in range(len(last)):
            spur_node = nodes_on_last[i]
            root = last[:i]
            banned_edges = {p[i] for p in found if p[:i] == root and len(p) > i}
            banned_nodes = set(nodes_on_last[:i])
            spur = _spur_path(network, costs, spur_node, dest, banned_nodes, banned_edges)
            if spur is None:
                continue
            cand = root + spur
            if cand in found_set or cand in queued:
                continue
            queued.add(cand)
            heapq.heappush(candidates, (path_cost(network, costs, cand), cand))
        if not candidates:
            break
        _, best = heapq.heappop(candidates)
        queued.discard(best)
        found.append(best)
        found_set.add(best)
    return found


def enumerate_paths(network: TrafficNetwork, free_flow, k: int = 8) -> list[list[tuple[int, ...]]]:
    """Up to ``k`` loopless shortest paths per OD pair under free-flow times."""
    if k < 1:
        raise ValueError("k must be >= 1")
    out = []
    for od in network.od_pairs:
        try:
            out.append(k_shortest_paths(network, free_flow, od.origin, od.destination, k))
        except NetworkError:
            raise NetworkError(f"OD pair ({od.origin}, {od.destination}) has no path") from None
    return out
