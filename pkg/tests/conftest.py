"""Shared instances. Sioux Falls objects are session-scoped: solving and
certifying the growth constants takes a few seconds."""
from __future__ import annotations

import numpy as np
import pytest

from wanes.equilibrium import solve_mwe
from wanes.latency import LatencyModel, PerturbationSpec, estimate_growth_constants
from wanes.network import Edge, ODPair, TrafficNetwork, enumerate_paths
from wanes.tntp import sioux_falls

DEFAULT_PERT = PerturbationSpec("uniform", 0.5)


def build(nodes, arcs, ods, paths=None):
    edges = [Edge(a, b, k) for k, (a, b) in enumerate(arcs)]
    return TrafficNetwork(list(nodes), edges, [ODPair(*od) for od in ods], paths or [])


def bpr(n, t=1.0, c=1.0, a1=0.15, a2=4.0, pert=None):
    return LatencyModel(np.broadcast_to(np.asarray(t, float), (n,)).copy(), c, a1, a2,
                        pert or PerturbationSpec("none"))


def parallel(n_routes, demand):
    """Two nodes joined by ``n_routes`` parallel edges, one OD."""
    return build([1, 2], [(1, 2)] * n_routes, [(1, 2, demand)], [[(k,) for k in range(n_routes)]])


def random_instance(rng, max_ods=3, max_paths=6):
    """Independent parallel-route ODs (sizes in 1..max_paths) with random demands."""
    sizes = rng.integers(1, max_paths + 1, size=rng.integers(1, max_ods + 1))
    nodes, arcs, ods, paths = [], [], [], []
    for w, k in enumerate(sizes):
        o, d = 2 * w + 1, 2 * w + 2
        nodes += [o, d]
        paths.append([(len(arcs) + j,) for j in range(k)])
        arcs += [(o, d)] * int(k)
        ods.append((o, d, float(rng.uniform(0.5, 5.0))))
    return build(nodes, arcs, ods, paths)


@pytest.fixture(scope="session")
def sf():
    parsed = sioux_falls(DEFAULT_PERT)
    net = parsed.network.with_paths(enumerate_paths(parsed.network, parsed.latency.free_flow(), 8))
    return net, parsed.latency


@pytest.fixture(scope="session")
def sf_eq(sf):
    net, lat = sf
    return solve_mwe(net, lat, tol=1e-4)


@pytest.fixture(scope="session")
def sf_growth(sf):
    net, lat = sf
    return estimate_growth_constants(net, lat, 2000, rng=np.random.default_rng(12345))


@pytest.fixture(scope="session")
def sf_det(sf):
    """Sioux Falls with a singleton perturbation and its equilibrium."""
    net, lat = sf
    lat0 = lat.with_perturbation(PerturbationSpec("none"))
    return net, lat0, solve_mwe(net, lat0, tol=1e-4)


# -- acceptance reporting ---------------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records one acceptance verdict."""
    def record(n, ok, detail=""):
        ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
