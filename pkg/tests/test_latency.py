import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from wanes.equilibrium import solve_mwe
from wanes.harness import gradient_bound_check
from wanes.latency import (BprEdge, GrowthConstants, LatencyModel, PerturbationSpec, audit_growth_constants,
                           edge_latency, estimate_growth_constants, mbp, mean_path_latency, path_latency,
                           random_flows, sbp)
from wanes.network import edge_flow

from conftest import bpr, build, parallel, random_instance

UNIT = BprEdge(1.0, 1.0, 0.15, 4.0)


def shared_edge():
    # two paths 1->2->3 over parallel first legs, shared second leg; plus an OD on the shared leg
    return build([1, 2, 3], [(1, 2), (1, 2), (2, 3)], [(1, 3, 3.0), (2, 3, 1.0)], [[(0, 2), (1, 2)], [(2,)]])


# -- edge latency ---------------------------------------------------------------

def test_edge_latency_values():
    assert edge_latency(UNIT, 1.0) == pytest.approx(3.4, abs=1e-14)
    assert edge_latency(UNIT, 0.0) == pytest.approx(1.15, abs=1e-14)
    assert edge_latency(UNIT, 1.0, 0.5) == pytest.approx(3.9, abs=1e-14)


def test_edge_latency_rejects_negative():
    with pytest.raises(ValueError):
        edge_latency(UNIT, -1.0)
    with pytest.raises(ValueError):
        edge_latency(UNIT, 1.0, -0.1)


def test_bpr_parameter_validation():
    for bad in ((0.0, 1.0), (1.0, 0.0), (1.0, 1.0, -0.1), (1.0, 1.0, 0.15, 0.5)):
        with pytest.raises(ValueError):
            BprEdge(*bad)


def test_perturbation_samples_nonnegative():
    rng = np.random.default_rng(0)
    for spec in (PerturbationSpec("uniform", 0.3), PerturbationSpec("truncated-gaussian", 0.0, -1.0, 0.5),
                 PerturbationSpec("none")):
        assert np.all(spec.sample(rng, 50, size=200) >= 0)


# -- path latency -----------------------------------------------------------------

def test_path_latency_two_identical_edges():
    net = build([1, 2, 3], [(1, 2), (2, 3)], [(1, 3, 1.0)], [[(0, 1)]])
    assert path_latency(net, bpr(2), [1.0])[0] == pytest.approx(6.8, abs=1e-13)


def test_parallel_paths_independent():
    net = parallel(2, 3.0)
    lat = bpr(2, t=[1.0, 2.0])
    a = path_latency(net, lat, [1.0, 2.0])
    b = path_latency(net, lat, [1.0, 2.0] + np.array([0.0, 0.0]))
    assert a[0] == pytest.approx(edge_latency(lat.edge(0), 1.0))
    assert a[1] == pytest.approx(edge_latency(lat.edge(1), 2.0))
    assert np.array_equal(a, b)


def test_shared_edge_matches_edge_sum_oracle():
    net = shared_edge()
    lat = bpr(3, t=[1.0, 2.0, 0.5], c=[1.0, 2.0, 3.0])
    mu = np.array([1.0, 2.0, 1.0])
    omega = np.array([0.1, 0.2, 0.3])
    q = edge_flow(net, mu)
    el = [edge_latency(lat.edge(e), q[e], omega[e]) for e in range(3)]
    want = [el[0] + el[2], el[1] + el[2], el[2]]
    assert np.allclose(path_latency(net, lat, mu, omega), want, rtol=1e-14)


# -- potentials -------------------------------------------------------------------

def test_sbp_values():
    net = build([1, 2], [(1, 2)], [(1, 2, 1.0)], [[(0,)]])
    assert sbp(net, bpr(1), [1.0]) == pytest.approx(1.93, abs=1e-14)
    lat = bpr(1)
    assert lat.potentials(np.zeros(1)).sum() == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_sbp_matches_quadrature(seed):
    rng = np.random.default_rng(seed)
    net = random_instance(rng)
    lat = LatencyModel(rng.uniform(0.5, 3, net.n_edges), rng.uniform(0.5, 4, net.n_edges),
                       rng.uniform(0, 1, net.n_edges), rng.uniform(1, 5, net.n_edges))
    mu = random_flows(net, rng, 1)[0]
    omega = rng.uniform(0, 0.5, net.n_edges)
    q = edge_flow(net, mu)
    ref = sum(quad(lambda z, e=e: edge_latency(lat.edge(e), z, omega[e]), 0, q[e], epsabs=0, epsrel=1e-12)[0]
              for e in range(net.n_edges))
    assert sbp(net, lat, mu, omega) == pytest.approx(ref, rel=1e-8)


def test_mbp_singleton_equals_sbp():
    net = parallel(3, 2.0)
    lat = bpr(3, t=[1, 2, 3])
    mu = np.array([0.5, 1.0, 0.5])
    assert mbp(net, lat, mu) == sbp(net, lat, mu)


def test_mbp_uniform_mean_shift():
    net = parallel(3, 2.0)
    lat = bpr(3, t=[1, 2, 3], pert=PerturbationSpec("uniform", 0.2))
    mu = np.array([0.5, 1.0, 0.5])
    want = sbp(net, lat, mu) + 0.1 * edge_flow(net, mu).sum()
    assert mbp(net, lat, mu) == pytest.approx(want, rel=1e-14)


@pytest.mark.parametrize("pert", [PerturbationSpec("uniform", 0.5),
                                  PerturbationSpec("truncated-gaussian", 0.0, 0.2, 0.3)])
def test_mbp_monte_carlo_agrees(pert):
    rng = np.random.default_rng(7)
    net = shared_edge()
    lat = bpr(3, t=[1.0, 2.0, 0.5], pert=pert)
    mu = np.array([1.0, 2.0, 1.0])
    est = mbp(net, lat, mu, mode="monte-carlo", n=10_000, rng=rng)
    assert abs(est.value - mbp(net, lat, mu)) <= 3 * est.stderr


def test_mbp_mode_errors():
    net = parallel(2, 1.0)
    with pytest.raises(ValueError):
        mbp(net, bpr(2), [0.5, 0.5], mode="exact")
    with pytest.raises(ValueError):
        mbp(net, bpr(2), [0.5, 0.5], mode="monte-carlo", n=1)


# -- properties ---------------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_monotone_in_flow(seed):
    rng = np.random.default_rng(seed)
    n = 6
    lat = LatencyModel(rng.uniform(0.5, 3, n), rng.uniform(0.5, 4, n), rng.uniform(0, 1, n), rng.uniform(1, 5, n))
    q = rng.uniform(0, 5, n)
    q2 = q + rng.uniform(0, 2, n)
    w = rng.uniform(0, 1, n)
    assert np.all(lat.latencies(q2, w) >= lat.latencies(q, w))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_gradient_identity(seed):
    # ∂φ/∂μ along feasible directions matches Λᵀ l(Λμ, ω)
    rng = np.random.default_rng(seed)
    net = random_instance(rng)
    lat = LatencyModel(rng.uniform(0.5, 3, net.n_edges), rng.uniform(0.5, 4, net.n_edges),
                       rng.uniform(0, 1, net.n_edges), rng.uniform(1, 5, net.n_edges))
    mu = random_flows(net, rng, 1)[0] + 0.1
    omega = rng.uniform(0, 0.5, net.n_edges)
    g = path_latency(net, lat, mu, omega)
    h = 1e-6
    for p in range(net.n_paths):
        e = np.zeros(net.n_paths)
        e[p] = h
        fd = (sbp(net, lat, mu + e, omega) - sbp(net, lat, mu - e, omega)) / (2 * h)
        assert fd == pytest.approx(g[p], rel=1e-5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 1))
def test_convexity(seed, lam):
    rng = np.random.default_rng(seed)
    net = random_instance(rng)
    lat = bpr(net.n_edges, t=rng.uniform(0.5, 3, net.n_edges))
    m1, m2 = random_flows(net, rng, 2)
    omega = rng.uniform(0, 0.5, net.n_edges)
    lhs = sbp(net, lat, lam * m1 + (1 - lam) * m2, omega)
    rhs = lam * sbp(net, lat, m1, omega) + (1 - lam) * sbp(net, lat, m2, omega)
    assert lhs <= rhs + 1e-9


def test_mean_latency_is_gradient_of_mbp():
    net = shared_edge()
    lat = bpr(3, t=[1.0, 2.0, 0.5], pert=PerturbationSpec("uniform", 0.4))
    mu = np.array([1.0, 2.0, 1.0])
    g = mean_path_latency(net, lat, mu)
    h = 1e-6
    for p in range(3):
        e = np.zeros(3)
        e[p] = h
        assert (mbp(net, lat, mu + e) - mbp(net, lat, mu - e)) / (2 * h) == pytest.approx(g[p], rel=1e-6)


# -- growth constants ----------------------------------------------------------------

def test_growth_constant_latency_degenerate():
    # α₁ = 0, ω = 0: ℓ constant, so B must cover ‖ℓ‖² − Aφ on all samples
    net = parallel(2, 2.0)
    lat = bpr(2, t=[1.0, 2.0], a1=0.0)
    gc = estimate_growth_constants(net, lat, 500, rng=np.random.default_rng(0))
    assert gc.A > 0 and gc.B >= 0
    mus = random_flows(net, np.random.default_rng(1), 1000)
    phi = np.array([sbp(net, lat, m) for m in mus])
    assert np.all(5.0 <= gc.A * phi + gc.B + 1e-9)
    assert audit_growth_constants(net, lat, gc)[0] == 0


def test_growth_single_edge_holdout():
    net = build([1, 2], [(1, 2)], [(1, 2, 2.0)], [[(0,)]])
    lat = bpr(1, pert=PerturbationSpec("uniform", 0.5))
    gc = estimate_growth_constants(net, lat, 2000, rng=np.random.default_rng(0))
    bad, worst = audit_growth_constants(net, lat, gc, samples=100_000, rng=np.random.default_rng(99))
    assert bad == 0 and worst <= 1


def test_growth_sioux_falls_holdout(sf, sf_growth):
    net, lat = sf
    bad, worst = audit_growth_constants(net, lat, sf_growth, samples=10_000, rng=np.random.default_rng(4242))
    assert bad == 0 and worst <= 1
    assert sf_growth.A > 0 and sf_growth.B >= 0


def test_gradient_bound_on_sioux_falls(sf, sf_growth, sf_eq):
    net, lat = sf
    bad, worst = gradient_bound_check(net, lat, sf_growth, sf_eq, n=500, rng=np.random.default_rng(3))
    assert bad == 0 and worst <= 1


def test_growth_bound_helper():
    gc = GrowthConstants(2.0, 3.0)
    assert np.allclose(gc.bound([0.0, 1.0]), [3.0, 5.0])


def test_equilibrium_symmetric_identical_edges():
    # two identical parallel edges, demand 2: split (1,1), Φ* = 2∫₀¹ l
    net = parallel(2, 2.0)
    eq = solve_mwe(net, bpr(2), tol=1e-10)
    assert np.allclose(eq.mu_star, [1.0, 1.0], atol=1e-8)
    assert eq.phi_star == pytest.approx(2 * 1.93, rel=1e-12)
