"""Mean Wardrop equilibrium by Frank-Wolfe on the enumerated path polytope."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .latency import LatencyModel, mbp, mean_path_latency
from .network import TrafficNetwork, edge_flow

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EquilibriumResult:
    """Reference MWE flow. ``mu_star`` is one member of the (possibly
    non-singleton) equilibrium set, so distances to it upper-bound d(μ, 𝝁*)."""

    mu_star: np.ndarray
    phi_star: float
    relative_gap: float
    iterations: int
    converged: bool
    lower_bound: float


def all_or_nothing(network: TrafficNetwork, path_costs) -> np.ndarray:
    """Route each OD's demand onto its cheapest path (lowest index on ties)."""
    c = np.asarray(path_costs, dtype=float)
    mins = np.minimum.reduceat(c, network.od_starts)
    idx = np.where(c == mins[network.path_od], np.arange(c.size), c.size)
    first = np.minimum.reduceat(idx, network.od_starts)
    s = np.zeros_like(c)
    s[first] = network.demands
    return s


def _line_search(latency, q, dq, omega_bar, tol=1e-12):
    # f(γ) = Σ_e ∫_0^{q+γ dq} l_e is convex; bisect on f'(γ) = <l(q+γ dq), dq>
    def slope(g):
        return float(latency.latencies(np.maximum(q + g * dq, 0.0), omega_bar) @ dq)

    if slope(1.0) <= 0:
        return 1.0
    if slope(0.0) >= 0:
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if slope(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _gp_direction(network, latency, mu, ell, omega_bar):
    # path-equilibration move: every used non-shortest path sheds
    # min(μ_p, (ℓ_p − ℓ_min)/s_p) onto its OD's shortest path, where s_p is the
    # latency slope summed over edges on exactly one of the two paths
    s = all_or_nothing(network, ell)
    sp = np.flatnonzero(s)[network.path_od]
    q = edge_flow(network, mu)
    t, C, a1, a2 = latency.t, latency.capacity, latency.alpha1, latency.alpha2
    dl = t * a1 * a2 / C * (1 + q / C) ** (a2 - 1)
    inc = network.incidence
    own = inc.T @ dl
    shared = inc.multiply(inc[:, sp]).T @ dl
    slope = np.maximum(own + own[sp] - 2 * shared, 1e-12)
    excess = ell - ell[sp]
    shift = np.where(s > 0, 0.0, np.minimum(mu, np.maximum(excess, 0) / slope))
    d = -shift
    np.add.at(d, sp, shift)
    return d


def solve_mwe(network: TrafficNetwork, latency: LatencyModel, tol=1e-4, max_iter=20_000, mu0=None, history=None,
              polish_tol=1e-9, polish_iter=2000):
    """Frank-Wolfe with exact line search, then a path-equilibration polish.

    The FW phase stops once ⟨μ − s, E[ℓ(μ)]⟩ / Φ(μ) <= tol, with s the
    all-or-nothing flow. FW leaves residual flow on dominated paths that it
    removes only at a sublinear rate, so a gradient-projection phase (same
    gap, same line search) then runs until the gap is <= ``polish_tol``;
    pass ``polish_iter=0`` for plain FW.
    If ``history`` is a list, (Φ(μ^k), lower bound, relative gap) is appended
    at every iteration of both phases.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    omega_bar = latency.expected_omega()
    if mu0 is None:
        mu = all_or_nothing(network, mean_path_latency(network, latency, np.zeros(network.n_paths)))
    else:
        mu = network.check_flow(mu0).copy()
    lower = -np.inf
    best = None
    rel = np.inf
    k = 0
    for k in range(1, max_iter + 1):
        ell = mean_path_latency(network, latency, mu)
        s = all_or_nothing(network, ell)
        gap = float((mu - s) @ ell)
        phi = mbp(network, latency, mu)
        rel = gap / phi
        lower = max(lower, phi - gap)
        if best is None or phi < best[1]:
            best = (mu.copy(), phi, rel)
        if history is not None:
            history.append((phi, lower, rel))
        if rel <= tol:
            break
        d = s - mu
        q = edge_flow(network, mu)
        gamma = _line_search(latency, q, network.incidence @ d, omega_bar)
        mu = mu + gamma * d
    else:
        log.warning("Frank-Wolfe hit max_iter=%d with relative gap %.3g", max_iter, rel)
        mu_b, phi_b, rel_b = best
        return EquilibriumResult(mu_b, phi_b, rel_b, max_iter, False, lower)
    iters = k
    for _ in range(polish_iter):
        if rel <= polish_tol:
            break
        d = _gp_direction(network, latency, mu, ell, omega_bar)
        q = edge_flow(network, mu)
        gamma = _line_search(latency, q, network.incidence @ d, omega_bar)
        # the shifts never exceed μ_p, so γ <= 1 keeps μ feasible; clip roundoff
        mu = np.maximum(mu + gamma * d, 0.0)
        mu *= (network.demands / network.od_sums(mu))[network.path_od]
        iters += 1
        ell = mean_path_latency(network, latency, mu)
        s = all_or_nothing(network, ell)
        gap = float((mu - s) @ ell)
        phi = mbp(network, latency, mu)
        rel = gap / phi
        lower = max(lower, phi - gap)
        if history is not None:
            history.append((phi, lower, rel))
    return EquilibriumResult(mu, phi, rel, iters, True, lower)


def mwe_gap(network: TrafficNetwork, latency: LatencyModel, mu) -> float:
    """max_{μ'∈Δ} ⟨μ − μ', E[ℓ(μ)]⟩ / Φ(μ); zero iff μ is an MWE on the path set."""
    ell = mean_path_latency(network, latency, mu)
    s = all_or_nothing(network, ell)
    return float((np.asarray(mu) - s) @ ell) / mbp(network, latency, mu)


def wardrop_violations(network, latency, mu, rtol=1e-3, flow_rtol=1e-6):
    """Paths carrying more than ``flow_rtol * m_w`` whose mean latency exceeds
    their OD's minimum by more than ``rtol`` (relative). Returns path indices."""
    mu = np.asarray(mu, dtype=float)
    ell = mean_path_latency(network, latency, mu)
    mins = np.minimum.reduceat(ell, network.od_starts)[network.path_od]
    used = mu > flow_rtol * network.path_demand
    bad = used & (ell - mins > rtol * mins)
    return np.flatnonzero(bad)


def distance_to_reference(mu, result: EquilibriumResult) -> float:
    """‖μ − μ*‖² against the stored reference (an upper bound on d(μ, 𝝁*))."""
    d = np.asarray(mu, dtype=float) - result.mu_star
    return float(d @ d)
