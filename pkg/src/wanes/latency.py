"""Perturbed BPR latencies and the stochastic / mean Beckmann potentials.

The latency of edge e is ``t_e (1 + a1 (1 + q/C_e)^a2) + omega_e``. Note the
``(1 + q/C)`` base; the textbook BPR curve uses ``q/C``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats

from .network import TrafficNetwork, edge_flow

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BprEdge:
    t: float
    capacity: float
    alpha1: float = 0.15
    alpha2: float = 4.0

    def __post_init__(self):
        if not (self.t > 0 and self.capacity > 0 and self.alpha1 >= 0 and self.alpha2 >= 1):
            raise ValueError(f"invalid BPR parameters {self}")


@dataclass(frozen=True)
class PerturbationSpec:
    """Distribution of the additive, nonnegative edge perturbation omega.

    kind: ``none``, ``uniform`` (iid U[0, w_max] per edge) or
    ``truncated-gaussian`` (iid N(mean, sigma^2) conditioned on omega >= 0).
    """

    kind: str = "uniform"
    w_max: float = 0.5
    mean: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "uniform", "truncated-gaussian"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "uniform" and self.w_max < 0:
            raise ValueError("w_max must be >= 0")
        if self.kind == "truncated-gaussian" and self.sigma <= 0:
            raise ValueError("sigma must be > 0")

    @property
    def is_singleton(self) -> bool:
        return self.kind == "none" or (self.kind == "uniform" and self.w_max == 0)

    @property
    def is_bounded(self) -> bool:
        return self.kind != "truncated-gaussian"

    def _truncnorm(self):
        a = (0.0 - self.mean) / self.sigma
        return stats.truncnorm(a, np.inf, loc=self.mean, scale=self.sigma)

    def expected(self) -> float:
        if self.is_singleton:
            return 0.0
        if self.kind == "uniform":
            return self.w_max / 2
        return float(self._truncnorm().mean())

    def upper(self) -> float:
        """Essential supremum of one coordinate (inf if unbounded)."""
        if self.is_singleton:
            return 0.0
        if self.kind == "uniform":
            return self.w_max
        return np.inf

    def half_range(self) -> float:
        """Bound on |omega_e - E omega_e|."""
        if self.is_singleton:
            return 0.0
        if self.kind == "uniform":
            return self.w_max / 2
        return np.inf

    def sample(self, rng: np.random.Generator, n_edges: int, size: int | None = None) -> np.ndarray:
        shape = (n_edges,) if size is None else (size, n_edges)
        if self.is_singleton:
            return np.zeros(shape)
        if self.kind == "uniform":
            return rng.uniform(0.0, self.w_max, size=shape)
        return self._truncnorm().rvs(size=shape, random_state=rng)


@dataclass
class LatencyModel:
    """Per-edge BPR parameters (as arrays, indexed by edge id) plus omega's law."""

    t: np.ndarray
    capacity: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    perturbation: PerturbationSpec = field(default_factory=lambda: PerturbationSpec("none"))

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        n = self.t.shape[0]
        self.capacity = np.broadcast_to(np.asarray(self.capacity, dtype=float), (n,)).copy()
        self.alpha1 = np.broadcast_to(np.asarray(self.alpha1, dtype=float), (n,)).copy()
        self.alpha2 = np.broadcast_to(np.asarray(self.alpha2, dtype=float), (n,)).copy()
        if np.any(self.t <= 0) or np.any(self.capacity <= 0):
            raise ValueError("free-flow times and capacities must be positive")
        if np.any(self.alpha1 < 0) or np.any(self.alpha2 < 1):
            raise ValueError("need alpha1 >= 0 and alpha2 >= 1")

    @classmethod
    def from_edges(cls, edges, perturbation=None):
        edges = list(edges)
        return cls(
            np.array([e.t for e in edges]),
            np.array([e.capacity for e in edges]),
            np.array([e.alpha1 for e in edges]),
            np.array([e.alpha2 for e in edges]),
            perturbation or PerturbationSpec("none"),
        )

    def edge(self, e: int) -> BprEdge:
        return BprEdge(self.t[e], self.capacity[e], self.alpha1[e], self.alpha2[e])

    @property
    def n_edges(self) -> int:
        return self.t.shape[0]

    def with_perturbation(self, perturbation: PerturbationSpec) -> "LatencyModel":
        return LatencyModel(self.t, self.capacity, self.alpha1, self.alpha2, perturbation)

    def free_flow(self) -> np.ndarray:
        """Latency at zero flow and zero perturbation: t (1 + a1)."""
        return self.t * (1 + self.alpha1)

    def expected_omega(self) -> np.ndarray:
        return np.full(self.n_edges, self.perturbation.expected())

    # vectorised kernels; q may be (E,) or (N, E)
    def latencies(self, q, omega=0.0) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if np.any(q < 0):
            raise ValueError("edge flows must be nonnegative")
        return self.t * (1 + self.alpha1 * (1 + q / self.capacity) ** self.alpha2) + omega

    def potentials(self, q, omega=0.0) -> np.ndarray:
        """Per-edge integral of the latency from 0 to q (closed form)."""
        q = np.asarray(q, dtype=float)
        a2p = self.alpha2 + 1
        bpr = self.t * (q + self.alpha1 * self.capacity * ((1 + q / self.capacity) ** a2p - 1) / a2p)
        return bpr + omega * q


def edge_latency(edge: BprEdge, q_e: float, omega_e: float = 0.0) -> float:
    if q_e < 0:
        raise ValueError("edge flow must be nonnegative")
    if omega_e < 0:
        raise ValueError("perturbation must be nonnegative")
    return edge.t * (1 + edge.alpha1 * (1 + q_e / edge.capacity) ** edge.alpha2) + omega_e


def path_latency(network: TrafficNetwork, latency: LatencyModel, mu, omega=0.0) -> np.ndarray:
    """ℓ(μ, ω) = Λᵀ l(Λμ, ω)."""
    q = edge_flow(network, mu)
    return network.incidence_t @ latency.latencies(q, omega)


def mean_path_latency(network: TrafficNetwork, latency: LatencyModel, mu) -> np.ndarray:
    """E[ℓ(μ, ω)] = ∇Φ(μ); exact because omega enters additively."""
    return path_latency(network, latency, mu, latency.expected_omega())


def sbp(network: TrafficNetwork, latency: LatencyModel, mu, omega=0.0) -> float:
    q = edge_flow(network, mu)
    return float(latency.potentials(q, omega).sum())


class MBPEstimate(NamedTuple):
    value: float
    stderr: float


def mbp(network, latency, mu, mode="analytic", n=None, rng=None):
    """Mean Beckmann potential Φ(μ).

    ``mode="analytic"`` returns a float: φ(μ, 0) + Σ_e E[ω_e] q_e.
    ``mode="monte-carlo"`` averages φ over ``n`` fresh draws and returns an
    :class:`MBPEstimate` with the standard error.
    """
    q = edge_flow(network, mu)
    if mode == "analytic":
        return float(latency.potentials(q, latency.expected_omega()).sum())
    if mode != "monte-carlo":
        raise ValueError(f"unknown mode {mode!r}")
    if n is None or n < 2:
        raise ValueError("monte-carlo mode needs n >= 2")
    rng = rng if rng is not None else np.random.default_rng()
    omegas = latency.perturbation.sample(rng, latency.n_edges, size=n)
    base = latency.potentials(q).sum()
    vals = base + omegas @ q
    return MBPEstimate(float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n)))


# -- growth constants ---------------------------------------------------------

@dataclass(frozen=True)
class GrowthConstants:
    """Constants with ‖ℓ(μ,ω)‖² ≤ A φ(μ,ω) + B on every audited sample."""

    A: float
    B: float

    def bound(self, phi):
        return self.A * np.asarray(phi) + self.B


def random_flows(network: TrafficNetwork, rng, n: int, concentration=1.0) -> np.ndarray:
    """``n`` path flows, per-OD symmetric Dirichlet scaled by the demand."""
    g = rng.gamma(concentration, size=(n, network.n_paths))
    g = np.maximum(g, np.finfo(float).tiny)
    sums = np.add.reduceat(g, network.od_starts, axis=1)
    return g / sums[:, network.path_od] * network.path_demand


def random_vertices(network: TrafficNetwork, rng, n: int) -> np.ndarray:
    """``n`` all-or-nothing flows, one uniformly chosen path per OD."""
    u = rng.random((n, network.n_paths))
    # argmax of iid keys within each OD block
    mx = np.maximum.reduceat(u, network.od_starts, axis=1)[:, network.path_od]
    hit = u == mx
    return hit * network.path_demand


def _sample_pairs(network, latency, n, rng):
    # extreme ratios ‖ℓ‖²/φ sit near the vertices of Δ, so the mixture
    # leans on vertices and very sparse Dirichlet draws
    conc = (0.0, 0.01, 0.05, 0.3, 1.0, 5.0)
    per = np.full(len(conc), n // len(conc))
    per[: n % len(conc)] += 1
    mus = np.vstack([
        random_vertices(network, rng, int(k)) if c == 0 else random_flows(network, rng, int(k), c)
        for k, c in zip(per, conc)
    ])
    omegas = latency.perturbation.sample(rng, latency.n_edges, size=n)
    q = (network.incidence @ mus.T).T
    phi = latency.potentials(q, omegas).sum(axis=1)
    lat_e = latency.latencies(q, omegas)
    return phi, _sq_norm(_gram(network), lat_e)


def _gram(network):
    # ‖Λᵀ l‖² = lᵀ (Λ Λᵀ) l, an |E| x |E| form instead of a |P|-vector
    return (network.incidence @ network.incidence_t).toarray()


def _sq_norm(G, lat_e):
    lat_e = np.atleast_2d(lat_e)
    return ((lat_e @ G) * lat_e).sum(axis=1)


def _excess(G, latency, q, omega, A):
    # ‖ℓ‖² − Aφ for a batch of edge-flow rows sharing one omega
    return _sq_norm(G, latency.latencies(q, omega)) - A * latency.potentials(q, omega).sum(axis=1)


def _vertex_ascent(network, latency, choice, omega, A, max_sweeps=20):
    """Coordinate ascent of ‖ℓ‖² − Aφ over vertices of Δ and corners of Ω.

    ``choice`` holds one path index per OD. Both terms are convex in omega,
    so the excess is maximised at a corner of the box [0, w_max]^E.
    """
    G = _gram(network)
    cols = network.incidence.toarray()
    q = cols[:, choice] @ network.demands
    w_max = latency.perturbation.upper()
    # start from the nearest corner so that flips w_max - omega stay on corners
    omega = np.where(np.asarray(omega) >= w_max / 2, w_max, 0.0)
    best = _excess(G, latency, q[None], omega, A)[0]
    for _ in range(max_sweeps):
        improved = False
        for w, sl in enumerate(network.od_slices):
            if sl.stop - sl.start == 1:
                continue
            base = q - network.demands[w] * cols[:, choice[w]]
            cand = base[None] + network.demands[w] * cols[:, sl].T
            vals = _excess(G, latency, cand, omega, A)
            k = int(np.argmax(vals))
            if vals[k] > best * (1 + 1e-12) + 1e-12:
                best, q, choice[w], improved = float(vals[k]), cand[k], sl.start + k, True
        if w_max > 0:
            flips = np.tile(omega, (omega.size, 1))
            np.fill_diagonal(flips, w_max - omega)
            lat_f = latency.latencies(q[None], flips)
            vals = _sq_norm(G, lat_f) - A * latency.potentials(q[None], flips).sum(axis=1)
            k = int(np.argmax(vals))
            if vals[k] > best * (1 + 1e-12) + 1e-12:
                best, omega, improved = float(vals[k]), flips[k], True
        if not improved:
            break
    return best


def estimate_growth_constants(network, latency, samples=2000, rng=None, grid=400, ascent_starts=4) -> GrowthConstants:
    """Sample-based (A, B) minimising A·mean(φ) + B(A) over a log grid of A,
    with B(A) = max_i (‖ℓ_i‖² − A φ_i)₊ so every sample satisfies the bound.

    For bounded perturbations B is then raised to the best value found by
    vertex/corner ascent from ``ascent_starts`` random vertices, since random
    sampling alone misses the worst all-or-nothing flows on larger networks.
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    rng = rng if rng is not None else np.random.default_rng(0)
    phi, sq = _sample_pairs(network, latency, samples, rng)
    if np.all(phi == 0):
        log.warning("all sampled potentials are zero; returning A=1")
        return GrowthConstants(1.0, float(sq.max()))
    pos = phi > 0
    ratio = sq[pos] / phi[pos]
    lo, hi = np.log10(ratio.min()) - 8, np.log10(ratio.max()) + 2
    A_grid = np.logspace(lo, hi, grid)
    B_grid = np.maximum(sq[None, :] - A_grid[:, None] * phi[None, :], 0).max(axis=1)
    obj = A_grid * phi.mean() + B_grid
    k = int(np.argmin(obj))
    A, B = float(A_grid[k]), float(B_grid[k])
    if latency.perturbation.is_bounded and ascent_starts > 0:
        for _ in range(ascent_starts):
            choice = network.od_starts + (rng.random(len(network.od_pairs)) * network.od_sizes).astype(np.intp)
            omega = latency.perturbation.sample(rng, latency.n_edges)
            B = max(B, _vertex_ascent(network, latency, choice, omega, A))
    return GrowthConstants(A, B)


def audit_growth_constants(network, latency, gc: GrowthConstants, samples=10_000, rng=None):
    """Fresh-sample audit; returns the number of violations and the worst slack ratio."""
    rng = rng if rng is not None else np.random.default_rng(1)
    phi, sq = _sample_pairs(network, latency, samples, rng)
    bound = gc.bound(phi)
    return int(np.sum(sq > bound)), float(np.max(sq / bound))
