"""Informational flow-disturbance attacks and their Bregman magnitude."""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .mirror import MirrorMap, SupportError, bregman, md_step
from .network import TrafficNetwork

LN2 = np.log(2.0)


@dataclass(frozen=True)
class AttackSpec:
    """One-shot replacement of the revealed flow at iteration ``t0``.

    ``supp`` draws per OD a Dirichlet(c) point, mixes it with the uniform
    flow at ``1 - floor`` / ``floor`` and scales it to the demand.
    """

    kind: str
    t0: int
    c: float = 1.0
    floor: float = 0.1

    def __post_init__(self):
        if self.kind not in ("unif", "supp"):
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.t0 < 1:
            raise ValueError("attack time must be >= 1")
        if not self.c > 0:
            raise ValueError("Dirichlet concentration must be positive")
        if not 0 < self.floor <= 1:
            raise ValueError("uniform floor must lie in (0, 1]")

    @classmethod
    def parse(cls, text: str) -> "AttackSpec":
        """``unif@30`` or ``supp@30:c=0.5[,floor=0.1]``."""
        m = re.fullmatch(r"\s*(unif|supp)@(\d+)(?::(.*))?\s*", text)
        if m is None:
            raise ValueError(f"bad attack spec {text!r}; expected e.g. unif@30 or supp@30:c=0.5")
        kw = {}
        if m.group(3):
            for item in m.group(3).split(","):
                k, _, v = item.partition("=")
                k = k.strip()
                if k not in ("c", "floor") or not v:
                    raise ValueError(f"bad attack parameter {item!r}")
                kw[k] = float(v)
        return cls(m.group(1), int(m.group(2)), **kw)

    def __str__(self):
        if self.kind == "unif":
            return f"unif@{self.t0}"
        return f"supp@{self.t0}:c={self.c:g},floor={self.floor:g}"


@dataclass(frozen=True)
class AttackReport:
    t0: int
    kind: str
    a_dagger: float
    lower_bound: float
    upper_bound: float
    gamma: float
    lower_bound_pooled: float = np.nan

    def as_dict(self):
        keys = ("t0", "kind", "a_dagger", "lower_bound", "upper_bound", "gamma", "lower_bound_pooled")
        return {k: getattr(self, k) for k in keys}


def unif_attack(network: TrafficNetwork) -> np.ndarray:
    return network.path_demand / network.od_sizes[network.path_od]


def supp_attack(network: TrafficNetwork, mu_t0, spec: AttackSpec, rng: np.random.Generator) -> np.ndarray:
    """Full-support poisoned flow, so supp(μ^{t0}) ⊆ supp(μ†) always holds."""
    network.check_flow(mu_t0)
    g = rng.standard_gamma(spec.c, size=network.n_paths)
    sums = network.od_sums(g)
    # a Dirichlet draw can be all-zero in float for tiny c; fall back to uniform
    share = np.where(sums[network.path_od] > 0, g / np.where(sums > 0, sums, 1.0)[network.path_od],
                     1.0 / network.od_sizes[network.path_od])
    uni = 1.0 / network.od_sizes[network.path_od]
    return ((1 - spec.floor) * share + spec.floor * uni) * network.path_demand


def generate_attack(network, mu_t0, spec: AttackSpec, rng) -> np.ndarray:
    if spec.kind == "unif":
        return unif_attack(network)
    return supp_attack(network, mu_t0, spec, rng)


def _gamma(network, mu_t0, mu_dag):
    # min over OD of min{μ†_p : μ^{t0}_p > 0}
    vals = np.where(mu_t0 > 0, mu_dag, np.inf)
    return float(np.min(np.minimum.reduceat(vals, network.od_starts)))


def attack_magnitude(mirror: MirrorMap, network: TrafficNetwork, mu_t0, mu_dag, t0=1, kind="") -> AttackReport:
    """a† = D_Ψ(μ^{t0}, μ†) with the KL sandwich bounds (negentropy only).

    lower: Σ_w Σ_{p∈P_w} μ_p log(|P_w| μ_p / m_w), the magnitude of the
        per-OD uniform attack. It is a reference level rather than a true
        bound: μ† close to μ^{t0} goes below it.
    lower_bound_pooled: Σ_p μ_p log(|P| μ_p / M̄), the same expression with
        all ODs pooled; it exceeds the uniform attack's magnitude whenever
        demands differ, so it is reported but not used.
    upper: min(‖μ^{t0} − μ†‖₁², 4M̄²) / (γ ln 2)
    Raises SupportError when a† is infinite.
    """
    mu_t0 = np.asarray(mu_t0, dtype=float)
    mu_dag = np.asarray(mu_dag, dtype=float)
    a = bregman(mirror, mu_t0, mu_dag)
    if mirror.kind == "euclidean":
        return AttackReport(t0, kind, a, a, a, np.nan)
    M = network.total_demand
    pos = mu_t0 > 0
    x = mu_t0[pos]
    lower = float(np.sum(x * np.log(network.od_sizes[network.path_od][pos] * x / network.path_demand[pos])))
    pooled = float(np.sum(x * np.log(network.n_paths * x / M)))
    gamma = _gamma(network, mu_t0, mu_dag)
    if not gamma > 0:
        raise SupportError("poisoned flow vanishes on a used path")
    l1 = float(np.abs(mu_t0 - mu_dag).sum())
    upper = min(l1 ** 2, 4 * M ** 2) / (gamma * LN2)
    return AttackReport(t0, kind, a, lower, upper, gamma, pooled)


def poisoned_step(mirror: MirrorMap, network: TrafficNetwork, mu_dag, ell_tilde, eta) -> np.ndarray:
    """Mirror step anchored at μ† with the latency revealed at μ†."""
    return md_step(mirror, network, mu_dag, ell_tilde, eta)
