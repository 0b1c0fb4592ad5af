"""Mirror maps, Bregman divergences and the population mirror-descent step."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .network import TrafficNetwork


class SupportError(ValueError):
    """D_Ψ(μ1, μ2) is infinite: μ1 puts mass where μ2 has none."""


@dataclass(frozen=True)
class MirrorMap:
    kind: str
    sigma_psi: float

    def __post_init__(self):
        if self.kind not in ("negentropy", "euclidean"):
            raise ValueError(f"unknown mirror map {self.kind!r}")
        if not self.sigma_psi > 0:
            raise ValueError("sigma_psi must be positive")

    @classmethod
    def for_network(cls, kind: str, network: TrafficNetwork) -> "MirrorMap":
        # unnormalised negentropy restricted to {Σ_p μ_p = m_w} is (1/m_w)-strongly
        # convex in the 2-norm (Pinsker); the worst OD sets the global constant
        if kind == "negentropy":
            return cls(kind, 1.0 / float(np.max(network.demands)))
        return cls(kind, 1.0)


def bregman(mirror: MirrorMap, mu1, mu2) -> float:
    """D_Ψ(μ1, μ2). Raises :class:`SupportError` when it is infinite."""
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    if mirror.kind == "euclidean":
        d = mu1 - mu2
        return 0.5 * float(d @ d)
    if np.any((mu1 > 0) & (mu2 <= 0)):
        raise SupportError("support of mu1 is not contained in support of mu2")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(mu1 > 0, mu1 / np.where(mu2 > 0, mu2, 1.0), 1.0)
    val = float(np.sum(xlogy(mu1, ratio) - mu1 + mu2))
    return max(val, 0.0)


def project_simplex(y, mass: float = 1.0) -> np.ndarray:
    """Euclidean projection of ``y`` onto {x >= 0, Σx = mass} (sort + threshold)."""
    y = np.asarray(y, dtype=float)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - mass
    idx = np.arange(1, y.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(y - theta, 0.0)


def _negentropy_step(network, mu, ell, eta):
    with np.errstate(divide="ignore"):
        logw = np.log(mu) - eta * ell
    # per-OD max subtraction keeps exp() in range
    mx = np.maximum.reduceat(logw, network.od_starts)
    w = np.exp(logw - mx[network.path_od])
    z = np.add.reduceat(w, network.od_starts)
    return w / z[network.path_od] * network.path_demand


def md_step(mirror: MirrorMap, network: TrafficNetwork, mu, ell, eta: float) -> np.ndarray:
    """argmin_{μ∈Δ} η⟨μ, ℓ⟩ + D_Ψ(μ, μ_t), in closed form for both maps."""
    if not eta > 0:
        raise ValueError("step size must be positive")
    mu = np.asarray(mu, dtype=float)
    ell = np.asarray(ell, dtype=float)
    if mirror.kind == "negentropy":
        return _negentropy_step(network, mu, ell, eta)
    y = mu - eta * ell
    out = np.empty_like(y)
    for w, sl in enumerate(network.od_slices):
        out[sl] = project_simplex(y[sl], network.demands[w])
    return out


def cesaro_average(flows, weights) -> np.ndarray:
    """Σ η_k μ^k / Σ η_k."""
    flows = np.asarray(flows, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if flows.shape[0] == 0:
        raise ValueError("need at least one flow")
    if weights.shape != (flows.shape[0],):
        raise ValueError("one weight per flow required")
    if np.any(weights <= 0):
        raise ValueError("weights must be positive")
    return weights @ flows / weights.sum()


# -- step sizes -----------------------------------------------------------------

# two parametrisations of the power-law exponent in terms of beta in (-1/2, 0)
PRESETS = {
    "reflected": lambda beta: -beta - 1.0,
    "shifted": lambda beta: beta - 0.5,
}


def exponent_from_beta(beta: float, preset: str = "reflected") -> float:
    if not -0.5 < beta < 0:
        raise ValueError("beta must lie in (-1/2, 0)")
    return PRESETS[preset](beta)


@dataclass(frozen=True)
class StepSchedule:
    """η_t = min(cap, η₁ t^exponent); cap = σ_Ψ/(2A) when tied to growth constants."""

    eta1: float
    exponent: float
    cap: float = np.inf

    def __post_init__(self):
        if not self.eta1 > 0:
            raise ValueError("eta1 must be positive")
        if not self.cap > 0:
            raise ValueError("cap must be positive")

    @property
    def convergent(self) -> bool:
        """Σ η_t = ∞ and Σ η_t² < ∞."""
        return -1.0 < self.exponent < -0.5

    def rates(self, T: int, start: int = 1) -> np.ndarray:
        t = np.arange(start, start + T, dtype=float)
        return np.minimum(self.cap, self.eta1 * t ** self.exponent)


def step_rate(schedule: StepSchedule, t: int) -> float:
    if t < 1:
        raise ValueError("t must be >= 1")
    return float(min(schedule.cap, schedule.eta1 * float(t) ** schedule.exponent))
