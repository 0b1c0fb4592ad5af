"""Seeded Monte Carlo runs of mirror-descent routing with attack injection,
the greedy baseline, resilience metrics and theory-side constants."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import stats
from scipy.special import zeta

from .attacks import AttackReport, AttackSpec, attack_magnitude, generate_attack
from .equilibrium import EquilibriumResult, all_or_nothing
from .latency import GrowthConstants, LatencyModel, PerturbationSpec, mean_path_latency, random_flows
from .mirror import MirrorMap, StepSchedule, bregman, exponent_from_beta, md_step
from .network import TrafficNetwork

log = logging.getLogger(__name__)

# per-replication RNG stream ids
OMEGA_STREAM, ATTACK_STREAM, AUDIT_STREAM = 0, 1, 2


def rng_stream(seed: int, replication: int, stream: int) -> np.random.Generator:
    """Counter-style split: the stream depends only on (seed, replication, stream)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replication, stream))))


def global_rng(seed: int, purpose: int) -> np.random.Generator:
    """Run-level stream (growth constants, audits), disjoint from every replication."""
    return rng_stream(seed, 2 ** 32 - 1, purpose)


@dataclass(frozen=True)
class RunConfig:
    horizon: int = 100
    replications: int = 10
    eta1: float = 0.01
    beta: float = -0.25
    preset: str = "reflected"
    exponent: float | None = None  # overrides beta/preset when set
    step_cap: str = "none"  # "none", "theory" (σ_Ψ/(2A)) or a positive number
    map_kind: str = "negentropy"
    attacks: tuple[AttackSpec, ...] = ()
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    delta: float = 0.1
    seed: int = 0
    start: str = "unif"  # "unif" or "mwe"

    def __post_init__(self):
        if self.horizon < 1 or self.replications < 1:
            raise ValueError("horizon and replications must be >= 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.start not in ("unif", "mwe"):
            raise ValueError("start must be 'unif' or 'mwe'")
        times = [a.t0 for a in self.attacks]
        if len(set(times)) != len(times):
            raise ValueError("at most one attack per iteration")
        if any(t > self.horizon for t in times):
            raise ValueError("attack time beyond the horizon")
        if self.step_cap not in ("none", "theory"):
            try:
                if not float(self.step_cap) > 0:
                    raise ValueError
            except ValueError:
                raise ValueError("step_cap must be 'none', 'theory' or a positive number") from None
        self.resolved_exponent()

    def resolved_exponent(self) -> float:
        if self.exponent is not None:
            return float(self.exponent)
        return exponent_from_beta(self.beta, self.preset)

    def schedule(self, mirror: MirrorMap, growth: GrowthConstants | None = None) -> StepSchedule:
        if self.step_cap == "none":
            cap = np.inf
        elif self.step_cap == "theory":
            if growth is None:
                raise ValueError("step_cap='theory' needs growth constants")
            cap = mirror.sigma_psi / (2 * growth.A)
        else:
            cap = float(self.step_cap)
        return StepSchedule(self.eta1, self.resolved_exponent(), cap)

    def as_dict(self):
        return {
            "horizon": self.horizon, "replications": self.replications, "eta1": self.eta1,
            "beta": self.beta, "preset": self.preset, "exponent": self.resolved_exponent(),
            "step_cap": self.step_cap, "map": self.map_kind, "attacks": [str(a) for a in self.attacks],
            "perturbation": {"kind": self.perturbation.kind, "w_max": self.perturbation.w_max,
                             "mean": self.perturbation.mean, "sigma": self.perturbation.sigma},
            "delta": self.delta, "seed": self.seed, "start": self.start,
        }


@dataclass
class RunRecord:
    """One replication. Arrays are indexed by t - 1."""

    replication: int
    eta: np.ndarray
    phi: np.ndarray
    Phi: np.ndarray
    gap: np.ndarray
    dist_ref: np.ndarray
    attacked: np.ndarray
    cesaro_gap: np.ndarray  # Φ(μ̄^t) − Φ*, average restarted at each attack
    xi: np.ndarray  # η_t ⟨Λ(μ* − μ^t), ω^t − E ω⟩
    b: np.ndarray  # η_t ‖Λ(μ* − μ^t)‖₁ · half-range of ω
    attacks: list[AttackReport]
    mu_bar: np.ndarray
    mu_final: np.ndarray

    @property
    def cesaro_gap_T(self) -> float:
        return float(self.cesaro_gap[-1])

    @property
    def T(self) -> int:
        return self.eta.shape[0]


@dataclass
class RunSet:
    kind: str  # "md" or "greedy"
    config: RunConfig
    phi_star: float
    records: list[RunRecord]

    def __post_init__(self):
        self.records = sorted(self.records, key=lambda r: r.replication)

    def column(self, name) -> np.ndarray:
        """(R, T) array of one per-step quantity."""
        return np.vstack([getattr(r, name) for r in self.records])


class StepInfo(NamedTuple):
    replication: int
    t: int
    mu: np.ndarray
    ell: np.ndarray
    eta: float
    phi: float
    mu_next: np.ndarray
    segment_start: int  # t at which the current segment (run start or last attack) began
    segment_anchor: np.ndarray  # flow at the segment start


def start_flow(network, config: RunConfig, eq: EquilibriumResult) -> np.ndarray:
    if config.start == "mwe":
        return eq.mu_star.copy()
    return network.path_demand / network.od_sizes[network.path_od]


def _greedy_step(network, mu, ell):
    return 0.5 * mu + 0.5 * all_or_nothing(network, ell)


def _run_one(network, latency, config, eq, schedule, mirror, rep, kind, observer):
    T = config.horizon
    rng_w = rng_stream(config.seed, rep, OMEGA_STREAM)
    rng_a = rng_stream(config.seed, rep, ATTACK_STREAM)
    attacks = {a.t0: a for a in config.attacks}
    omega_bar = latency.expected_omega()
    half = latency.perturbation.half_range()
    etas = schedule.rates(T)
    inc, inc_t = network.incidence, network.incidence_t
    q_star = inc @ eq.mu_star

    out = {k: np.zeros(T) for k in ("phi", "Phi", "dist_ref", "cesaro_gap", "xi", "b")}
    attacked = np.zeros(T, dtype=bool)
    reports = []
    mu = start_flow(network, config, eq)
    acc = np.zeros_like(mu)
    wsum = 0.0
    seg_start, seg_anchor = 1, mu.copy()
    for t in range(1, T + 1):
        if t in attacks:
            spec = attacks[t]
            mu_dag = generate_attack(network, mu, spec, rng_a)
            reports.append(attack_magnitude(mirror, network, mu, mu_dag, t, spec.kind))
            mu = mu_dag
            attacked[t - 1] = True
            acc[:] = 0.0
            wsum = 0.0
            seg_start, seg_anchor = t, mu.copy()
        omega = latency.perturbation.sample(rng_w, latency.n_edges)
        eta = float(etas[t - 1])
        q = inc @ mu
        ell = inc_t @ latency.latencies(q, omega)
        phi_t = float(latency.potentials(q, omega).sum())
        out["phi"][t - 1] = phi_t
        out["Phi"][t - 1] = float(latency.potentials(q, omega_bar).sum())
        d = mu - eq.mu_star
        out["dist_ref"][t - 1] = float(d @ d)
        dq = q_star - q
        out["xi"][t - 1] = eta * float(dq @ (omega - omega_bar))
        out["b"][t - 1] = eta * float(np.abs(dq).sum()) * half
        acc += eta * mu
        wsum += eta
        out["cesaro_gap"][t - 1] = float(latency.potentials(inc @ (acc / wsum), omega_bar).sum()) - eq.phi_star
        if kind == "md":
            mu_next = md_step(mirror, network, mu, ell, eta)
        else:
            mu_next = _greedy_step(network, mu, ell)
        if observer is not None:
            observer(StepInfo(rep, t, mu, ell, eta, phi_t, mu_next, seg_start, seg_anchor))
        mu = mu_next
    return RunRecord(
        rep, etas, out["phi"], out["Phi"], out["Phi"] - eq.phi_star, out["dist_ref"], attacked,
        out["cesaro_gap"], out["xi"], out["b"], reports, acc / wsum, mu,
    )


def _run(network, latency, config, eq, growth, kind, observer, replications):
    latency = latency.with_perturbation(config.perturbation)
    mirror = MirrorMap.for_network(config.map_kind, network)
    schedule = config.schedule(mirror, growth)
    reps = range(config.replications) if replications is None else replications
    records = [_run_one(network, latency, config, eq, schedule, mirror, r, kind, observer) for r in reps]
    return RunSet(kind, config, eq.phi_star, records)


def simulate(network: TrafficNetwork, latency: LatencyModel, config: RunConfig, eq: EquilibriumResult,
             growth: GrowthConstants | None = None, observer: Callable[[StepInfo], None] | None = None,
             replications=None) -> RunSet:
    """Mirror-descent runs. Each step: apply any attack scheduled at t, draw
    ω^t, reveal ℓ(μ^t, ω^t), record, then take the mirror step.

    ``eq`` must be solved for ``config.perturbation``'s mean. ``observer`` is
    called once per step (used by the invariant checkers). ``replications``
    optionally selects a subset of replication indices.
    """
    return _run(network, latency, config, eq, growth, "md", observer, replications)


def greedy_baseline(network, latency, config: RunConfig, eq: EquilibriumResult, growth=None, observer=None,
                    replications=None) -> RunSet:
    """Halving best-response: μ^{t+1} = μ^t/2 + (m_w/2) e_{p*} with p* the
    cheapest path under the revealed latencies. Same ω stream and attacks as
    :func:`simulate` for a given seed."""
    return _run(network, latency, config, eq, growth, "greedy", observer, replications)


# -- verdicts -------------------------------------------------------------------

def wilson_interval(successes: int, n: int, level=0.95):
    if n == 0:
        raise ValueError("empty sample")
    z = stats.norm.ppf(0.5 + level / 2)
    p = successes / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def wanes_check(runs: RunSet, eps: float, delta: float, min_replications=20, t: int | None = None) -> dict:
    """Empirical P{Φ(μ̄^T) − Φ* < ε} with a Wilson 95% interval; the verdict
    asks that the interval's lower end be >= 1 − δ (δ here is empirical).
    ``t`` evaluates the Cesàro gap at an earlier step instead of T."""
    R = len(runs.records)
    if R < min_replications:
        raise ValueError(f"wanes_check needs at least {min_replications} replications, got {R}")
    gaps = np.array([r.cesaro_gap[-1 if t is None else t - 1] for r in runs.records])
    k = int(np.sum(gaps < eps))
    lo, hi = wilson_interval(k, R)
    return {"eps": float(eps), "delta_empirical": delta, "p_hat": k / R, "wilson_low": lo, "wilson_high": hi,
            "replications": R, "verdict": bool(lo >= 1 - delta)}


def loglog_slope(t, y) -> float:
    """Least-squares slope of log y against log t (nonpositive y dropped)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = y > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(t[ok]), np.log(y[ok]), 1)[0])


def recovery_time(gap, t0: int, window: int = 5, factor: float = 2.0, end: int | None = None):
    """Steps after t0 until the gap returns to ``factor`` times its mean over
    the ``window`` steps before t0; None if it never does (or no pre-attack data)."""
    gap = np.asarray(gap, dtype=float)
    pre = gap[max(0, t0 - 1 - window): t0 - 1]
    if pre.size == 0:
        return None
    thr = factor * pre.mean()
    post = gap[t0 - 1: end]
    hit = np.flatnonzero(post <= thr)
    return int(hit[0]) if hit.size else None


def resilience_report(runs: RunSet, theory=None, delta: float | None = None, slope_from: int = 10) -> dict:
    """Per attack: a†, spike and recovery statistics, Cesàro slope after the
    attack and (with ``theory``) the WANES verdict at ε = r_value.

    ``theory`` is one TheoryConstants for every attack or a dict keyed by t0.
    The Cesàro average restarts at each attack, so the verdict uses its value
    just before the next attack (or at T).
    """
    specs = sorted(runs.config.attacks, key=lambda a: a.t0)
    if not specs:
        raise ValueError("records contain no attack")
    delta = runs.config.delta if delta is None else delta
    T = runs.config.horizon
    gap = runs.column("gap")
    ces = runs.column("cesaro_gap")
    out = []
    for i, spec in enumerate(specs):
        t0 = spec.t0
        end = specs[i + 1].t0 - 1 if i + 1 < len(specs) else T
        rec_times, spikes, peaks, plateaus = [], [], [], []
        for row in gap:
            pre = row[max(0, t0 - 6): t0 - 1]
            plateau = float(pre.mean()) if pre.size else float("nan")
            peak = float(row[t0 - 1: end].max())
            rec_times.append(recovery_time(row, t0, end=end))
            peaks.append(peak)
            plateaus.append(plateau)
            spikes.append(peak / plateau if pre.size and plateau > 0 else float("nan"))
        a = [r.attacks[i].a_dagger for r in runs.records]
        s = np.arange(1, end - t0 + 2)
        sel = s >= min(slope_from, max(1, s[-1] // 2))
        mean_ces = ces[:, t0 - 1: end].mean(axis=0)
        entry = {
            "t0": t0, "kind": spec.kind, "a_dagger_mean": float(np.mean(a)), "a_dagger": [float(x) for x in a],
            "plateau": plateaus, "peak_gap": peaks, "spike_ratio": spikes,
            "recovery_time": rec_times,
            "recovered_fraction": float(np.mean([x is not None for x in rec_times])),
            "cesaro_slope": loglog_slope(s[sel], mean_ces[sel]),
        }
        finite = [x for x in rec_times if x is not None]
        entry["recovery_time_max"] = max(finite) if len(finite) == len(rec_times) else None
        th = theory.get(t0) if isinstance(theory, dict) else theory
        if th is not None:
            entry["r_value"] = th.r_value
            if len(runs.records) >= 20:
                entry["wanes"] = wanes_check(runs, th.r_value, delta, t=end)
        out.append(entry)
    return {"kind": runs.kind, "phi_star": runs.phi_star, "attacks": out}


# -- theory-side constants --------------------------------------------------------

@dataclass(frozen=True)
class TheoryConstants:
    C1: float
    c1: float
    c2: float
    rho: float
    C2: float
    C3: float
    r_value: float
    t1: int
    phi_sup: float
    a_dagger: float
    delta: float
    T: int
    sum_eta: float
    sum_eta2: float
    max_distance_bound: float  # C2 log(T/δ)
    step_condition: bool  # η ≤ σ_Ψ/(2A) along the schedule

    def as_dict(self):
        return {k: (v.item() if isinstance(v, np.generic) else v) for k, v in self.__dict__.items()}


def estimate_phi_sup(network, latency: LatencyModel, mu_star, n=10_000, rng=None) -> float:
    """sup_ω φ(μ*, ω): max over ``n`` draws, raised to the exact supremum
    φ(μ*, 0) + w_max Σ q* when ω is bounded."""
    rng = rng if rng is not None else np.random.default_rng(0)
    q = network.incidence @ mu_star
    base = float(latency.potentials(q).sum())
    omegas = latency.perturbation.sample(rng, latency.n_edges, size=n)
    est = base + float((omegas @ q).max())
    if latency.perturbation.is_bounded:
        est = max(est, base + latency.perturbation.upper() * float(q.sum()))
    return est


def _rate(schedule, j):
    return np.minimum(schedule.cap, schedule.eta1 * np.asarray(j, dtype=float) ** schedule.exponent)


def _first_uncapped(schedule) -> int:
    # smallest global index j with η₁ j^e <= cap
    if not np.isfinite(schedule.cap) or schedule.eta1 <= schedule.cap:
        return 1
    j = int(math.ceil((schedule.cap / schedule.eta1) ** (1.0 / schedule.exponent)))
    while j > 1 and schedule.eta1 * (j - 1) ** schedule.exponent <= schedule.cap:
        j -= 1
    while schedule.eta1 * j ** schedule.exponent > schedule.cap:
        j += 1
    return j


def sum_eta_squared(schedule: StepSchedule, start: int = 1, stop: int | None = None) -> float:
    """Σ_{j=start}^{stop} η_j² (stop=None: to infinity, via Hurwitz zeta)."""
    if stop is not None:
        return float(np.sum(_rate(schedule, np.arange(start, stop + 1)) ** 2))
    if not schedule.convergent:
        raise ValueError("Σ η² diverges for this schedule")
    jc = max(_first_uncapped(schedule), start)
    head = (jc - start) * schedule.cap ** 2 if jc > start else 0.0
    return float(head + schedule.eta1 ** 2 * zeta(-2 * schedule.exponent, jc))


def _c1(schedule, start, chunk=1_000_000, limit=50_000_000):
    # max_k η_k Σ_{j<k} η_j; eventually decreasing once past the cap phase
    best, S, k0 = 0.0, 0.0, 0
    jc = _first_uncapped(schedule)
    while True:
        eta = _rate(schedule, np.arange(start + k0, start + k0 + chunk))
        pre = S + np.concatenate(([0.0], np.cumsum(eta[:-1])))
        f = eta * pre
        best = max(best, float(f.max()))
        S = pre[-1] + eta[-1]
        k0 += chunk
        past_cap = start + k0 > 2 * jc
        if past_cap and f[-1] <= f[0] and np.all(np.diff(f[-1000:]) <= 0):
            return best
        if k0 >= limit:
            log.warning("c1 search stopped at k=%d", k0)
            return best


def theory_constants(network: TrafficNetwork, latency: LatencyModel, mirror: MirrorMap, schedule: StepSchedule,
                     growth: GrowthConstants, eq: EquilibriumResult, a_dagger: float, delta: float, T: int,
                     start: int = 1, phi_sup: float | None = None, distances=None) -> TheoryConstants:
    """Constants of the post-attack high-probability bounds.

    The post-attack schedule is η_k = rate(start + k − 1), k = 1, 2, ...
    ``distances`` (realised ‖μ^k − μ*‖², k = 1..) pin t₁ to the trajectory;
    otherwise the a-priori distance bound min(2σ⁻¹(C₁Σ_{j<k}η_j + a†), diam²)
    is used, diam² = 2 Σ_w m_w² being the squared diameter of Δ.
    """
    if not schedule.convergent:
        raise ValueError(f"schedule exponent {schedule.exponent} is not in (-1, -1/2)")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if T < 1 or start < 1:
        raise ValueError("T and start must be >= 1")
    A, B = growth.A, growth.B
    sig = mirror.sigma_psi
    if phi_sup is None:
        phi_sup = estimate_phi_sup(network, latency, eq.mu_star)
    if not np.isfinite(phi_sup):
        raise ValueError("need a finite sup of φ(μ*, ω)")
    phi_star = eq.phi_star
    eta1 = float(_rate(schedule, start))
    C1 = phi_sup + B / A
    c1 = _c1(schedule, start)
    c2 = eta1 * (phi_sup + A * phi_star + B) + (2 * A ** 2 + 1) * (C1 * c1 + eta1 * a_dagger) / sig
    den = 2 * A * (eta1 * a_dagger + C1 * c1)
    rho = 1.0 if den == 0 else min(1.0, sig * c2 / den)
    s2 = sum_eta_squared(schedule, start)

    # t1: first index whose tail Σ_{k>=t1} η_k² d_k drops below η₁a†/C₁ + c₂
    thr = eta1 * a_dagger / C1 + c2
    if distances is not None:
        d = np.asarray(distances, dtype=float)
        w = _rate(schedule, np.arange(start, start + d.size)) ** 2 * d
        tail = np.cumsum(w[::-1])[::-1]
        ok = np.flatnonzero(tail <= thr)
        t1 = int(ok[0]) + 1 if ok.size else d.size + 1
    else:
        diam2 = 2 * float(np.sum(network.demands ** 2))
        K = max(T, 100_000)
        while True:
            eta = _rate(schedule, np.arange(start, start + K))
            S = np.concatenate(([0.0], np.cumsum(eta[:-1])))
            d = np.minimum(2 / sig * (C1 * S + a_dagger), diam2)
            rest = diam2 * sum_eta_squared(schedule, start + K)
            tail = np.cumsum((eta ** 2 * d)[::-1])[::-1] + rest
            ok = np.flatnonzero(tail <= thr)
            if ok.size or K >= 10_000_000:
                t1 = int(ok[0]) + 1 if ok.size else K + 1
                break
            K *= 4
    eta_t1 = _rate(schedule, np.arange(start, start + t1))
    S_t1 = np.concatenate(([0.0], np.cumsum(eta_t1[:-1])))
    nested = float(S_t1.sum())  # Σ_{k<=t1} Σ_{j<k} η_j

    C2 = (4 * c2 / (sig * rho) + (4 / sig + 8 * eta1 * A / sig ** 2) * a_dagger
          + (8 * A * C1 + 4 * B) / sig ** 2 * s2
          + (2 * C1 * nested + a_dagger) / (sig * (eta1 * a_dagger / C1 + c2)))
    C3 = ((1 + 2 * A * eta1 / sig) * a_dagger + ((4 * A ** 2 + 1) * C2 + 4 * A * C1) * math.sqrt(2 * s2)
          + 2 * (A * C1 + B) / sig * s2)
    sum_eta = float(_rate(schedule, np.arange(start, start + T)).sum())
    r_value = C3 * math.log(2 * T / delta) ** 1.5 / sum_eta
    return TheoryConstants(
        C1=C1, c1=c1, c2=c2, rho=rho, C2=C2, C3=C3, r_value=r_value, t1=t1, phi_sup=phi_sup,
        a_dagger=float(a_dagger), delta=delta, T=T, sum_eta=sum_eta, sum_eta2=s2,
        max_distance_bound=C2 * math.log(T / delta),
        step_condition=bool(eta1 <= sig / (2 * A)),
    )


# -- invariant checkers -------------------------------------------------------------

class BoundChecker:
    """Observer for :func:`simulate` checking, at every step,

    * the one-step inequality D(μ, μ^{t+1}) − D(μ, μ^t) <= η⟨μ − μ^t, ℓ^t⟩
      + 2η²/σ_Ψ (Aφ^t + B) for μ* and ``n_test`` fixed random flows;
    * the distance bound ‖μ^{t+1} − μ*‖² <= (2/σ_Ψ)(C₁ Σ η + a) where the
      sum and a = D(μ*, anchor) restart with each segment (run start or attack).
    """

    def __init__(self, network, mirror, growth, eq, phi_sup, n_test=5, rng=None, rtol=1e-9):
        self.network, self.mirror, self.growth, self.eq = network, mirror, growth, eq
        self.C1 = phi_sup + growth.B / growth.A
        rng = rng if rng is not None else np.random.default_rng(0)
        self.tests = [eq.mu_star] + list(random_flows(network, rng, n_test, 1.0))
        self.rtol = rtol
        self.one_step_checks = self.one_step_violations = 0
        self.distance_checks = self.distance_violations = 0
        self.worst_one_step = -np.inf  # max of lhs − rhs
        self.worst_distance = 0.0  # max of lhs / rhs
        self._seg = None

    def __call__(self, s: StepInfo):
        m, sig = self.mirror, self.mirror.sigma_psi
        slack = 2 * s.eta ** 2 / sig * (self.growth.A * s.phi + self.growth.B)
        for mu in self.tests:
            d_next = bregman(m, mu, s.mu_next)
            d_now = bregman(m, mu, s.mu)
            lhs = d_next - d_now
            rhs = s.eta * float((mu - s.mu) @ s.ell) + slack
            tol = self.rtol * (abs(d_next) + abs(d_now) + abs(rhs) + 1.0)
            self.one_step_checks += 1
            self.worst_one_step = max(self.worst_one_step, lhs - rhs)
            if lhs > rhs + tol:
                self.one_step_violations += 1
        key = (s.replication, s.segment_start)
        if self._seg is None or self._seg[0] != key:
            self._seg = [key, 0.0, bregman(m, self.eq.mu_star, s.segment_anchor)]
        self._seg[1] += s.eta
        d = s.mu_next - self.eq.mu_star
        lhs = float(d @ d)
        rhs = 2 / sig * (self.C1 * self._seg[1] + self._seg[2])
        self.distance_checks += 1
        self.worst_distance = max(self.worst_distance, lhs / rhs if rhs > 0 else np.inf)
        if lhs > rhs * (1 + self.rtol):
            self.distance_violations += 1

    def summary(self):
        return {
            "one_step_checks": self.one_step_checks, "one_step_violations": self.one_step_violations,
            "one_step_worst_excess": float(self.worst_one_step),
            "distance_checks": self.distance_checks, "distance_violations": self.distance_violations,
            "distance_worst_ratio": float(self.worst_distance),
        }


def gradient_bound_check(network, latency, growth: GrowthConstants, eq: EquilibriumResult, n=1000, rng=None):
    """‖∇Φ(μ)‖² <= 2(A²‖μ − μ*‖² + AΦ* + B) on random flows. Returns (violations, worst ratio)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    mus = random_flows(network, rng, n, 1.0)
    worst, bad = 0.0, 0
    for mu in mus:
        g = mean_path_latency(network, latency, mu)
        d = mu - eq.mu_star
        rhs = 2 * (growth.A ** 2 * float(d @ d) + growth.A * eq.phi_star + growth.B)
        r = float(g @ g) / rhs
        worst = max(worst, r)
        bad += r > 1
    return bad, worst


def concentration_audit(runs: RunSet, delta: float = 0.1, min_replications=50) -> dict:
    """Martingale sums Σ_k ξ_k against the Azuma-type bound
    (2 Σ_k b_k² log(1/δ))^{1/2}, one trajectory per replication."""
    if len(runs.records) < min_replications:
        raise ValueError(f"concentration audit needs at least {min_replications} replications")
    if runs.config.perturbation.is_singleton:
        raise ValueError("perturbation is deterministic: every martingale difference is zero")
    if not runs.config.perturbation.is_bounded:
        raise ValueError("the bound needs bounded perturbations")
    S = np.array([r.xi.sum() for r in runs.records])
    bound = np.sqrt(2 * np.array([np.sum(r.b ** 2) for r in runs.records]) * math.log(1 / delta))
    viol = int(np.sum(S > bound))
    R = len(S)
    lo, hi = wilson_interval(viol, R)
    return {
        "replications": R, "delta": delta, "violations": viol, "violation_rate": viol / R,
        "wilson_low": lo, "wilson_high": hi, "median_ratio": float(np.median(S / bound)),
        "verdict": bool(lo <= delta),
    }
