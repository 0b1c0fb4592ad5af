"""Command-line entry point: solve, simulate, baseline, report, constants, validate."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import harness as H
from .attacks import AttackReport, AttackSpec, attack_magnitude, generate_attack
from .config import ConfigError, merge, parse_config
from .equilibrium import EquilibriumResult, solve_mwe, wardrop_violations
from .latency import (LatencyModel, PerturbationSpec, audit_growth_constants,
                      estimate_growth_constants, random_flows)
from .mirror import MirrorMap, bregman, md_step
from .network import TrafficNetwork, edge_flow, enumerate_paths
from .output import CESARO_COLUMNS, cesaro_csv, read_csv_columns, read_trajectory, to_json, trajectory_csv, write_files
from .tntp import builtin_path, parse_tntp, read_text

log = logging.getLogger("wanes")

# run-level RNG purposes
GROWTH_RNG, PHI_SUP_RNG, AUDIT_RNG, CONSTANTS_RNG = 0, 1, 2, 3


@dataclass
class Instance:
    network: TrafficNetwork
    latency: LatencyModel
    source: dict


def _flag(p, name, **kw):
    p.add_argument(name, default=None, **kw)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _flag(common, "--net", metavar="FILE", help="TNTP network file (default: bundled Sioux Falls)")
    _flag(common, "--trips", metavar="FILE", help="TNTP trip table")
    _flag(common, "--config", metavar="FILE", help="key = value file; command-line flags win")
    _flag(common, "--out-dir", metavar="DIR")
    _flag(common, "--seed", type=int, help="master seed (fallback: $WANES_SEED)")
    _flag(common, "--replications", type=int)
    _flag(common, "--horizon", type=int)
    common.add_argument("--attack", action="append", default=[], metavar="SPEC",
                        help="unif@30 or supp@30:c=0.5 (repeatable)")
    _flag(common, "--map", choices=("negentropy", "euclidean"))
    _flag(common, "--eta1", type=float)
    _flag(common, "--beta", type=float)
    _flag(common, "--preset", choices=("reflected", "shifted"), help="exponent from beta: -beta-1 or beta-1/2")
    _flag(common, "--exponent", type=float, help="step exponent, overrides --beta/--preset")
    _flag(common, "--step-cap", help="none, theory (sigma/(2A)) or a number")
    _flag(common, "--k-paths", type=int)
    _flag(common, "--perturbation", choices=("none", "uniform", "truncated-gaussian"))
    _flag(common, "--w-max", type=float)
    _flag(common, "--noise-mean", type=float)
    _flag(common, "--noise-sigma", type=float)
    _flag(common, "--delta", type=float)
    _flag(common, "--start", choices=("unif", "mwe"))
    _flag(common, "--tol", type=float, help="Frank-Wolfe relative gap")
    _flag(common, "--growth-samples", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="wanes", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, hlp in (
        ("solve", "reference equilibrium and optimal mean potential"),
        ("simulate", "mirror-descent runs with attacks"),
        ("baseline", "greedy halving baseline on the same seeds"),
        ("report", "resilience evaluation of a stored run (reads --out-dir)"),
        ("constants", "theory-side constants and r(T, delta)"),
        ("validate", "invariant suite on a network"),
    ):
        sub.add_parser(name, parents=[common], help=hlp)
    return p


def resolve_config(args) -> dict:
    file_cfg = {}
    if args.config is not None:
        file_cfg = parse_config(read_text(args.config), args.config)
    cli = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    return merge(cli, file_cfg)


def load_instance(cfg) -> Instance:
    net, trips = cfg.get("net"), cfg.get("trips")
    if (net is None) != (trips is None):
        raise ConfigError("--net and --trips must be given together")
    if net is None:
        net, trips = builtin_path("SiouxFalls_net.tntp"), builtin_path("SiouxFalls_trips.tntp")
    for f in (net, trips):
        if not Path(f).is_file():
            raise ConfigError(f"no such file: {f}")
    pert = PerturbationSpec(cfg["perturbation"], cfg["w_max"], cfg["noise_mean"], cfg["noise_sigma"])
    parsed = parse_tntp(read_text(net), read_text(trips), pert)
    if cfg["k_paths"] < 1:
        raise ConfigError("k_paths must be >= 1")
    network = parsed.network.with_paths(enumerate_paths(parsed.network, parsed.latency.free_flow(), cfg["k_paths"]))
    return Instance(network, parsed.latency, {"net": str(net), "trips": str(trips)})


def run_config(cfg) -> H.RunConfig:
    attacks = tuple(AttackSpec.parse(a) for a in cfg["attack"])
    pert = PerturbationSpec(cfg["perturbation"], cfg["w_max"], cfg["noise_mean"], cfg["noise_sigma"])
    return H.RunConfig(
        horizon=cfg["horizon"], replications=cfg["replications"], eta1=cfg["eta1"], beta=cfg["beta"],
        preset=cfg["preset"], exponent=cfg["exponent"], step_cap=str(cfg["step_cap"]), map_kind=cfg["map"],
        attacks=attacks, perturbation=pert, delta=cfg["delta"], seed=cfg["seed"], start=cfg["start"],
    )


def network_info(inst: Instance, k):
    n = inst.network
    return {**inst.source, "nodes": len(n.nodes), "links": n.n_edges, "od_pairs": len(n.od_pairs),
            "paths": n.n_paths, "k_paths": k, "total_demand": n.total_demand}


def eq_summary(eq: EquilibriumResult, n_viol: int, seconds: float):
    return {"phi_star": eq.phi_star, "relative_gap": eq.relative_gap, "iterations": eq.iterations,
            "converged": eq.converged, "lower_bound": eq.lower_bound, "wardrop_violations": n_viol,
            "seconds": seconds}


def _solve(inst, cfg):
    t = time.perf_counter()
    eq = solve_mwe(inst.network, inst.latency, tol=cfg["tol"])
    secs = time.perf_counter() - t
    n_viol = len(wardrop_violations(inst.network, inst.latency, eq.mu_star))
    return eq, eq_summary(eq, n_viol, secs)


def _growth(inst, cfg):
    rng = H.global_rng(cfg["seed"], GROWTH_RNG)
    return estimate_growth_constants(inst.network, inst.latency, cfg["growth_samples"], rng=rng)


def cmd_solve(cfg):
    inst = load_instance(cfg)
    eq, summ = _solve(inst, cfg)
    n = inst.network
    rows = ["path,origin,destination,edges,flow"]
    for w, (od, sl) in enumerate(zip(n.od_pairs, n.od_slices)):
        for k, p in enumerate(n.paths[w]):
            rows.append(f"{sl.start + k},{od.origin},{od.destination},{' '.join(map(str, p))},{eq.mu_star[sl.start + k]:.12g}")
    out = {"network": network_info(inst, cfg["k_paths"]), "equilibrium": summ}
    return {"equilibrium.json": to_json(out), "mu_star.csv": "\n".join(rows) + "\n"}


def _segments(config: H.RunConfig):
    starts = [1] + sorted(a.t0 for a in config.attacks if a.t0 > 1)
    ends = [s - 1 for s in starts[1:]] + [config.horizon]
    return list(zip(starts, ends))


def _theory(inst, config, eq, growth, runs, phi_sup):
    """Constants per segment (run start, each attack) with the largest a† seen."""
    mirror = MirrorMap.for_network(config.map_kind, inst.network)
    schedule = config.schedule(mirror, growth)
    if not schedule.convergent:
        return {}, "schedule exponent outside (-1, -1/2)"
    out = {}
    attack_idx = {a.t0: i for i, a in enumerate(sorted(config.attacks, key=lambda a: a.t0))}
    for s, e in _segments(config):
        if s in attack_idx:
            a = max(r.attacks[attack_idx[s]].a_dagger for r in runs.records)
        else:
            a = bregman(mirror, eq.mu_star, H.start_flow(inst.network, config, eq))
        out[s] = H.theory_constants(inst.network, inst.latency.with_perturbation(config.perturbation), mirror,
                                    schedule, growth, eq, a, config.delta, e - s + 1, start=s, phi_sup=phi_sup)
    return out, None


def _run_command(cfg, kind):
    timings = {}
    t = time.perf_counter()
    inst = load_instance(cfg)
    config = run_config(cfg)
    timings["load"] = time.perf_counter() - t
    latency = inst.latency.with_perturbation(config.perturbation)
    inst = Instance(inst.network, latency, inst.source)
    eq, eq_summ = _solve(inst, cfg)
    timings["solve"] = eq_summ.pop("seconds")
    t = time.perf_counter()
    growth = _growth(inst, cfg)
    timings["growth_constants"] = time.perf_counter() - t
    t = time.perf_counter()
    fn = H.simulate if kind == "md" else H.greedy_baseline
    runs = fn(inst.network, latency, config, eq, growth)
    timings["runs"] = time.perf_counter() - t
    mirror = MirrorMap.for_network(config.map_kind, inst.network)
    summary = {
        "kind": kind, "config": config.as_dict(), "network": network_info(inst, cfg["k_paths"]),
        "phi_star": eq.phi_star, "equilibrium": eq_summ,
        "growth": {"A": growth.A, "B": growth.B}, "sigma_psi": mirror.sigma_psi,
        "step_cap_value": config.schedule(mirror, growth).cap,
        "replications": [
            {"replication": r.replication, "cesaro_gap_T": r.cesaro_gap_T, "Phi_T": float(r.Phi[-1]),
             "attacks": [a.as_dict() for a in r.attacks]}
            for r in runs.records
        ],
    }
    theory = {}
    if kind == "md":
        t = time.perf_counter()
        phi_sup = H.estimate_phi_sup(inst.network, latency, eq.mu_star, rng=H.global_rng(cfg["seed"], PHI_SUP_RNG))
        theory, why = _theory(inst, config, eq, growth, runs, phi_sup)
        timings["theory"] = time.perf_counter() - t
        summary["theory"] = {"note": why, "segments": {str(s): tc.as_dict() for s, tc in theory.items()}}
        summary["theory_delta_is"] = "confidence level inside the bounds"
    if config.attacks:
        summary["resilience"] = H.resilience_report(runs, theory or None)
    elif theory and config.replications >= 20:
        summary["wanes"] = H.wanes_check(runs, theory[1].r_value, config.delta)
    summary["timings_seconds"] = timings
    return {"trajectory.csv": trajectory_csv(runs), "cesaro.csv": cesaro_csv(runs), "summary.json": to_json(summary)}


def cmd_simulate(cfg):
    return _run_command(cfg, "md")


def cmd_baseline(cfg):
    return _run_command(cfg, "greedy")


def _config_from_summary(d) -> H.RunConfig:
    p = d["perturbation"]
    return H.RunConfig(
        horizon=d["horizon"], replications=d["replications"], eta1=d["eta1"], beta=d["beta"],
        preset=d["preset"], exponent=d["exponent"], step_cap=d["step_cap"], map_kind=d["map"],
        attacks=tuple(AttackSpec.parse(a) for a in d["attacks"]),
        perturbation=PerturbationSpec(p["kind"], p["w_max"], p["mean"], p["sigma"]),
        delta=d["delta"], seed=d["seed"], start=d["start"],
    )


def cmd_report(cfg):
    run_dir = Path(cfg["out_dir"])
    for name in ("summary.json", "trajectory.csv", "cesaro.csv"):
        if not (run_dir / name).is_file():
            raise ConfigError(f"{run_dir / name} not found; run 'simulate' or 'baseline' first")
    summary = json.loads(read_text(run_dir / "summary.json"))
    config = _config_from_summary(summary["config"])
    traj = read_trajectory(run_dir / "trajectory.csv")
    ces = read_csv_columns(run_dir / "cesaro.csv", CESARO_COLUMNS)
    reps = {r["replication"]: r for r in summary["replications"]}
    records = []
    for rep, cols in traj.items():
        T = cols["t"].size
        z = np.zeros(T)
        attacks = [AttackReport(**{k: (np.nan if v is None else v) for k, v in a.items()})
                   for a in reps[rep]["attacks"]]
        records.append(H.RunRecord(rep, cols["eta"], cols["phi_t"], cols["Phi_t"], cols["gap"], cols["dist_ref"],
                                   cols["attacked"], ces[rep]["cesaro_gap"], z, z, attacks, z, z))
    runs = H.RunSet(summary["kind"], config, summary["phi_star"], records)
    theory = {int(s): H.TheoryConstants(**{k: (np.inf if v is None else v) for k, v in tc.items()})
              for s, tc in summary.get("theory", {}).get("segments", {}).items()}
    out = {"kind": runs.kind, "replications": len(records)}
    if config.attacks:
        out["resilience"] = H.resilience_report(runs, theory or None)
    Phi = runs.column("Phi")
    w = min(20, Phi.shape[1])
    out["final_window_std_Phi"] = Phi[:, -w:].std(axis=1).tolist()
    if theory and len(records) >= 20:
        last = max(theory)
        out["wanes"] = H.wanes_check(runs, theory[last].r_value, config.delta)
    return {"report.json": to_json(out)}


def cmd_constants(cfg):
    inst = load_instance(cfg)
    config = run_config(cfg)
    latency = inst.latency.with_perturbation(config.perturbation)
    inst = Instance(inst.network, latency, inst.source)
    eq, eq_summ = _solve(inst, cfg)
    growth = _growth(inst, cfg)
    mirror = MirrorMap.for_network(config.map_kind, inst.network)
    schedule = config.schedule(mirror, growth)
    phi_sup = H.estimate_phi_sup(inst.network, latency, eq.mu_star, rng=H.global_rng(cfg["seed"], PHI_SUP_RNG))
    # attacks are applied to the reference equilibrium, the setting of the bounds
    rng = H.global_rng(cfg["seed"], CONSTANTS_RNG)
    specs = list(config.attacks) or [None]
    out = []
    for spec in specs:
        if spec is None:
            a, rep = 0.0, None
        else:
            mu_dag = generate_attack(inst.network, eq.mu_star, spec, rng)
            rep = attack_magnitude(mirror, inst.network, eq.mu_star, mu_dag, spec.t0, spec.kind)
            a = rep.a_dagger
        tc = H.theory_constants(inst.network, latency, mirror, schedule, growth, eq, a, config.delta,
                                config.horizon, phi_sup=phi_sup)
        sweep = {}
        for T in (10 ** 2, 10 ** 3, 10 ** 4, 10 ** 5):
            r = H.theory_constants(inst.network, latency, mirror, schedule, growth, eq, a, config.delta, T,
                                   phi_sup=phi_sup).r_value
            sweep[str(T)] = r
        out.append({"attack": None if spec is None else str(spec), "report": None if rep is None else rep.as_dict(),
                    "constants": tc.as_dict(), "r_value_by_T": sweep})
    summary = {"config": config.as_dict(), "phi_star": eq.phi_star, "growth": {"A": growth.A, "B": growth.B},
               "sigma_psi": mirror.sigma_psi, "schedule": {"eta1": schedule.eta1, "exponent": schedule.exponent,
                                                           "cap": schedule.cap},
               "results": out}
    return {"constants.json": to_json(summary)}


def _check(name, passed, **detail):
    return {"name": name, "passed": bool(passed), **detail}


def cmd_validate(cfg):
    inst = load_instance(cfg)
    config = run_config(cfg)
    n = inst.network
    latency = inst.latency.with_perturbation(config.perturbation)
    rng = H.global_rng(cfg["seed"], AUDIT_RNG)
    checks = []
    mus = random_flows(n, rng, 200, 1.0)
    lengths = np.asarray(n.incidence.sum(axis=0)).ravel()
    err = max(abs(edge_flow(n, mu).sum() - mu @ lengths) / (mu @ lengths) for mu in mus)
    checks.append(_check("edge_flow_total", err < 1e-10, max_rel_error=err))

    eq = solve_mwe(n, latency, tol=cfg["tol"])
    viol = wardrop_violations(n, latency, eq.mu_star)
    checks.append(_check("equilibrium_gap", eq.converged and eq.relative_gap <= cfg["tol"],
                         relative_gap=eq.relative_gap))
    checks.append(_check("wardrop_audit", viol.size == 0, violations=int(viol.size)))

    growth = estimate_growth_constants(n, latency, cfg["growth_samples"], rng=rng)
    bad, worst = audit_growth_constants(n, latency, growth, 10_000, rng)
    checks.append(_check("growth_constants_holdout", bad == 0, violations=bad, worst_ratio=worst))

    mirror = MirrorMap.for_network(config.map_kind, n)
    a, b = random_flows(n, rng, 1000, 1.0), random_flows(n, rng, 1000, 1.0)
    sc = min(bregman(mirror, x, y) - mirror.sigma_psi / 2 * float((x - y) @ (x - y)) for x, y in zip(a, b))
    checks.append(_check("strong_convexity", sc >= -1e-9, min_slack=sc))

    mass = 0.0
    for mu in mus[:50]:
        ell = rng.uniform(0, 100, n.n_paths)
        nxt = md_step(mirror, n, mu, ell, 0.05)
        mass = max(mass, float(np.max(np.abs(n.od_sums(nxt) / n.demands - 1))), float(-nxt.min()))
    checks.append(_check("md_mass_conservation", mass <= 1e-10, max_error=mass))

    bad, worst = H.gradient_bound_check(n, latency, growth, eq, 500, rng)
    checks.append(_check("gradient_bound", bad == 0, violations=bad, worst_ratio=worst))

    phi_sup = H.estimate_phi_sup(n, latency, eq.mu_star, rng=rng)
    chk = H.BoundChecker(n, mirror, growth, eq, phi_sup, rng=rng)
    short = H.RunConfig(horizon=min(config.horizon, 50), replications=2, eta1=config.eta1, beta=config.beta,
                        preset=config.preset, exponent=config.exponent, step_cap=config.step_cap,
                        map_kind=config.map_kind, perturbation=config.perturbation, seed=config.seed)
    H.simulate(n, latency, short, eq, growth, observer=chk)
    s = chk.summary()
    checks.append(_check("one_step_and_distance_bounds",
                         s["one_step_violations"] == 0 and s["distance_violations"] == 0, **s))
    ok = all(c["passed"] for c in checks)
    out = {"network": network_info(inst, cfg["k_paths"]), "passed": ok, "checks": checks}
    return {"validate.json": to_json(out)}, (0 if ok else 1)


COMMANDS = {
    "solve": cmd_solve, "simulate": cmd_simulate, "baseline": cmd_baseline,
    "report": cmd_report, "constants": cmd_constants, "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        res = COMMANDS[args.command](cfg)
        files, status = res if isinstance(res, tuple) else (res, 0)
        write_files(cfg["out_dir"], files)
    except (ValueError, OSError) as e:
        print(f"wanes {args.command}: error: {e}", file=sys.stderr)
        return 1
    for name in files:
        print(Path(cfg["out_dir"]) / name)
    if status:
        print(f"wanes {args.command}: some checks failed", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
