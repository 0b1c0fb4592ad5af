"""Flat ``key = value`` run configuration mirroring the CLI flags."""
from __future__ import annotations

import os

# key -> converter; '-' and '_' are interchangeable in keys
KEYS = {
    "net": str,
    "trips": str,
    "out_dir": str,
    "seed": int,
    "replications": int,
    "horizon": int,
    "attack": str,  # may repeat
    "map": str,
    "eta1": float,
    "beta": float,
    "preset": str,
    "exponent": float,
    "step_cap": str,
    "k_paths": int,
    "perturbation": str,
    "w_max": float,
    "noise_mean": float,
    "noise_sigma": float,
    "delta": float,
    "start": str,
    "tol": float,
    "growth_samples": int,
}

DEFAULTS = {
    "seed": 0,
    "replications": 10,
    "horizon": 100,
    "attack": [],
    "map": "negentropy",
    "eta1": 0.01,
    "beta": -0.25,
    "preset": "reflected",
    "exponent": None,
    "step_cap": "none",
    "k_paths": 8,
    "perturbation": "uniform",
    "w_max": 0.5,
    "noise_mean": 0.0,
    "noise_sigma": 1.0,
    "delta": 0.1,
    "start": "unif",
    "tol": 1e-4,
    "growth_samples": 2000,
    "out_dir": "wanes_out",
}

SEED_ENV = "WANES_SEED"


class ConfigError(ValueError):
    pass


def parse_config(text: str, source: str = "<config>") -> dict:
    """``key = value`` lines; ``#`` starts a comment; ``attack`` may repeat."""
    out: dict = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{no}: expected 'key = value'")
        key = key.strip().replace("-", "_")
        val = val.strip()
        if key not in KEYS:
            raise ConfigError(f"{source}:{no}: unknown key {key!r}")
        try:
            conv = KEYS[key](val)
        except ValueError:
            raise ConfigError(f"{source}:{no}: bad value {val!r} for {key}") from None
        if key == "attack":
            out.setdefault("attack", []).append(conv)
        elif key in out:
            raise ConfigError(f"{source}:{no}: duplicate key {key!r}")
        else:
            out[key] = conv
    return out


def merge(cli: dict, file_cfg: dict, env=None) -> dict:
    """CLI beats the config file, the file beats ``WANES_SEED`` (seed only), which beats defaults."""
    env = os.environ if env is None else env
    cfg = dict(DEFAULTS)
    if SEED_ENV in env and env[SEED_ENV].strip():
        try:
            cfg["seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
    cfg.update(file_cfg)
    cfg.update({k: v for k, v in cli.items() if v is not None and v != []})
    return cfg
