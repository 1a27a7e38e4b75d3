"""Plain-text experiment configuration: ``key = value`` lines, ``#`` comments."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from ..exceptions import ConfigError

EXPERIMENTS = ("coverage", "convergence", "ti", "sphere", "randeff", "estimate")

# key -> (type, default, help).  Types: int, float, str, ints, floats, strs, bool.
COMMON = {
    "seed": ("int", 0, "master seed; every cell derives its own seed from it"),
    "plot": ("bool", True, "also write an SVG figure next to the CSV"),
}

KEYS = {
    "coverage": {
        "test_fn": ("str", "f1", "f1 (C=5) or f2 (C=20); f(x) = exp(sin(C x1)^2 - |x|^2) on [-5,5]^d"),
        "d": ("int", 1, "dimension, at most 3"),
        "n_grid": ("ints", [50, 100, 200, 500], "numbers of MC states"),
        "gamma_grid": ("floats", [0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
                       "credible levels are 1 - gamma"),
        "replicates": ("int", None, "replicates per n (default 200 for d=1, else 50)"),
        "alpha": ("float", 3.5, "Matern smoothness"),
        "sigma_lo": ("float", 1e-2, "lower end of the EB lengthscale grid"),
        "sigma_hi": ("float", 1e2, "upper end of the EB lengthscale grid"),
        "per_decade": ("int", 8, "EB grid density"),
    },
    "convergence": {
        "kernel": ("str", "matern", "matern, sobolev or sphere"),
        "alphas": ("floats", [1.5, 2.5, 3.5], "smoothness values (Matern half-integers, Sobolev integers)"),
        "generator": ("str", "qmc", "qmc, mc or design"),
        "d": ("int", 1, "dimension (ignored for sphere)"),
        "m_min": ("int", 2, "smallest n = 2**m_min"),
        "m_max": ("int", 10, "largest n = 2**m_max"),
        "sigma": ("float", 0.005, "Matern lengthscale"),
        "lam": ("float", 1.0, "Matern amplitude"),
        "order": ("int", 1, "digital-net interlacing order"),
        "d_max": ("int", 2, "Sobolev interaction order"),
        "design_dir": ("str", "", "directory of sphere designs (default: packaged)"),
    },
    "randeff": {
        "d": ("int", 50, "number of knots / random effects"),
        "n_obs": ("int", 50, "number of Poisson observations"),
        "tau": ("float", 10.0, "random-effect precision"),
        "m_min": ("int", 4, "smallest n = 2**m_min"),
        "m_max": ("int", 12, "largest n = 2**m_max"),
        "alpha": ("int", 2, "Sobolev smoothness (also the net order)"),
        "d_max": ("int", 2, "interaction order of the weights"),
        "truth_m": ("int", 16, "brute-force QMC reference uses 2**truth_m points"),
        "data_seed": ("int", 1, "seed of the synthetic dataset"),
    },
    "sphere": {
        "design_dir": ("str", "", "directory of sphere designs (default: packaged)"),
        "bumps": ("int", 6, "von Mises-Fisher bumps per colour channel"),
        "radiance_seed": ("int", 3, "seed of the synthetic environment"),
    },
    "ti": {
        "n_data": ("int", 200, "logistic-regression observations"),
        "covariates": ("int", 5, "number of candidate covariates"),
        "max_active": ("int", 2, "largest model size considered"),
        "prior_precision": ("float", 0.01, "precision of the coefficient priors"),
        "rungs": ("int", 10, "temperature ladder size"),
        "n_per_rung": ("int", 200, "MCMC states per rung"),
        "draws": ("int", 1000, "Monte Carlo draws of the model posterior"),
        "data_seed": ("int", 1, "seed of the synthetic dataset"),
    },
    "estimate": {
        "integrand": ("str", "f1", "f1, f2 or external"),
        "command": ("str", "", "external evaluator command line (integrand = external)"),
        "d": ("int", 1, "dimension"),
        "n": ("int", 200, "number of states"),
        "generator": ("str", "mc", "mc, qmc or file"),
        "points_file": ("str", "", "CSV or whitespace table of states (generator = file)"),
        "kernel": ("str", "matern", "matern or expquad"),
        "alpha": ("float", 3.5, "Matern smoothness"),
        "sigma": ("float", 0.0, "lengthscale; 0 selects it by empirical Bayes"),
        "measure": ("str", "uniform", "uniform (box lo..hi) or gaussian (standard normal)"),
        "lo": ("float", -5.0, "box lower bound"),
        "hi": ("float", 5.0, "box upper bound"),
        "gamma": ("float", 0.05, "interval level is 1 - gamma"),
        "allow_empirical": ("bool", False, "fall back to an empirical kernel mean for unsupported pairs"),
        "empirical_m": ("int", 2000, "samples for the empirical kernel mean"),
    },
}


def _convert(kind, raw, key):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if kind == "ints":
            return [int(s) for s in items]
        if kind == "floats":
            return [float(s) for s in items]
        if kind == "strs":
            return items
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from exc
    raise ConfigError(f"{key}: unknown type {kind}")  # pragma: no cover


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    output_dir: str = "."

    def __getitem__(self, key):
        return self.params[key]

    def get(self, key, default=None):
        return self.params.get(key, default)


def parse_text(text: str, experiment: str) -> dict:
    """Parse config text into raw strings, rejecting malformed lines."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in s.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def build_config(experiment: str, raw: dict, output_dir=".", seed=None) -> ExperimentConfig:
    """Type-check raw values against the schema and fill defaults."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    schema = {**COMMON, **KEYS[experiment]}
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown keys for {experiment}: {', '.join(unknown)}")
    params = {}
    for key, (kind, default, _) in schema.items():
        params[key] = _convert(kind, raw[key], key) if key in raw else default
    if seed is not None:
        params["seed"] = int(seed)
    if params["seed"] < 0 or params["seed"] >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    _validate(experiment, params)
    return ExperimentConfig(experiment, params, output_dir)


def load_config(path, experiment: str, output_dir=".", seed=None) -> ExperimentConfig:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "r", encoding="utf-8") as fh:
        raw = parse_text(fh.read(), experiment)
    return build_config(experiment, raw, output_dir, seed)


def _increasing(xs, name):
    if not xs:
        raise ConfigError(f"{name} must not be empty")
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise ConfigError(f"{name} must be strictly increasing")


def _validate(experiment, p):
    if experiment == "coverage":
        if p["test_fn"] not in ("f1", "f2"):
            raise ConfigError("test_fn must be f1 or f2")
        _increasing(p["n_grid"], "n_grid")
        if any(n < 2 for n in p["n_grid"]):
            raise ConfigError("n_grid entries must be at least 2")
        if any(not 0 < g < 1 for g in p["gamma_grid"]):
            raise ConfigError("gamma_grid entries must lie in (0, 1)")
        if p["replicates"] is None:
            p["replicates"] = 200 if p["d"] == 1 else 50
        if p["replicates"] < 1:
            raise ConfigError("replicates must be at least 1")
    elif experiment in ("convergence", "randeff"):
        if p["m_min"] < 0 or p["m_max"] < p["m_min"]:
            raise ConfigError("need 0 <= m_min <= m_max")
        if experiment == "convergence" and p["kernel"] not in ("matern", "sobolev", "sphere"):
            raise ConfigError("kernel must be matern, sobolev or sphere")
        if experiment == "convergence" and p["generator"] not in ("qmc", "mc", "design"):
            raise ConfigError("generator must be qmc, mc or design")
    elif experiment == "estimate":
        if p["integrand"] not in ("f1", "f2", "external"):
            raise ConfigError("integrand must be f1, f2 or external")
        if p["integrand"] == "external" and not p["command"]:
            raise ConfigError("integrand = external needs a command")
        if p["generator"] not in ("mc", "qmc", "file"):
            raise ConfigError("generator must be mc, qmc or file")
        if p["generator"] == "file" and not p["points_file"]:
            raise ConfigError("generator = file needs points_file")
        if p["n"] < 0:
            raise ConfigError("n must be nonnegative")
        if not 0 < p["gamma"] < 1:
            raise ConfigError("gamma must lie in (0, 1)")
    elif experiment == "ti":
        if p["max_active"] < 0 or p["max_active"] > p["covariates"]:
            raise ConfigError("need 0 <= max_active <= covariates")


def describe_keys() -> str:
    """Human-readable key reference for ``--help``."""
    lines = ["config keys (all optional):", "  common:"]
    for k, (kind, default, help_) in COMMON.items():
        lines.append(f"    {k} ({kind}, default {default}): {help_}")
    for exp, keys in KEYS.items():
        lines.append(f"  {exp}:")
        for k, (kind, default, help_) in keys.items():
            lines.append(f"    {k} ({kind}, default {default}): {help_}")
    return "\n".join(lines)
