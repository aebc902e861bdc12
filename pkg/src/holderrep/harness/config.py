"""Flat ``key = value`` experiment configuration.

Values are resolved with precedence command line > config file > defaults.
Every key has a fixed type; unknown keys are rejected so typos fail fast.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

__all__ = [
    "EXPERIMENTS",
    "DEFAULTS",
    "EXPERIMENT_DEFAULTS",
    "ConfigError",
    "ExperimentConfig",
    "parse_config_file",
    "parse_config_text",
    "build_config",
]

EXPERIMENTS = (
    "simulate",
    "diverge",
    "smallball",
    "replicate-distribution",
    "replicate-improper",
    "replicate-proper",
    "replicate-mixed",
    "verify-integrals",
)

# key -> (type, default, help)
DEFAULTS: dict[str, tuple[type, object, str]] = {
    "model": (str, "fbm", "process model: wiener, fbm or mixed"),
    "H": (float, 0.75, "Hurst index of the fbm component"),
    "grid": (int, 4096, "number of grid steps on [0, 1]"),
    "n_paths": (int, 100, "number of simulated paths"),
    "seed": (int, 12345, "root seed; path i uses the stream (seed, component, i)"),
    "batch": (int, 250, "paths simulated per batch"),
    "export_paths": (int, 2, "number of per-path integrand/path CSV files written"),
    "norm_paths": (int, 20, "paths for which tail norms are computed (replicate-proper)"),
    # diverger exponents
    "div_gamma": (float, 1.2, "diverger mesh exponent gamma"),
    "div_eta": (float, 0.05, "diverger exponent eta"),
    "div_mu": (float, 1.5, "diverger run-off exponent mu"),
    "div_alpha": (float, 0.7, "Hoelder exponent used by the diverger"),
    "level_scale": (float, 0.02, "diverger spatial normalization lambda"),
    "horizon": (int, 100, "number of mesh intervals"),
    # proper representation exponents; nan means 'use choose_parameters default'
    "alpha": (float, 0.7, "path Hoelder exponent alpha"),
    "a": (float, 0.6, "Hoelder order of the target process"),
    "beta": (float, float("nan"), "override for beta"),
    "mu": (float, float("nan"), "override for mu"),
    "kappa": (float, float("nan"), "override for kappa"),
    "gamma": (float, float("nan"), "override for gamma"),
    "eps": (float, float("nan"), "Hoelder slack eps"),
    "eps_hat": (float, float("nan"), "small-ball slack eps_hat"),
    "delta": (float, float("nan"), "margin delta (nan: ladder search)"),
    "schedule": (str, "dyadic", "Delta_n schedule: dyadic or power"),
    "case_b_level": (float, 1.0, "normalized stopping level of the case-B integrand"),
    # targets
    "v": (float, 0.5, "start time of distribution replication"),
    "target": (str, "normal", "normal, uniform (distribution); point, integral, constant (improper)"),
    "t_star": (float, 0.5, "time of a point target"),
    "constant": (float, 1.0, "value of a constant target"),
    "n_blocks": (int, 10, "blocks of the mixed representation"),
    "horizons": (str, "4,6,8,10", "comma-separated horizons compared for convergence"),
    # small ball
    "deltas": (str, "0.0625,0.125,0.25", "window lengths Delta"),
    "epsilons": (str, "0.02,0.05,0.1,0.2", "ball radii epsilon"),
    "window_points": (int, 257, "grid points per small-ball window"),
    "output_dir": (str, "runs", "output root; results go to <output_dir>/<hash>/"),
}

EXPERIMENT_DEFAULTS: dict[str, dict[str, object]] = {
    "simulate": {},
    "diverge": {"grid": 2**17, "horizon": 200, "n_paths": 200},
    "smallball": {"grid": 2**17, "horizon": 100, "n_paths": 500},
    "replicate-distribution": {"grid": 2**17, "horizon": 200, "n_paths": 200, "level_scale": 0.05,
                               "target": "normal,uniform"},
    "replicate-improper": {"grid": 2**16, "horizon": 200, "n_paths": 100, "level_scale": 0.05,
                           "target": "point"},
    "replicate-proper": {"grid": 2**16, "horizon": 200, "n_paths": 100, "level_scale": 0.05,
                         "alpha": 0.89, "a": 0.45, "beta": 0.12, "mu": 0.6, "kappa": 0.95,
                         "gamma": 1.85, "eps": 0.15, "horizons": "6,8,10"},
    "replicate-mixed": {"grid": 2**16, "model": "mixed", "n_paths": 100, "target": "point"},
    "verify-integrals": {"grid": 2**12, "n_paths": 20},
}

_NOT_HASHED = {"output_dir"}


class ConfigError(ValueError):
    """Invalid configuration (exit code 1)."""


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        if k in out:
            raise ConfigError(f"line {lineno}: duplicate key {k!r}")
        out[k] = v
    return out


def parse_config_file(path) -> dict[str, str]:
    with open(path) as fh:
        return parse_config_text(fh.read())


def _coerce(key: str, value) -> object:
    if key not in DEFAULTS:
        raise ConfigError(f"unknown configuration key {key!r}")
    typ = DEFAULTS[key][0]
    if isinstance(value, str) and typ is not str:
        s = value.strip()
        if typ is int and "^" in s:
            b, e = s.split("^", 1)
            return int(b) ** int(e)
        try:
            return typ(float(s)) if typ is int and "e" in s.lower() else typ(s)
        except ValueError:
            raise ConfigError(f"key {key!r}: cannot parse {value!r} as {typ.__name__}") from None
    try:
        return typ(value)
    except (TypeError, ValueError):
        raise ConfigError(f"key {key!r}: cannot use {value!r} as {typ.__name__}") from None


def _canonical(v):
    if isinstance(v, float):
        return "nan" if v != v else repr(v)
    return v


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    def __getattr__(self, key: str):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def floats(self, key: str) -> list[float]:
        return [float(s) for s in str(self.values[key]).split(",") if s.strip()]

    def ints(self, key: str) -> list[int]:
        return [int(s) for s in str(self.values[key]).split(",") if s.strip()]

    def optional(self, key: str):
        v = self.values[key]
        return None if isinstance(v, float) and v != v else v

    def canonical(self) -> dict:
        d = {k: _canonical(v) for k, v in sorted(self.values.items()) if k not in _NOT_HASHED}
        d["experiment"] = self.experiment
        return dict(sorted(d.items()))

    @property
    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def build_config(experiment: str, file_values: dict | None = None,
                 cli_values: dict | None = None) -> ExperimentConfig:
    """Resolve defaults, experiment defaults, file values and command-line values, in that order."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    values = {k: spec[1] for k, spec in DEFAULTS.items()}
    values.update(EXPERIMENT_DEFAULTS[experiment])
    for src in (file_values or {}, cli_values or {}):
        for k, v in src.items():
            if k == "experiment":
                if v != experiment:
                    raise ConfigError(f"config file is for experiment {v!r}, not {experiment!r}")
                continue
            if v is None:
                continue
            values[k] = _coerce(k, v)
    cfg = ExperimentConfig(experiment, values)
    _validate_common(cfg)
    return cfg


def _validate_common(cfg: ExperimentConfig) -> None:
    if cfg.model not in ("wiener", "fbm", "mixed"):
        raise ConfigError(f"model must be wiener, fbm or mixed, got {cfg.model!r}")
    if not (0.5 < cfg.H < 1.0):
        raise ConfigError(f"H must lie in (1/2, 1), got {cfg.H}")
    if cfg.grid < 64:
        raise ConfigError("grid must have at least 64 steps")
    if cfg.n_paths < 1:
        raise ConfigError("n_paths must be positive")
    if cfg.batch < 1:
        raise ConfigError("batch must be positive")
