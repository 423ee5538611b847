"""Experiment configuration: INI text with fixed sections, typed keys and defaults.

Every key is optional; missing keys take the defaults below. Serialisation
writes every key in schema order, so ``serialize(parse(text))`` is canonical.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass
from pathlib import Path

from . import fibering as fb
from .energy import ProblemParams
from .exceptions import ConfigError, NehariLabError
from .extremal import FAMILIES, DirectionSampler, SearchSettings
from .fields import GridSpec, PotentialSpec
from .solver import SolveConfig

OPT = object()  # marks an optional float key whose default is "unset"

SCHEMA: dict[str, dict[str, tuple[type, object]]] = {
    "run": {"seed": (int, 0), "out": (str, "results")},
    "problem": {"p": (float, 1.2), "q": (float, 1.5), "alpha": (float, 2.0),
                "beta": (float, 2.0), "theta": (float, 1.0)},
    "grid": {"dim": (int, 1), "n": (int, 256), "L": (float, 16.0), "s": (float, 0.4)},
    "potential_u": {"kind": (str, "power_law"), "gamma": (float, 1.0), "v0": (float, 1.0)},
    "potential_v": {"kind": (str, "power_law"), "gamma": (float, 1.0), "v0": (float, 1.0)},
    "sampler": {"family": (str, "gaussian_bumps"), "count": (int, 32)},
    "search": {"max_iter": (int, 200), "initial_step": (float, 0.5), "shrink": (float, 0.5),
               "min_step": (float, 1e-6), "refine_iter": (int, 300)},
    "solve": {"lambda": (float, OPT), "lambda_fraction": (float, 0.5),
              "max_outer": (int, 5000), "grad_tol": (float, 1e-6), "step0": (float, 0.1),
              "armijo": (float, 1e-4), "max_halvings": (int, 30),
              "max_lambda_fraction": (float, 0.95)},
    "sweep": {"points": (int, 8), "fraction_min": (float, 0.6), "fraction_max": (float, 0.94)},
    "fiber": {"source": (str, "gaussian"), "lambda": (float, 0.1),
              "a": (float, 1.0), "b": (float, 1.0), "c": (float, 1.0), "d": (float, 1.0),
              "offset": (float, 0.5), "width": (float, 1.5), "ratio": (float, 1.0),
              "u_path": (str, ""), "v_path": (str, ""), "points": (int, 200)},
}

FIBER_SOURCES = ("gaussian", "coefficients", "files")


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    def with_value(self, section: str, key: str, value) -> "ExperimentConfig":
        vals = {s: dict(kv) for s, kv in self.values.items()}
        vals[section][key] = value
        cfg = ExperimentConfig(vals)
        validate(cfg)
        return cfg

    # builders -------------------------------------------------------------
    def exponents(self) -> fb.Exponents:
        P = self["problem"]
        return fb.Exponents(P["p"], P["q"], P["alpha"], P["beta"])

    def grid(self) -> GridSpec:
        G = self["grid"]
        return GridSpec(dim=G["dim"], half_width=G["L"], points_per_dim=G["n"], s=G["s"])

    def problem(self, lam: float = 1.0) -> ProblemParams:
        pots = tuple(PotentialSpec(kind=self[k]["kind"], gamma=self[k]["gamma"], v0=self[k]["v0"])
                     for k in ("potential_u", "potential_v"))
        return ProblemParams(self.exponents(), theta=self["problem"]["theta"], lam=lam,
                             grid=self.grid(), pots=pots)

    def sampler(self, prescale: float = 1.0) -> DirectionSampler:
        S = self["sampler"]
        return DirectionSampler(seed=self.seed, family=S["family"], count=S["count"],
                                prescale=prescale)

    def search(self) -> SearchSettings:
        S = self["search"]
        return SearchSettings(max_iter=S["max_iter"], initial_step=S["initial_step"],
                              shrink=S["shrink"], min_step=S["min_step"],
                              refine_iter=S["refine_iter"])

    def solve_config(self, lam: float, branch, lambda_star_hat=None,
                     lambda_lower_star_hat=None) -> SolveConfig:
        S = self["solve"]
        return SolveConfig(lam=lam, branch=branch, max_outer=S["max_outer"],
                           grad_tol=S["grad_tol"], step0=S["step0"], armijo=S["armijo"],
                           max_halvings=S["max_halvings"], seed=self.seed,
                           lambda_star_hat=lambda_star_hat,
                           lambda_lower_star_hat=lambda_lower_star_hat,
                           max_lambda_fraction=S["max_lambda_fraction"])


def _cast(section, key, raw):
    typ, default = SCHEMA[section][key]
    raw = raw.strip()
    if default is OPT and raw == "":
        return None
    try:
        return typ(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r}: expected {typ.__name__}") from None


def defaults() -> dict:
    return {s: {k: (None if d is OPT else d) for k, (_, d) in keys.items()}
            for s, keys in SCHEMA.items()}


def parse(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    values = defaults()
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[section][key] = _cast(section, key, raw)
    cfg = ExperimentConfig(values)
    validate(cfg)
    return cfg


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse(text)


def serialize(cfg: ExperimentConfig) -> str:
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key in keys:
            v = cfg[section][key]
            lines.append(f"{key} = {'' if v is None else (repr(v) if isinstance(v, float) else v)}")
        lines.append("")
    return "\n".join(lines)


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical text; the output directory is not part of the experiment."""
    return hashlib.sha256(serialize(cfg.with_value("run", "out", "")).encode("utf-8")).hexdigest()


def validate(cfg: ExperimentConfig) -> None:
    """Check (P), (V0), (V1) and the plumbing ranges; raise ConfigError with the reason."""
    try:
        cfg.problem()
        cfg.sampler()
    except NehariLabError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    S = cfg["solve"]
    if S["lambda"] is not None and not S["lambda"] > 0:
        raise ConfigError(f"assumption (P) requires lambda > 0, got {S['lambda']}")
    if not 0 < S["lambda_fraction"] <= S["max_lambda_fraction"] <= 1:
        raise ConfigError("[solve] needs 0 < lambda_fraction <= max_lambda_fraction <= 1")
    if not S["grad_tol"] > 0:
        raise ConfigError(f"[solve] grad_tol must be positive, got {S['grad_tol']}")
    W = cfg["sweep"]
    if W["points"] < 2 or not 0 < W["fraction_min"] < W["fraction_max"] < 1:
        raise ConfigError("[sweep] needs points >= 2 and 0 < fraction_min < fraction_max < 1")
    if cfg["sampler"]["family"] not in FAMILIES[:-1]:
        raise ConfigError(f"[sampler] family must be one of {FAMILIES[:-1]}")
    F = cfg["fiber"]
    if F["source"] not in FIBER_SOURCES:
        raise ConfigError(f"[fiber] source must be one of {FIBER_SOURCES}")
    if not F["lambda"] > 0:
        raise ConfigError(f"assumption (P) requires lambda > 0, got {F['lambda']}")
