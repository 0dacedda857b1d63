"""Flat ``key = value`` experiment configuration with dotted section keys.

Example::

    base.family   = dyadic
    fiber.family  = stepwise
    fiber.alpha   = 0.5
    fiber.offset_odd = 0.5
    run.n_leaves  = 256
    run.seed      = 7
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

from . import __version__
from .branch_maps import PiecewiseMap, make_dyadic_slopes, make_gauss, make_luroth, make_slopes2
from .errors import ConfigError, UnknownFamilyError
from .fiber import FiberMapSpec, make_lipschitz_coeff, make_stepwise_alpha
from .skew import SkewSystem

BASE_FAMILIES = ("dyadic", "gauss", "luroth", "slopes2")
FIBER_FAMILIES = ("stepwise", "lipschitz")

RUN_DEFAULTS = {
    "n_bins": 1024,
    "n_leaves": 256,
    "iterations": 50,
    "tail_tol": 1e-8,
    "merge_eps": 1e-6,
    "atom_cap": 512,
    "n_orbits": 100_000,
    "burn_in": 60,
    "n_max": 15,
    "mc_n_max": 10,
    "verify_leaves": 128,
    "verify_pairs": 10,
}
INT_KEYS = {"n_bins", "n_leaves", "iterations", "atom_cap", "seed", "n_orbits", "burn_in", "n_max",
            "mc_n_max", "verify_leaves", "verify_pairs"}


@dataclass
class ExperimentConfig:
    values: Dict[str, str]
    source: str = "<string>"
    run: Dict[str, float] = field(default_factory=dict)

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def getfloat(self, key: str, default: Optional[float] = None) -> float:
        raw = self.values.get(key)
        if raw is None:
            if default is None:
                raise ConfigError(f"missing key {key!r}")
            return float(default)
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key} = {raw!r} is not a number") from None

    @property
    def seed(self) -> Optional[int]:
        return self.run.get("seed")

    @property
    def output_dir(self) -> str:
        return self.values.get("output.dir", "out")

    def canonical(self) -> str:
        return "".join(f"{k}={self.values[k]}\n" for k in sorted(self.values))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def header(self) -> str:
        return f"# config_hash={self.hash()} version={__version__}\n"


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string("[config]\n" + text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    values = {k.strip(): v.strip() for k, v in parser["config"].items()}
    cfg = ExperimentConfig(values, source)
    _validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(p))


def _validate(cfg: ExperimentConfig) -> None:
    for key in cfg.values:
        if "." not in key:
            raise ConfigError(f"key {key!r} must be dotted (section.name)")
    base = cfg.get("base.family")
    if base is None:
        raise ConfigError("base.family is required")
    if base not in BASE_FAMILIES:
        raise UnknownFamilyError(f"unknown base family {base!r} (known: {', '.join(BASE_FAMILIES)})")
    fib = cfg.get("fiber.family")
    if fib is not None and fib not in FIBER_FAMILIES:
        raise UnknownFamilyError(f"unknown fiber family {fib!r} (known: {', '.join(FIBER_FAMILIES)})")
    run = {}
    for name, default in RUN_DEFAULTS.items():
        run[name] = cfg.getfloat(f"run.{name}", default)
    if "run.seed" in cfg.values:
        run["seed"] = cfg.getfloat("run.seed")
    for name in list(run):
        if name in INT_KEYS:
            if run[name] != int(run[name]):
                raise ConfigError(f"run.{name} must be an integer")
            run[name] = int(run[name])
    for name in ("tail_tol", "merge_eps"):
        if not run[name] > 0:
            raise ConfigError(f"run.{name} must be positive")
    for name in ("n_bins", "n_leaves", "atom_cap", "n_orbits"):
        if run[name] < 1:
            raise ConfigError(f"run.{name} must be >= 1")
    cfg.run = run


def build_base(cfg: ExperimentConfig) -> PiecewiseMap:
    family = cfg.get("base.family")
    if family == "dyadic":
        return make_dyadic_slopes()
    if family == "gauss":
        return make_gauss()
    if family == "luroth":
        return make_luroth(ratio=cfg.getfloat("base.ratio", 0.5))
    if family == "slopes2":
        raw = cfg.get("base.slow_slopes", "0.5")
        slopes = tuple(float(s) for s in raw.split(",") if s.strip())
        return make_slopes2(slopes, cfg.getfloat("base.slow_span", 0.25))
    raise UnknownFamilyError(f"unknown base family {family!r}")


def _odd_offsets(c: float):
    if c == 0.0:
        return None
    return lambda i: c * (i % 2)


def build_fiber(cfg: ExperimentConfig, base: PiecewiseMap) -> FiberMapSpec:
    family = cfg.get("fiber.family")
    if family is None:
        raise ConfigError("fiber.family is required for skew-product commands")
    offsets = _odd_offsets(cfg.getfloat("fiber.offset_odd", 0.0))
    if family == "stepwise":
        return make_stepwise_alpha(base, cfg.getfloat("fiber.alpha"), offsets)
    if family == "lipschitz":
        c0 = cfg.getfloat("fiber.coeff_base")
        c1 = cfg.getfloat("fiber.coeff_slope", 0.0)

        def coeffs(i, x):
            return c0 + c1 * (x - base.left(i))

        return make_lipschitz_coeff(base, coeffs, abs(c1), offsets)
    raise UnknownFamilyError(f"unknown fiber family {family!r}")


def build_system(cfg: ExperimentConfig) -> SkewSystem:
    base = build_base(cfg)
    fiber = build_fiber(cfg, base)
    k = int(cfg.getfloat("system.iterate_k", 1))
    name = cfg.get("system.name", f"{cfg.get('base.family')}/{cfg.get('fiber.family')}")
    return SkewSystem(base, fiber, k, name)
