"""Strict JSON run configuration.

Every section is a dataclass; unknown keys, wrong types and out-of-range
values raise ConfigError naming the offending field.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

SCHEMA_VERSION = 1
PROBES = ("hypotheses", "stationary", "evolve", "contraction", "omega", "a2_bounds",
          "particles", "expformula")


@dataclass
class CoefficientConfig:
    diffusion: str = "boltzmann"
    diffusion_params: dict = field(default_factory=dict)
    mobility: str = "constant"
    mobility_params: dict = field(default_factory=dict)
    potential: str = "log_quadratic"
    potential_params: dict = field(default_factory=dict)


@dataclass
class GridConfig:
    d: int = 3
    N: int = 400
    R: float | None = 30.0
    tail_tol: float = 1e-8
    refine: float | None = None


@dataclass
class EpsConfig:
    value: float = 0.0
    M: float | None = None
    limit: bool = False
    eps0: float = 0.1
    halvings: int = 8


@dataclass
class TimeConfig:
    T: float = 5.0
    h: float | str = 0.01
    h0: float = 0.1
    stride: int = 10


@dataclass
class InitialConfig:
    kind: str = "bump"
    center: float = 4.0
    width: float = 1.0
    floor: float = 0.0


@dataclass
class ToleranceConfig:
    solver_tol: float = 1e-10
    mass_tol: float = 1e-9
    mass_drift: float = 1e-10
    positivity: float = 1e-12
    slack: float = 1e-8
    conv_tol: float = 1e-3
    contraction_slack: float = 1e-8


@dataclass
class ContractionConfig:
    pairs: int = 10
    lambdas: list = field(default_factory=lambda: [1e-3, 1e-2, 1e-1])


@dataclass
class OmegaConfig:
    restart_horizon: float = 1.0


@dataclass
class ParticleConfig:
    N: int = 10_000
    dt: float = 0.01
    T: float | None = None
    eps_sigma: float = 1e-12
    tolerance: float = 0.05


@dataclass
class ExpFormulaConfig:
    t: float = 1.0
    n_list: list = field(default_factory=lambda: [8, 16, 32, 64])


@dataclass
class RunConfig:
    schema: int = SCHEMA_VERSION
    coefficients: CoefficientConfig = field(default_factory=CoefficientConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    eps: EpsConfig = field(default_factory=EpsConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    probes: list = field(default_factory=lambda: ["hypotheses", "stationary", "evolve", "contraction"])
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    contraction: ContractionConfig = field(default_factory=ContractionConfig)
    omega: OmegaConfig = field(default_factory=OmegaConfig)
    particles: ParticleConfig = field(default_factory=ParticleConfig)
    expformula: ExpFormulaConfig = field(default_factory=ExpFormulaConfig)
    seed: int = 0
    output: str = "runs/default"

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "coefficients": CoefficientConfig, "grid": GridConfig, "eps": EpsConfig, "time": TimeConfig,
    "initial": InitialConfig, "tolerances": ToleranceConfig, "contraction": ContractionConfig,
    "omega": OmegaConfig, "particles": ParticleConfig, "expformula": ExpFormulaConfig,
}


def _number(path, v, *, integer=False, allow_none=False):
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"{path} must be a number, got {v!r}")
    if integer:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigError(path, f"{path} must be an integer, got {v!r}")
        return int(v)
    if not math.isfinite(v):
        raise ConfigError(path, f"{path} must be finite")
    return float(v)


def _section(path: str, cls, data):
    if not isinstance(data, dict):
        raise ConfigError(path, f"{path} must be an object")
    obj = cls()
    known = {f.name: f for f in fields(cls)}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{path}.{key}", f"unknown key {path}.{key}")
        default = getattr(obj, key)
        fp = f"{path}.{key}"
        if isinstance(default, dict) or key.endswith("_params"):
            if not isinstance(value, dict):
                raise ConfigError(fp, f"{fp} must be an object")
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(fp, f"{fp} must be true or false")
        elif isinstance(default, str) and key != "h":
            if not isinstance(value, str):
                raise ConfigError(fp, f"{fp} must be a string")
        elif isinstance(default, list):
            if not isinstance(value, list):
                raise ConfigError(fp, f"{fp} must be a list")
            value = [_number(f"{fp}[{i}]", x, integer=(key == "n_list")) for i, x in enumerate(value)]
        elif key == "h":
            if value != "auto":
                value = _number(fp, value)
        else:
            value = _number(fp, value, integer=isinstance(default, int) and not isinstance(default, bool),
                            allow_none=True)
        setattr(obj, key, value)
    return obj


def _positive(path, v):
    if v is not None and not v > 0:
        raise ConfigError(path, f"{path} must be positive, got {v}")


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.schema != SCHEMA_VERSION:
        raise ConfigError("schema", f"unsupported schema version {cfg.schema}")
    g = cfg.grid
    if g.d < 3:
        raise ConfigError("grid.d", f"d must be >= 3, got {g.d}")
    if g.N < 2:
        raise ConfigError("grid.N", "N must be >= 2")
    _positive("grid.R", g.R)
    _positive("grid.tail_tol", g.tail_tol)
    for f in fields(ToleranceConfig):
        _positive(f"tolerances.{f.name}", getattr(cfg.tolerances, f.name))
    if not 0 <= cfg.eps.value <= 1:
        raise ConfigError("eps.value", "eps must lie in [0, 1]")
    if cfg.eps.M is not None and not cfg.eps.M >= 1:
        raise ConfigError("eps.M", "M must be >= 1")
    _positive("eps.eps0", cfg.eps.eps0)
    _positive("time.T", cfg.time.T)
    if cfg.time.h != "auto":
        _positive("time.h", cfg.time.h)
    if cfg.time.stride < 1:
        raise ConfigError("time.stride", "stride must be >= 1")
    if cfg.initial.kind not in ("bump", "stationary", "uniform"):
        raise ConfigError("initial.kind", f"unknown initial datum {cfg.initial.kind!r}")
    _positive("initial.width", cfg.initial.width)
    for i, p in enumerate(cfg.probes):
        if p not in PROBES:
            raise ConfigError(f"probes[{i}]", f"unknown probe {p!r}")
    for i, lam in enumerate(cfg.contraction.lambdas):
        _positive(f"contraction.lambdas[{i}]", lam)
    if cfg.contraction.pairs < 1:
        raise ConfigError("contraction.pairs", "need at least one pair")
    if cfg.particles.N < 1:
        raise ConfigError("particles.N", "particle count must be positive")
    _positive("particles.dt", cfg.particles.dt)
    _positive("expformula.t", cfg.expformula.t)
    return cfg


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    cfg = RunConfig()
    for key, value in data.items():
        if key in _SECTIONS:
            setattr(cfg, key, _section(key, _SECTIONS[key], value))
        elif key == "schema":
            cfg.schema = _number("schema", value, integer=True)
        elif key == "probes":
            if not isinstance(value, list) or not all(isinstance(p, str) for p in value):
                raise ConfigError("probes", "probes must be a list of names")
            cfg.probes = list(value)
        elif key == "seed":
            cfg.seed = _number("seed", value, integer=True)
        elif key == "output":
            if not isinstance(value, str):
                raise ConfigError("output", "output must be a string")
            cfg.output = value
        else:
            raise ConfigError(key, f"unknown key {key}")
    if "schema" not in data:
        raise ConfigError("schema", "missing schema version field")
    return validate(cfg)


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
    return parse_config(data)
