"""Plain-text run configuration: one ``key = value`` per line, ``#`` comments."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigurationError

INITIAL_KINDS = ("parabola", "constant", "log_singular")


def _levels_default():
    return tuple(math.exp(k) for k in range(12, 25, 2))


@dataclass(frozen=True)
class Config:
    dimension: int = 3
    radius: float = 1.0
    nodes: int = 400
    grading_ratio: float = 1e5
    sigma: float = 0.05
    dt_max: float = 1e-2
    u_stop: float = 25.0
    truncation_levels: tuple = _levels_default()
    horizon: float = 10.0
    disable_diffusion: bool = False
    disable_reaction: bool = False
    theta: float = 1.0
    initial: str = "parabola"
    amplitude: float = 6.0
    cap_radius: float = 1e-5
    seed: int = 0
    trials: int = 100
    q_bound: float = 5.0

    def validate(self):
        if self.dimension < 1:
            raise ConfigurationError(f"dimension must be >= 1, got {self.dimension}")
        if self.nodes < 16:
            raise ConfigurationError(f"nodes must be >= 16, got {self.nodes}")
        for name in ("radius", "sigma", "dt_max", "horizon", "cap_radius"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if not self.grading_ratio >= 1:
            raise ConfigurationError("grading_ratio must be >= 1")
        if not 0.5 <= self.theta <= 1.0:
            raise ConfigurationError("theta must lie in [0.5, 1]")
        lv = self.truncation_levels
        if len(lv) < 2 or any(b <= a for a, b in zip(lv, lv[1:])) or lv[0] <= 0:
            raise ConfigurationError("truncation_levels must be a strictly increasing positive list of length >= 2")
        if self.initial not in INITIAL_KINDS:
            raise ConfigurationError(f"initial must be one of {', '.join(INITIAL_KINDS)}")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if not self.q_bound >= 0:
            raise ConfigurationError("q_bound must be >= 0")
        return self

    def canonical(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(float(x)) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def digest(self, extra: str = "") -> str:
        return hashlib.sha256((self.canonical() + extra).encode()).hexdigest()


HELP = {
    "dimension": "space dimension N (integer >= 1)",
    "radius": "ball radius R",
    "nodes": "grid intervals M (>= 16)",
    "grading_ratio": "spacing(R) / spacing(0); 1 is uniform",
    "sigma": "step safety factor, dt = sigma / max f(U)",
    "dt_max": "largest step",
    "u_stop": "max u at which a blow-up run stops",
    "truncation_levels": "comma list of levels n_k; e^x is accepted",
    "horizon": "final time",
    "disable_diffusion": "drop the Laplacian (ODE mode)",
    "disable_reaction": "drop the reaction (heat flow)",
    "theta": "diffusion theta, 1 = backward Euler, 0.5 = Crank-Nicolson",
    "initial": "parabola: a(1 - r^2); constant: a; log_singular: -2 log max(r, cap_radius) + a(1 - r^2)",
    "amplitude": "the constant a of the initial data",
    "cap_radius": "cap radius of log_singular data",
    "seed": "master seed of the zero-number harness",
    "trials": "harness trials",
    "q_bound": "harness bound on |Q|",
}


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_int(text):
    t = text.strip()
    try:
        return int(t)
    except ValueError:
        raise ValueError(f"expected an integer, got {t!r}") from None


def _parse_float(text):
    t = text.strip()
    if t.startswith("e^"):
        return math.exp(float(t[2:]))
    return float(t)


def _parse_levels(text):
    items = [s for s in text.split(",") if s.strip()]
    if not items:
        raise ValueError("empty level list")
    return tuple(_parse_float(s) for s in items)


def _parser_for(name):
    f = {x.name: x for x in fields(Config)}[name]
    if name == "truncation_levels":
        return _parse_levels
    if f.type == "bool":
        return _parse_bool
    if f.type == "int":
        return _parse_int
    if f.type == "float":
        return _parse_float
    return str.strip


def parse_config(text: str, source: str = "<config>") -> Config:
    known = {f.name for f in fields(Config)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigurationError(f"{source}:{lineno}: unknown key '{key}'")
        if key in values:
            raise ConfigurationError(f"{source}:{lineno}: duplicate key '{key}'")
        try:
            values[key] = _parser_for(key)(value)
        except ValueError as exc:
            raise ConfigurationError(f"{source}:{lineno}: bad value for '{key}': {exc}") from None
        try:
            Config(**{key: values[key]}).validate()
        except ConfigurationError as exc:
            raise ConfigurationError(f"{source}:{lineno}: bad value for '{key}': {exc}") from None
    cfg = Config(**values)
    try:
        return cfg.validate()
    except ConfigurationError as exc:
        raise ConfigurationError(f"{source}: {exc}") from None


def load_config(path=None) -> Config:
    if path is None:
        return Config().validate()
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}")
    return parse_config(p.read_text(), str(p))


def with_overrides(cfg: Config, **kw) -> Config:
    return replace(cfg, **kw).validate()
