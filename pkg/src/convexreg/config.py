"""Experiment configuration: flat ``key = value`` text with optional per-pipeline sections.

Keys before any section header belong to ``[run]``.  Example::

    domain = graph_quadratic
    rhs = g_beta(1.2)
    pipeline = solve, differentiability

    [differentiability]
    nodes = 128
"""
from __future__ import annotations

import configparser
import os
import re
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from .coefficients import operator_preset
from .presets import GridFileField, RadialPowerLog, domain_preset, parse_call, rhs_preset

PIPELINES = ("solve", "barriers", "differentiability", "loglip", "lorentz-audit")
BOUNDARY_CHOICES = ("auto", "zero", "exact", "x_n")

# per-pipeline options and their types
SECTION_KEYS = {
    "barriers": {"batch": int, "density": int},
    "differentiability": {"nodes": int, "beta": float},
    "loglip": {"nodes": int},
    "lorentz-audit": {"threshold": float},
}


class ConfigError(ValueError):
    pass


def _number(text: str) -> float:
    """Decimal or ``a/b`` fraction."""
    return float(Fraction(text.strip())) if "/" in text else float(text)


@dataclass
class ExperimentConfig:
    domain: str = "half_space"
    operator: str = "identity"
    lam: float = 1.0
    rhs: str = "zero"
    boundary: str = "auto"
    n: int = 2
    h: float = 1.0 / 64
    q: float | None = None
    Lambda: float = 4.0
    J: int = 8
    rho: float = 0.5
    Kmax: int = 8
    seed: int = 0
    pipelines: tuple[str, ...] = ("solve",)
    output: str = "run"
    concurrent: bool = False
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.q is None:
            self.q = float(self.n)

    @property
    def beta(self) -> float | None:
        """Exponent of the ``g_beta`` family, when that is the right-hand side."""
        name, args = parse_call(self.rhs) if not self.rhs.startswith("file(") else ("file", [])
        return args[0] if name == "g_beta" and args else None

    @property
    def audit_membership(self) -> bool:
        return self.beta is not None

    def option(self, section: str, key: str, default=None):
        return self.options.get(section, {}).get(key, default)

    def domain_obj(self):
        return domain_preset(self.domain, self.n)

    def operator_obj(self):
        return operator_preset(self.operator, self.n, self.lam, self.seed)

    def rhs_obj(self):
        return rhs_preset(self.rhs)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["pipelines"] = list(self.pipelines)
        out["beta"] = self.beta
        out["audit_membership"] = self.audit_membership
        return out


def _line_of(lines: list[str], key: str, offset: int) -> int | None:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*[=:]", re.IGNORECASE)
    for i, line in enumerate(lines):
        if pat.match(line):
            return i + 1 - offset
    return None


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; defaults fill every missing key."""
    lines = text.splitlines()
    first = next((ln.strip() for ln in lines if ln.strip() and not ln.strip().startswith(("#", ";"))), "")
    offset = 0
    if not first.startswith("["):
        text = "[run]\n" + text
        offset = 1
        lines = text.splitlines()
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"malformed configuration: {err}") from None

    def fail(key: str, msg: str):
        line = _line_of(lines, key, offset)
        where = f"line {line}, " if line else ""
        raise ConfigError(f"{where}field {key!r}: {msg}")

    run = dict(parser["run"]) if parser.has_section("run") else {}
    cfg = ExperimentConfig()
    converters = {"lam": _number, "h": _number, "q": _number, "Lambda": _number, "rho": _number,
                  "n": int, "J": int, "Kmax": int, "seed": int}
    for key, raw in run.items():
        if key in converters:
            try:
                setattr(cfg, key, converters[key](raw))
            except (ValueError, ZeroDivisionError):
                fail(key, f"cannot read {raw!r} as a number")
        elif key in ("domain", "operator", "rhs", "boundary", "output"):
            setattr(cfg, key, raw.strip())
        elif key in ("pipeline", "pipelines"):
            cfg.pipelines = tuple(p.strip() for p in raw.split(",") if p.strip())
        elif key == "concurrent":
            cfg.concurrent = raw.strip().lower() in ("1", "true", "yes", "on")
        else:
            fail(key, "unknown key")
    if "q" not in run:
        cfg.q = float(cfg.n)

    for section in parser.sections():
        if section == "run":
            continue
        if section not in SECTION_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        opts = {}
        for key, raw in parser[section].items():
            kind = SECTION_KEYS[section].get(key)
            if kind is None:
                fail(key, f"unknown key in [{section}]")
            try:
                opts[key] = kind(_number(raw)) if kind is int else _number(raw)
            except (ValueError, ZeroDivisionError):
                fail(key, f"cannot read {raw!r} as a number")
        cfg.options[section] = opts

    if cfg.n < 2:
        fail("n", "dimension must be at least 2")
    if not cfg.h > 0:
        fail("h", "grid spacing must be positive")
    if not (cfg.n - 1 < cfg.q <= cfg.n):
        fail("q", f"q = {cfg.q:g} outside ({cfg.n - 1}, {cfg.n}]")
    if cfg.J < 1:
        fail("J", "scale depth must be at least 1")
    if cfg.Kmax < 1:
        fail("Kmax", "induction depth must be at least 1")
    if cfg.Lambda < 1:
        fail("Lambda", "scale separation must be at least 1")
    if not 0 < cfg.rho < 1:
        fail("rho", "dyadic ratio must lie in (0, 1)")
    if not 0 < cfg.lam <= 1:
        fail("lam", "ellipticity must lie in (0, 1]")
    for p in cfg.pipelines:
        if p not in PIPELINES:
            fail("pipeline", f"unknown pipeline {p!r}")
    if not cfg.pipelines:
        fail("pipeline", "no pipeline selected")
    if cfg.boundary not in BOUNDARY_CHOICES:
        fail("boundary", f"expected one of {', '.join(BOUNDARY_CHOICES)}")
    try:
        cfg.domain_obj()
    except (ValueError, KeyError, IndexError) as err:
        fail("domain", str(err))
    try:
        cfg.operator_obj()
    except ValueError as err:
        fail("operator", str(err))
    try:
        g = cfg.rhs_obj()
    except (ValueError, IndexError) as err:
        fail("rhs", str(err))
    if isinstance(g, GridFileField) and not os.path.exists(g.path):
        fail("rhs", f"grid file {g.path!r} not found")
    if isinstance(g, RadialPowerLog) and g.beta <= 0:
        fail("rhs", "g_beta needs a positive exponent")
    return cfg
