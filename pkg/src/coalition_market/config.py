"""Scenario configuration loaded from INI files (one section per concern)."""
from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass
from io import StringIO
from pathlib import Path

__all__ = ["ConfigError", "MarketConfig", "load_config", "dump_config"]


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


@dataclass(frozen=True)
class MarketConfig:
    # [market]
    total_budget: float = 1.0
    K: int = 2
    d: int = 1
    group_sizes: tuple[int, ...] = (10, 10)
    xi_ranges: tuple[float, ...] = (0.05, 0.45, 0.55, 0.95)
    samples_range: tuple[int, ...] = (20, 60)
    rho_range: tuple[float, ...] = (0.0, 0.3)
    # [constraints]
    rho_max: float = 0.5
    coalition_cost_bound: float = math.inf
    phi_threshold: float = math.inf
    # [leakage]
    r_within: tuple[float, ...] = (0.4, 0.8)
    r_across: tuple[float, ...] = (0.0, 0.2)
    unit_comm_cost: float = 0.0025
    comm_rounds: int = 1
    # [valuation]
    gamma: float = 1.0
    A0: float = 0.2
    b: float = 0.1
    delta_m: float = 1.25
    leakage_g: tuple[float, ...] = (0.0, 0.1, 0.3, 0.5)
    shares: tuple[float, ...] = (0.6, 0.4)
    prices: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0)
    # [solver]
    max_iters: int = 10_000
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self):
        for name in ("total_budget", "rho_max", "coalition_cost_bound", "phi_threshold", "unit_comm_cost",
                     "A0", "b", "delta_m"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.gamma < 1:
            raise ConfigError("gamma must be >= 1")
        if not self.group_sizes or min(self.group_sizes) < 1:
            raise ConfigError("group_sizes needs at least one positive entry")
        if len(self.xi_ranges) != 2 * len(self.group_sizes):
            raise ConfigError("xi_ranges needs a (low, high) pair per group")
        for name in ("samples_range", "rho_range", "r_within", "r_across"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ConfigError(f"{name} must be 0 <= low <= high")
        if any(not 0 <= g <= 1 for g in self.leakage_g):
            raise ConfigError("leakage_g entries must lie in [0, 1]")
        if abs(sum(self.shares) - 1.0) > 1e-9:
            raise ConfigError("shares must sum to 1")

    @property
    def num_devices(self) -> int:
        return sum(self.group_sizes)

    def with_groups(self, per_group: int) -> "MarketConfig":
        return dataclasses.replace(self, group_sizes=(per_group,) * len(self.group_sizes))


_SECTIONS = {
    "market": ("total_budget", "K", "d", "group_sizes", "xi_ranges", "samples_range", "rho_range"),
    "constraints": ("rho_max", "coalition_cost_bound", "phi_threshold"),
    "leakage": ("r_within", "r_across", "unit_comm_cost", "comm_rounds"),
    "valuation": ("gamma", "A0", "b", "delta_m", "leakage_g", "shares", "prices"),
    "solver": ("max_iters", "seeds"),
}

_FIELDS = {f.name: f for f in dataclasses.fields(MarketConfig)}


def _parse(name: str, text: str):
    kind = _FIELDS[name].type
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "tuple[int, ...]":
            return _ints(text)
        return _floats(text)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {text!r}") from exc


def load_config(path: str | Path | None = None, text: str | None = None) -> MarketConfig:
    """Read an INI file (or string); missing keys keep their defaults."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive (K vs k)
    try:
        if text is not None:
            parser.read_string(text)
        elif path is not None:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path or '<string>'}: {exc}") from exc
    values = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[key] = _parse(key, raw)
    return MarketConfig(**values)


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return " ".join(repr(x) for x in v)
    return repr(v)


def dump_config(cfg: MarketConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section, keys in _SECTIONS.items():
        parser[section] = {k: _fmt(getattr(cfg, k)) for k in keys}
    buf = StringIO()
    parser.write(buf)
    return buf.getvalue()
