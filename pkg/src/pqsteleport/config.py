"""Flat ``key = value`` experiment configuration.

One assignment per line, ``#`` starts a comment, blank lines are ignored.
Omitted keys take the defaults of :class:`~pqsteleport.teleport.ProtocolConfig`.

Example::

    # efficiency sweep at T = 2/kappa
    total_time = 2.0
    sweep = eta
    grid = 0.2, 0.4, ..., 1.0
    workers = 4
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .teleport import ProtocolConfig

__all__ = ["ConfigError", "ExperimentConfig", "SWEEP_AXES", "load_config", "parse_config", "parse_grid"]

SWEEP_AXES = ("none", "eta", "time")


class ConfigError(ValueError):
    """Invalid configuration text; ``line`` is 1-based, or ``None`` for file-level problems."""

    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    out: Path = Path("results")
    sweep: str = "none"
    grid: tuple[float, ...] = ()
    workers: int = 1
    debug_records: bool = False

    def __post_init__(self):
        if self.sweep not in SWEEP_AXES:
            raise ValueError(f"sweep must be one of {SWEEP_AXES}, got {self.sweep!r}")
        if self.sweep != "none" and not self.grid:
            raise ValueError(f"sweep = {self.sweep} needs a nonempty grid")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


_PROTOCOL_TYPES = {f.name: f.type for f in fields(ProtocolConfig)}
_EXTRA_TYPES = {"out": "path", "sweep": "str", "grid": "grid", "workers": "int", "debug_records": "bool"}
_BOOLS = {"true": True, "yes": True, "on": True, "1": True, "false": False, "no": False, "off": False, "0": False}


def parse_grid(text: str) -> tuple[float, ...]:
    """Comma-separated floats; ``a, b, ..., z`` expands with step ``b - a``.

    >>> parse_grid("0.2, 0.4, ..., 1.0")
    (0.2, 0.4, 0.6, 0.8, 1.0)
    """
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ValueError("empty grid")
    if "..." not in items:
        return tuple(float(s) for s in items)
    if items.count("...") != 1 or len(items) != 4 or items[2] != "...":
        raise ValueError("ellipsis grid must read 'start, next, ..., stop'")
    a, b, z = float(items[0]), float(items[1]), float(items[3])
    step = b - a
    if step == 0 or (z - a) / step < 0:
        raise ValueError("ellipsis grid step does not move towards stop")
    n = (z - a) / step
    if abs(n - round(n)) > 1e-9:
        raise ValueError(f"stop {z} is not reached from {a} in steps of {step:g}")
    # rounding keeps grid points like 0.6 from printing as 0.6000000000000001
    return tuple(round(a + k * step, 12) for k in range(int(round(n)) + 1))


def _convert(kind: str, text: str):
    if kind == "float":
        v = float(text)
        if not math.isfinite(v):
            raise ValueError(f"{text!r} is not finite")
        return v
    if kind == "int":
        return int(text)
    if kind == "bool":
        try:
            return _BOOLS[text.lower()]
        except KeyError:
            raise ValueError(f"{text!r} is not a boolean") from None
    if kind == "path":
        return Path(text)
    if kind == "grid":
        return parse_grid(text)
    return text


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse configuration text; see the module docstring for the format."""
    proto, extra, lines_of = {}, {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, source)
        if key in lines_of:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines_of[key]})", lineno, source)
        if key in _PROTOCOL_TYPES:
            kind, target = _PROTOCOL_TYPES[key], proto
        elif key in _EXTRA_TYPES:
            kind, target = _EXTRA_TYPES[key], extra
        else:
            raise ConfigError(f"unknown key {key!r}", lineno, source)
        try:
            target[key] = _convert(kind, value)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected {kind}, got {value!r} ({exc})", lineno, source) from None
        lines_of[key] = lineno

    try:
        protocol = ProtocolConfig(**proto)
    except ValueError as exc:
        raise ConfigError(str(exc), _blame(str(exc), proto, lines_of), source) from None
    try:
        return ExperimentConfig(protocol=protocol, **extra)
    except ValueError as exc:
        raise ConfigError(str(exc), _blame(str(exc), extra, lines_of), source) from None


def _blame(message: str, given: dict, lines_of: dict) -> int | None:
    """Line of the first given key named in an invariant message."""
    hits = [lines_of[k] for k in given if k in message]
    return min(hits) if hits else None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("no such file", None, str(path))
    return parse_config(path.read_text(encoding="utf-8"), str(path))
