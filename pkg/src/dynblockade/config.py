"""Flat INI-style scenario files.

One section per file, named after the scenario kind::

    [time-trace]
    name = fig1b
    E = 2
    alpha = 0.05
    P0 = 0.2
    P1 = 1
    T = 18.5

Physical values are in units of gamma (energies, drives) and hbar/gamma
(times). Sweep grids are either explicit comma lists or ``log a b n`` /
``lin a b n``.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import re
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import DynBlockadeError
from .experiments import FIG2, FIG3, FIG3_MAP, KINDS, ScenarioConfig, fig1_config, fig4_config

REQUIRED = ("E", "alpha", "P0", "P1", "T")
SWEEP_KEYS = ("P0_grid", "alpha_grid")
EXTRA_KEYS = SWEEP_KEYS + ("n_axis",)
_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


class ConfigError(DynBlockadeError):
    """Problem in a config file, optionally tied to a line number."""

    def __init__(self, message: str, line: int | None = None, path: str = "<config>"):
        self.line = line
        self.path = path
        self.detail = message
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}")


@dataclass
class LoadedConfig:
    scenario: ScenarioConfig
    grids: dict[str, np.ndarray] = field(default_factory=dict)
    text: str = ""

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()


def _line_map(text: str) -> tuple[dict[str, int], dict[str, int]]:
    sections, keys = {}, {}
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if m := re.match(r"^\[([^\]]+)\]", s):
            sections[m.group(1).strip()] = i
        elif m := re.match(r"^([A-Za-z_][\w]*)\s*[=:]", s):
            keys.setdefault(m.group(1), i)
    return sections, keys


def _number(raw: str, key: str, line: int | None, path: str, kind=float):
    try:
        if kind is complex:
            z = complex(raw.replace(" ", ""))
            return z.real if z.imag == 0 else z
        if kind is int:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r} as {kind.__name__}", line, path) from None


def parse_grid(raw: str, key: str = "grid", line: int | None = None, path: str = "<config>") -> np.ndarray:
    parts = raw.replace(",", " ").split()
    if parts and parts[0] in ("log", "lin"):
        if len(parts) != 4:
            raise ConfigError(f"key {key!r}: expected '{parts[0]} start stop count'", line, path)
        a, b = (_number(p, key, line, path) for p in parts[1:3])
        n = _number(parts[3], key, line, path, int)
        if parts[0] == "log" and (a <= 0 or b <= 0):
            raise ConfigError(f"key {key!r}: log grid needs positive bounds", line, path)
        grid = np.geomspace(a, b, n) if parts[0] == "log" else np.linspace(a, b, n)
    else:
        grid = np.array([_number(p, key, line, path) for p in parts], dtype=float)
    if grid.size == 0:
        raise ConfigError(f"key {key!r}: grid is empty", line, path)
    return grid


def loads(text: str, path: str = "<config>") -> LoadedConfig:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str  # keys are case sensitive (E vs e)
    try:
        parser.read_string(text, source=path)
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", line, path) from None
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(str(exc.message).splitlines()[0], line, path) from None

    sect_lines, key_lines = _line_map(text)
    sections = parser.sections()
    if len(sections) != 1:
        raise ConfigError(f"expected exactly one section, found {len(sections)}", None, path)
    kind = sections[0]
    if kind not in KINDS:
        raise ConfigError(f"unknown section [{kind}], expected one of {', '.join(KINDS)}", sect_lines.get(kind), path)
    sec = parser[kind]

    for key in REQUIRED:
        if key not in sec:
            raise ConfigError(f"missing required key {key!r}", sect_lines.get(kind), path)

    values: dict = {"kind": kind}
    grids: dict[str, np.ndarray] = {}
    for key, raw in sec.items():
        line = key_lines.get(key)
        if key in EXTRA_KEYS:
            grids[key] = parse_grid(raw, key, line, path)
            continue
        if key not in _FIELD_TYPES or key == "kind":
            raise ConfigError(f"unknown key {key!r}", line, path)
        raw = raw.strip()
        typ = _FIELD_TYPES[key]
        if key in ("name", "shape", "method"):
            values[key] = raw
        elif key in ("P0", "P1"):
            values[key] = _number(raw, key, line, path, complex)
        elif raw.lower() == "none" and "None" in str(typ):
            values[key] = None
        elif "int" in str(typ):
            values[key] = _number(raw, key, line, path, int)
        else:
            values[key] = _number(raw, key, line, path)

    try:
        scenario = ScenarioConfig(**values)
        if scenario.shape == "gaussian" and scenario.sigma is None:
            raise ConfigError("gaussian pulses need 'sigma'", sect_lines.get(kind), path)
        scenario.schedule()
    except ConfigError:
        raise
    except (DynBlockadeError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc), sect_lines.get(kind), path) from None
    return LoadedConfig(scenario, grids, text)


def load(path) -> LoadedConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return loads(text, str(path))


def _fmt(v) -> str:
    if isinstance(v, complex):
        return repr(v).strip("()")
    return repr(v) if isinstance(v, float) else str(v)


def dumps(scenario: ScenarioConfig, grids: dict[str, np.ndarray] | None = None) -> str:
    out = io.StringIO()
    out.write(f"[{scenario.kind}]\n")
    for key, value in scenario.as_dict().items():
        if key == "kind":
            continue
        out.write(f"{key} = {'None' if value is None else _fmt(value)}\n")
    for key, grid in (grids or {}).items():
        out.write(f"{key} = {', '.join(repr(float(x)) for x in grid)}\n")
    return out.getvalue()


def presets() -> dict[str, tuple[ScenarioConfig, dict]]:
    from .experiments import ALPHA_GRID, P0_GRID

    sweep2 = FIG2.with_(name="fig2", kind="occupation-sweep")
    sweep3 = FIG3_MAP
    return {
        "fig1b": (fig1_config("combined").with_(name="fig1b"), {}),
        "fig1d": (fig1_config("continuous").with_(name="fig1d"), {}),
        "fig1f": (fig1_config("pulses_only").with_(name="fig1f"), {}),
        "fig2": (sweep2, {"P0_grid": P0_GRID}),
        "fig3": (sweep3, {"alpha_grid": ALPHA_GRID, "P0_grid": P0_GRID}),
        "fig4-weak": (fig4_config("weak"), {}),
        "fig4-strong": (fig4_config("strong"), {}),
        "steady": (FIG3.with_(name="steady", kind="checks"), {}),
    }


def dump_defaults(name: str) -> str:
    table = presets()
    if name not in table:
        raise ConfigError(f"no preset named {name!r}; choose from {', '.join(table)}")
    scenario, grids = table[name]
    return dumps(scenario, grids)


__all__ = ["ConfigError", "LoadedConfig", "dump_defaults", "dumps", "load", "loads", "parse_grid", "presets"]
