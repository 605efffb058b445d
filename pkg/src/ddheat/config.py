"""Sectioned key = value run configuration with typed, documented
defaults, strict key checking and a resolved snapshot writer."""

from __future__ import annotations

import configparser
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: str | None
    doc: str
    choices: tuple[str, ...] = ()


# Every key with its default as it would appear in the file. A default of
# None means "unset": the key is optional or required by some commands.
SCHEMA: dict[str, dict[str, Key]] = {
    "mesh": {
        "kind": Key(str, "square", "square | annulus | brick | file", ("square", "annulus", "brick", "file")),
        "n": Key(int, "10", "cells per side of the structured square"),
        "n_list": Key(_ints, "5 10 20", "mesh sizes of a convergence study"),
        "bounds": Key(_floats, "-0.5 0.5 -0.5 0.5", "xmin xmax ymin ymax of the square"),
        "r_in": Key(float, "0.02", "inner annulus radius"),
        "r_out": Key(float, "0.1", "outer annulus radius"),
        "resolution": Key(float, "0.02", "target edge length of unstructured meshes"),
        "path": Key(str, None, "mesh file for kind = file"),
    },
    "problem": {
        "scenario": Key(str, "exphat", "exphat | brick | annulus", ("exphat", "brick", "annulus")),
        "formulation": Key(str, "weaker", "weaker | stronger", ("weaker", "stronger")),
        "order": Key(int, "1", "base temperature order"),
        "orders": Key(_ints, "0 1 2", "orders of a convergence study"),
        "k": Key(float, "1.0", "conductivity of the exact solution and the line oracle"),
        "T_in": Key(float, "1000.0", "inner boundary temperature (brick, annulus)"),
        "T_out": Key(float, "500.0", "outer boundary temperature (brick, annulus)"),
    },
    "dataset": {
        "source": Key(str, "line", "line | file", ("line", "file")),
        "path": Key(str, None, "input dataset CSV"),
        "output": Key(str, None, "output dataset CSV"),
        "A": Key(float, "9.0", "half width of the regular gradient grid"),
        "count_G": Key(int, "41", "points per gradient axis of the regular grid"),
        "k": Key(float, "1.0", "conductivity of the regular dataset"),
        "T_min": Key(float, "400.0", "lowest boundary temperature of the synthetic experiment"),
        "T_max": Key(float, "1100.0", "highest boundary temperature of the synthetic experiment"),
        "n_levels": Key(int, "10", "temperature levels per boundary"),
        "k_coeffs": Key(_floats, "134.0 -0.1074 3.719e-5", "k(T) = c0 + c1 T + c2 T^2"),
        "dimension": Key(str, "gx", "column used by remove-range"),
        "lo": Key(float, None, "lower end of the removed range"),
        "hi": Key(float, None, "upper end of the removed range"),
        "sigma": Key(float, "1e6", "noise standard deviation on q_y"),
        "threshold": Key(float, "2e3", "noise applies where |g| is below this"),
    },
    "scaling": {
        "S_T": Key(float, None, "temperature weight; unset = inverse variance"),
        "S_g": Key(float, None, "gradient weight; unset = inverse variance"),
        "S_q": Key(float, None, "flux weight; unset = inverse variance"),
    },
    "dd": {
        "init": Key(str, "random", "zero | random", ("zero", "random")),
        "tol": Key(float, "1e-8", "relative change of the distance measure"),
        "max_iter": Key(int, "100", "iteration cap"),
        "same_assignment": Key(_bool, "true", "stop when assignments repeat"),
        "seed": Key(int, None, "master seed; required by stochastic steps"),
    },
    "thresholds": {
        "c_p": Key(float, "1.5", "p-refinement factor"),
        "c_d": Key(float, "4.0", "distance exclusion factor"),
        "c_s": Key(float, "0.5", "spread factor against the field RMS"),
        "c_sa": Key(float, "0.5", "spread factor against the mean distance"),
        "c_h": Key(float, "4.0", "corner h-refinement factor"),
        "n_rounds": Key(int, "6", "adaptive rounds"),
        "max_order": Key(int, "3", "p-refinement ceiling"),
    },
    "mcmc": {
        "kappa": Key(float, "1e4", "flux perturbation standard deviation"),
        "n_iter": Key(int, "100", "perturb-and-resolve iterations"),
        "early_stop_tol": Key(float, None, "relative change of the mean std; unset = fixed count"),
        "n_eval": Key(int, "4", "statistics lattice subdivisions per cell"),
    },
    "output": {
        "dir": Key(str, "out", "artifact directory"),
        "vtk": Key(_bool, "true", "write VTK field files"),
        "n_eval": Key(int, "3", "VTK lattice subdivisions per cell"),
    },
}


class Config:
    """Parsed configuration; ``get`` returns typed values with defaults."""

    def __init__(self, raw: dict[str, dict[str, str]], source: str = "<memory>"):
        self.source = source
        self.raw = raw
        self._check()

    @classmethod
    def from_file(cls, path: str | Path) -> "Config":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        return cls.from_string(path.read_text(), str(path))

    @classmethod
    def from_string(cls, text: str, source: str = "<string>") -> "Config":
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        cp.optionxform = str
        try:
            cp.read_string(text, source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None
        return cls({s: dict(cp[s]) for s in cp.sections()}, source)

    def _check(self) -> None:
        for sec, keys in self.raw.items():
            if sec not in SCHEMA:
                raise ConfigError(f"{self.source}: unknown section [{sec}]; known: {', '.join(SCHEMA)}")
            for k, v in keys.items():
                if k not in SCHEMA[sec]:
                    raise ConfigError(f"{self.source}: unknown key {k!r} in [{sec}]")
                self._parse(sec, k, v)

    def _parse(self, sec: str, key: str, text: str):
        spec = SCHEMA[sec][key]
        try:
            value = spec.parse(text)
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {key} = {text!r}: {exc}") from None
        if spec.choices and value not in spec.choices:
            raise ConfigError(f"[{sec}] {key} must be one of {', '.join(spec.choices)}, got {text!r}")
        return value

    def has(self, sec: str, key: str) -> bool:
        return key in self.raw.get(sec, {})

    def get(self, sec: str, key: str):
        text = self.raw.get(sec, {}).get(key, SCHEMA[sec][key].default)
        return None if text is None else self._parse(sec, key, text)

    def require(self, sec: str, key: str):
        value = self.get(sec, key)
        if value is None:
            raise ConfigError(f"missing required key {key!r} in [{sec}]")
        return value

    def resolved(self) -> dict[str, dict[str, str]]:
        """Every known key with its effective text value (unset keys omitted)."""
        out = {}
        for sec, keys in SCHEMA.items():
            out[sec] = {}
            for k, spec in keys.items():
                text = self.raw.get(sec, {}).get(k, spec.default)
                if text is not None:
                    out[sec][k] = text
        return out

    def write_snapshot(self, path: str | Path) -> None:
        lines = [f"# resolved configuration of {Path(self.source).name}"]
        for sec, keys in self.resolved().items():
            lines.append(f"\n[{sec}]")
            lines += [f"{k} = {v}" for k, v in keys.items()]
        Path(path).write_text("\n".join(lines) + "\n")


def default_config_text() -> str:
    """Commented template listing every key and its default."""
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for k, spec in keys.items():
            prefix = "" if spec.default is not None else "# "
            value = spec.default if spec.default is not None else ""
            lines.append(f"{prefix}{k} = {value}    # {spec.doc}")
        lines.append("")
    return "\n".join(lines)


def substream_seed(seed: int, name: str) -> int:
    """Independent integer seed for a named random stream."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))
