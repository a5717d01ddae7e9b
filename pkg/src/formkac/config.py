"""Experiment configuration files.

A config is TOML: top-level ``seed`` (and optionally ``out``), then one table
per experiment with a ``kind`` key::

    seed = 7

    [fk_halfspace]
    kind = "fk"
    model = "halfspace"
    dim = 2
    field = "normal_mix"
    q = 1
    x0 = [0.0, 0.6]
    t = [0.25, 1.0]
    oracle = true

Validation errors carry the line of the offending key (or of the table header
when a key is missing).
"""

from __future__ import annotations

import hashlib
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .estimators import MIN_PATHS
from .geometry import MODELS, make_model

REQUIRED = object()

_MODEL = {"model": (str, REQUIRED), "dim": (int, REQUIRED), "params": (dict, {})}
_MC = {"dt": (float, 1e-3), "n_paths": (int, 10000)}
_FIELD = {"field": (str, REQUIRED), "field_params": (dict, {}), "q": (int, REQUIRED), "x0": (list, REQUIRED)}

KINDS = {
    "fk": {**_MODEL, **_MC, **_FIELD, "t": (list, REQUIRED), "mode": (str, "projected"), "eps": (float, None), "oracle": (bool, False), "tolerance": (float, 0.03), "basis": (str, "chart")},
    "bound": {**_MODEL, **_MC, **_FIELD, "t": (list, REQUIRED), "dt": (float, 5e-3)},
    "ssp": {
        **_MODEL,
        **_MC,
        "q": (int, 1),
        "alpha": (object, "curvature"),
        "beta": (object, "curvature"),
        "x0s": (list, REQUIRED),
        "t_grid": (list, REQUIRED),
        "dt": (float, 1e-2),
        "n_paths": (int, 2000),
        "n_boot": (int, 200),
        "rate_max": (float, None),
        "rate_min": (float, None),
    },
    "theta": {**_MODEL, **_MC, "q": (int, REQUIRED), "x0": (list, REQUIRED), "T_max": (float, REQUIRED), "dt": (float, 1e-2), "n_paths": (int, 2000), "n_grid": (int, 41)},
    "domination": {**_MODEL, **_MC, **_FIELD, "t": (list, REQUIRED)},
    "occupation": {**_MODEL, **_MC, "x0": (list, REQUIRED), "center": (list, REQUIRED), "radius": (float, REQUIRED), "T_grid": (list, REQUIRED), "dt": (float, 1e-2), "n_paths": (int, 1000), "threshold": (float, 0.2)},
    "intfor": {"model": (str, "ball"), "dim": (int, 3), "params": (dict, {}), "n_pairs": (int, 20), "q": (list, [1, 2]), "h": (list, [2e-3, 1e-3]), "cells": (int, 3), "order": (int, 8), "tolerance": (float, 1e-5), "min_order": (float, 1.8)},
    "dx": {"dim": (int, 4), "p": (int, 1), "kappa": (float, 1.0), "distances": (list, [3.0, 5.0]), "n_forms": (int, 20), "cells": (int, 3), "order": (int, 6)},
    "spinor": {"dim": (int, 2), "boundary": (str, "mit"), "profiles": (list, ["constant", "gaussian", "mixed"]), "x_n": (float, 0.3), "t": (float, 0.5), "dt": (float, 1e-3), "n_paths": (int, 20000)},
    "algebra-suite": {"dims": (list, [1, 2, 3, 4, 5, 6]), "n_xi": (int, 1000), "tolerance": (float, 1e-12)},
}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    kind: str
    seed: int
    params: dict
    line: int = 0

    def derived_seed(self) -> int:
        return derive_seed(self.seed, self.name)


@dataclass(frozen=True)
class RunConfig:
    seed: int
    experiments: tuple
    out: str | None = None
    path: str | None = None
    lines: dict = field(default_factory=dict)


def derive_seed(seed: int, name: str) -> int:
    """Stable 63-bit seed from ``(seed, name)``."""
    h = hashlib.sha256(f"{int(seed)}:{name}".encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


_HEADER = re.compile(r"^\s*\[\s*([^\[\]]+?)\s*\]\s*(#.*)?$")
_KEY = re.compile(r"^\s*([A-Za-z0-9_\-]+|\"[^\"]+\")\s*=")


def line_map(text: str) -> dict:
    """``{(table, key): line}``, with ``(table, None)`` for table headers."""
    out = {}
    table = None
    for i, raw in enumerate(text.splitlines(), start=1):
        m = _HEADER.match(raw)
        if m:
            table = m.group(1).strip().strip('"')
            out[(table, None)] = i
            continue
        m = _KEY.match(raw)
        if m:
            out.setdefault((table, m.group(1).strip('"')), i)
    return out


def _coerce(value, typ, name, line):
    if typ is object:
        return value
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"field {name!r} must be a number", line=line)
        return float(value)
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"field {name!r} must be an integer", line=line)
        return value
    if typ is list:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return [value]
        if not isinstance(value, list):
            raise ConfigError(f"field {name!r} must be a list", line=line)
        return value
    if not isinstance(value, typ):
        raise ConfigError(f"field {name!r} must be of type {typ.__name__}", line=line)
    return value


def _validate_table(name, table, lines, global_seed):
    header = lines.get((name, None), 0)
    if "kind" not in table:
        raise ConfigError(f"experiment [{name}] is missing required field 'kind'", line=header)
    kind = table["kind"]
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; known: {', '.join(KINDS)}", line=lines.get((name, "kind"), header))
    spec = KINDS[kind]
    seed = table.get("seed", global_seed)
    if seed is None:
        raise ConfigError(f"experiment [{name}] is missing required field 'seed'", line=header)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("field 'seed' must be a nonnegative integer", line=lines.get((name, "seed"), lines.get((None, "seed"), header)))
    params = {}
    for key, value in table.items():
        if key in ("kind", "seed"):
            continue
        if key not in spec:
            raise ConfigError(f"unknown field {key!r} for kind {kind!r}", line=lines.get((name, key), header))
        params[key] = _coerce(value, spec[key][0], key, lines.get((name, key), header))
    for key, (typ, default) in spec.items():
        if key not in params:
            if default is REQUIRED:
                raise ConfigError(f"experiment [{name}] is missing required field {key!r}", line=header)
            params[key] = default
    line_of = lambda k: lines.get((name, k), header)  # noqa: E731
    if "dt" in params and not params["dt"] > 0:
        raise ConfigError("field 'dt' must be > 0", line=line_of("dt"))
    if "n_paths" in params and params["n_paths"] < MIN_PATHS:
        raise ConfigError(f"field 'n_paths' must be >= {MIN_PATHS}", line=line_of("n_paths"))
    if kind in ("fk", "bound", "ssp", "theta", "domination", "occupation", "intfor"):
        if params["model"] not in MODELS:
            raise ConfigError(f"unknown model {params['model']!r}", line=line_of("model"))
        try:
            make_model(params["model"], params["dim"], **params["params"])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid model: {exc}", line=line_of("dim")) from None
    return ExperimentConfig(name, kind, seed, params, header)


def parse_config(text: str, path: str | None = None, seed_override: int | None = None) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"syntax error: {exc}", line=int(m.group(1)) if m else 0) from None
    lines = line_map(text)
    seed = data.get("seed")
    if seed_override is not None:
        seed = int(seed_override)
    out = data.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("field 'out' must be a string", line=lines.get((None, "out"), 0))
    experiments = []
    for key, value in data.items():
        if key in ("seed", "out"):
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"unknown top-level field {key!r}", line=lines.get((None, key), 0))
        table = dict(value)
        if seed_override is not None:
            table.pop("seed", None)
        experiments.append(_validate_table(key, table, lines, seed))
    if not experiments:
        raise ConfigError("config defines no experiment table", line=1)
    return RunConfig(seed if seed is not None else experiments[0].seed, tuple(experiments), out, path, lines)


def load_config(path, seed_override: int | None = None) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", line=0) from None
    return parse_config(text, str(p), seed_override)
