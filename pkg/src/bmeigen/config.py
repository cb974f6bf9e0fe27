"""JSON experiment configuration.

Schema (all keys not listed for a command are ignored)::

    {
      "command": "eigen" | "minkowski" | "infconv" | "bm-check" | "log-concavity" | "validate-operator",
      "operator": {"kind": "p_laplacian" | "normalized_p_laplacian", "p": 2}
                | {"kind": "pucci_min", "lam": 1, "Lam": 2},
      "domain": <domain>,                         eigen, log-concavity
      "domains": [<domain>, ...], "weights": [..], minkowski
      "domain0": <domain>, "domain1": <domain>,   infconv, bm-check
      "t": 0.5,                                   infconv
      "ts": [0.25, 0.5, 0.75],                    bm-check
      "h": 0.015625,
      "seed": 0,
      "samples": 10000,                           validate-operator, log-concavity
      "solver": {"outer_tol", "max_outer", "u_tol", "damping", "K", "m", "degenerate_tol"},
      "bm": {"residual_multiplier", "violation_budget", "floor", "subdivide"},
      "formats": ["json", "csv"]
    }

Domains::

    {"type": "disc", "center": [x, y], "radius": r}
    {"type": "square", "side": s, "lower_left": [x, y]}
    {"type": "polygon", "vertices": [[x, y], ...]}
    {"type": "rounded_polygon", "vertices": [[x, y], ...], "radius": r}
    {"type": "scaled", "factor": k, "child": <domain>}
    {"type": "offset", "r": r, "child": <domain>}
    {"type": "minkowski", "weights": [..], "children": [<domain>, ...]}
    {"type": "stadium_complement", "outer_radius": 1, "half_length": 0.3, "thickness": 0.2, "h": 1/256}
    {"type": "sdf_grid", "path": "<grid dump sidecar, relative to the config file>"}
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .geometry import (ConvexPolygon, Disc, DomainError, Offset, RoundedPolygon, Scaled, SdfGrid, Square,
                       minkowski_combine, stadium_complement)
from .grid import DirectionSet
from .eigensolver import SolverParams
from .operators import NormalizedPLaplacian, OperatorSpec, PLaplacian, PucciMinimal

COMMANDS = ("eigen", "minkowski", "infconv", "bm-check", "log-concavity", "validate-operator")


class ConfigError(ValueError):
    """Schema violation; the message starts with the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _get(d: dict, key: str, path: str, kind=None, default: Any = ...):
    if not isinstance(d, dict):
        raise ConfigError(path or "<root>", "expected an object")
    if key not in d:
        if default is ...:
            raise ConfigError(f"{path}.{key}" if path else key, "required field is missing")
        return default
    v = d[key]
    where = f"{path}.{key}" if path else key
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(where, f"expected a number, got {type(v).__name__}")
        return float(v)
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(where, f"expected an integer, got {type(v).__name__}")
        return v
    if kind is not None and not isinstance(v, kind):
        raise ConfigError(where, f"expected {getattr(kind, '__name__', kind)}, got {type(v).__name__}")
    return v


def _point(v, path):
    if (not isinstance(v, (list, tuple)) or len(v) != 2
            or any(isinstance(c, bool) or not isinstance(c, (int, float)) for c in v)):
        raise ConfigError(path, "expected a point [x, y]")
    return float(v[0]), float(v[1])


def _points(v, path):
    if not isinstance(v, list) or len(v) < 3:
        raise ConfigError(path, "expected a list of at least 3 points")
    return [_point(p, f"{path}[{i}]") for i, p in enumerate(v)]


def _numbers(v, path):
    if not isinstance(v, list) or not v or any(isinstance(c, bool) or not isinstance(c, (int, float)) for c in v):
        raise ConfigError(path, "expected a non-empty list of numbers")
    return [float(c) for c in v]


def parse_operator(d: dict, path: str = "operator") -> OperatorSpec:
    kind = _get(d, "kind", path, str)
    try:
        if kind == "p_laplacian":
            return PLaplacian(_get(d, "p", path, float))
        if kind == "normalized_p_laplacian":
            return NormalizedPLaplacian(_get(d, "p", path, float))
        if kind == "pucci_min":
            return PucciMinimal(_get(d, "lam", path, float), _get(d, "Lam", path, float))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None
    raise ConfigError(f"{path}.kind", f"unknown operator kind {kind!r}")


def parse_domain(d: dict, path: str = "domain", base: Optional[Path] = None):
    typ = _get(d, "type", path, str)
    try:
        if typ == "disc":
            return Disc(_point(_get(d, "center", path, default=[0, 0]), f"{path}.center"),
                        _get(d, "radius", path, float))
        if typ == "square":
            return Square(_get(d, "side", path, float, 1.0),
                          _point(_get(d, "lower_left", path, default=[0, 0]), f"{path}.lower_left"))
        if typ == "polygon":
            return ConvexPolygon(_points(_get(d, "vertices", path), f"{path}.vertices"))
        if typ == "rounded_polygon":
            return RoundedPolygon(_points(_get(d, "vertices", path), f"{path}.vertices"),
                                  _get(d, "radius", path, float))
        if typ == "scaled":
            return Scaled(_get(d, "factor", path, float), parse_domain(_get(d, "child", path, dict),
                                                                       f"{path}.child", base))
        if typ == "offset":
            return Offset(_get(d, "r", path, float), parse_domain(_get(d, "child", path, dict), f"{path}.child", base))
        if typ == "minkowski":
            ch = _get(d, "children", path, list)
            children = [parse_domain(c, f"{path}.children[{i}]", base) for i, c in enumerate(ch)]
            return minkowski_combine(children, _numbers(_get(d, "weights", path), f"{path}.weights"))
        if typ == "stadium_complement":
            return stadium_complement(_get(d, "outer_radius", path, float, 1.0), _get(d, "half_length", path, float, 0.3),
                                      _get(d, "thickness", path, float, 0.2), _get(d, "h", path, float, 1 / 256))
        if typ == "sdf_grid":
            from .io import read_grid

            p = Path(_get(d, "path", path, str))
            if base is not None and not p.is_absolute():
                p = base / p
            side = p if p.suffix == ".json" else p.parent / (p.name + ".json")
            if not side.exists():
                raise ConfigError(f"{path}.path", f"file not found: {side}")
            vals, grid, _ = read_grid(side)
            return SdfGrid(vals, grid.origin, grid.h)
    except ConfigError:
        raise
    except (ValueError, DomainError) as exc:
        raise ConfigError(path, str(exc)) from None
    raise ConfigError(f"{path}.type", f"unknown domain type {typ!r}")


def parse_solver(d: dict, path: str = "solver") -> SolverParams:
    kw = {}
    for key in ("outer_tol", "u_tol", "damping", "degenerate_tol"):
        if key in d:
            kw[key] = _get(d, key, path, float)
    if "max_outer" in d:
        kw["max_outer"] = _get(d, "max_outer", path, int)
    try:
        if "K" in d or "m" in d:
            kw["dirs"] = DirectionSet(_get(d, "K", path, int, 8), _get(d, "m", path, int, 2))
        return SolverParams(**kw)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


@dataclass
class ExperimentConfig:
    command: str
    raw: dict
    sha256: str
    h: float = 1 / 64
    seed: int = 0
    formats: tuple = ("json", "csv")
    operator: Optional[OperatorSpec] = None
    domain: Any = None
    domains: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    domain0: Any = None
    domain1: Any = None
    t: float = 0.5
    ts: tuple = (0.25, 0.5, 0.75)
    samples: int = 10000
    solver: SolverParams = field(default_factory=SolverParams)
    bm: dict = field(default_factory=dict)


def parse_config(raw: dict, base: Optional[Path] = None, sha256: str = "") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object")
    cmd = _get(raw, "command", "", str)
    if cmd not in COMMANDS:
        raise ConfigError("command", f"unknown command {cmd!r}; expected one of {', '.join(COMMANDS)}")
    h = _get(raw, "h", "", float, 1 / 64)
    if not 0 < h <= 1:
        raise ConfigError("h", "must lie in (0, 1]")
    seed = _get(raw, "seed", "", int, 0)
    if seed < 0:
        raise ConfigError("seed", "must be a nonnegative integer")
    formats = _get(raw, "formats", "", list, ["json", "csv"])
    if not formats or any(f not in ("json", "csv") for f in formats):
        raise ConfigError("formats", "entries must be 'json' or 'csv'")
    cfg = ExperimentConfig(cmd, raw, sha256, h, seed, tuple(formats))
    cfg.solver = parse_solver(_get(raw, "solver", "", dict, {}))
    cfg.operator = parse_operator(_get(raw, "operator", "", dict))
    if cmd in ("eigen", "log-concavity"):
        cfg.domain = parse_domain(_get(raw, "domain", "", dict), "domain", base)
    if cmd == "minkowski":
        doms = _get(raw, "domains", "", list)
        cfg.domains = [parse_domain(x, f"domains[{i}]", base) for i, x in enumerate(doms)]
        cfg.weights = _numbers(_get(raw, "weights", ""), "weights")
        if len(cfg.weights) != len(cfg.domains):
            raise ConfigError("weights", "need one weight per domain")
    if cmd in ("infconv", "bm-check"):
        cfg.domain0 = parse_domain(_get(raw, "domain0", "", dict), "domain0", base)
        cfg.domain1 = parse_domain(_get(raw, "domain1", "", dict), "domain1", base)
    if cmd == "infconv":
        cfg.t = _get(raw, "t", "", float, 0.5)
        if not 0 < cfg.t < 1:
            raise ConfigError("t", "must lie strictly between 0 and 1")
    if cmd == "bm-check":
        cfg.ts = tuple(_numbers(_get(raw, "ts", "", default=[0.25, 0.5, 0.75]), "ts"))
        if any(not 0 <= t <= 1 for t in cfg.ts):
            raise ConfigError("ts", "values must lie in [0, 1]")
        bm = _get(raw, "bm", "", dict, {})
        for key in ("residual_multiplier", "violation_budget", "floor"):
            if key in bm:
                cfg.bm[key] = _get(bm, key, "bm", float)
        if "subdivide" in bm:
            cfg.bm["subdivide"] = _get(bm, "subdivide", "bm", int)
    if cmd in ("validate-operator", "log-concavity"):
        cfg.samples = _get(raw, "samples", "", int, 10000 if cmd == "validate-operator" else 20000)
        if cfg.samples < 1:
            raise ConfigError("samples", "must be positive")
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError("--config", f"file not found: {p}")
    text = p.read_bytes()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}", exc.msg) from None
    return parse_config(raw, p.parent, hashlib.sha256(text).hexdigest())
