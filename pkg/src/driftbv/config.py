"""JSON run configuration: dataclass schema, line-anchored validation and presets."""

from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import asdict, dataclass, fields, is_dataclass
from dataclasses import field as dc_field
from pathlib import Path

from .errors import ConfigError, DriftBVError


@dataclass
class GridConfig:
    extents: list = dc_field(default_factory=lambda: [[0.0, 1.0]])
    cells: list = dc_field(default_factory=lambda: [100])


@dataclass
class BCConfig:
    dirichlet: list = dc_field(default_factory=lambda: ["all"])
    neumann: list = dc_field(default_factory=list)


@dataclass
class GraphConfig:
    kind: str = "identity"
    m: float = 1.0
    latent: float = 1.0
    delta: float | None = None


@dataclass
class FieldConfig:
    kind: str = "zero"
    params: dict = dc_field(default_factory=dict)


@dataclass
class TimeConfig:
    T: float = 0.1
    eps: float = 0.01


@dataclass
class SnapshotConfig:
    stride: int | None = None


@dataclass
class CutoffConfig:
    h: float | None = None
    c1: float = 0.5
    c2: float | None = None


@dataclass
class ExtensionConfig:
    margin: float | None = None


@dataclass
class SolverConfig:
    newton_tol: float = 1e-10
    max_newton: int = 60
    linear_tol: float = 1e-12
    damping_min: float = 2.0**-20


@dataclass
class AuditConfig:
    enabled: bool = True
    per_step: bool = True
    bv: bool = False
    slack: float = 0.05
    battery_size: int = 20


@dataclass
class OutputConfig:
    dir: str = "runs"


@dataclass
class RunConfig:
    name: str = "run"
    seed: int = 0
    grid: GridConfig = dc_field(default_factory=GridConfig)
    bc: BCConfig = dc_field(default_factory=BCConfig)
    graph: GraphConfig = dc_field(default_factory=GraphConfig)
    field: FieldConfig = dc_field(default_factory=FieldConfig)
    source: FieldConfig = dc_field(default_factory=FieldConfig)
    initial: FieldConfig = dc_field(default_factory=FieldConfig)
    time: TimeConfig = dc_field(default_factory=TimeConfig)
    snapshots: SnapshotConfig = dc_field(default_factory=SnapshotConfig)
    cutoff: CutoffConfig = dc_field(default_factory=CutoffConfig)
    extension: ExtensionConfig = dc_field(default_factory=ExtensionConfig)
    solver: SolverConfig = dc_field(default_factory=SolverConfig)
    audit: AuditConfig = dc_field(default_factory=AuditConfig)
    output: OutputConfig = dc_field(default_factory=OutputConfig)

    def to_dict(self):
        return asdict(self)

    @property
    def dim(self):
        return len(self.grid.cells)


def _line_of(text, path):
    """Best-effort line number of the key at ``path`` in the JSON source."""
    if text is None:
        return None
    lines = text.splitlines()
    start = 0
    found = None
    for key in path:
        needle = f'"{key}"'
        for i in range(start, len(lines)):
            if needle in lines[i]:
                found = start = i
                break
        else:
            return found + 1 if found is not None else None
    return found + 1 if found is not None else None


_NUMERIC = (int, float)


def _coerce(value, default, path, text):
    where = ".".join(path)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false", _line_of(text, path))
        return value
    if isinstance(default, int) and not isinstance(value, bool) and isinstance(value, int):
        return value
    if isinstance(default, (int, float)) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, _NUMERIC):
            raise ConfigError(f"{where} must be a number", _line_of(text, path))
        if isinstance(default, int) and not float(value).is_integer():
            raise ConfigError(f"{where} must be an integer", _line_of(text, path))
        return type(default)(value) if isinstance(default, int) else float(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{where} must be a string", _line_of(text, path))
    if isinstance(default, list):
        if isinstance(value, str):
            return [value]
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list", _line_of(text, path))
    if isinstance(default, dict) and not isinstance(value, dict):
        raise ConfigError(f"{where} must be an object", _line_of(text, path))
    if default is None and value is not None and not isinstance(value, (_NUMERIC, str)):
        raise ConfigError(f"{where} has an unsupported value", _line_of(text, path))
    if default is None and isinstance(value, bool):
        raise ConfigError(f"{where} has an unsupported value", _line_of(text, path))
    return value


_INT_KEYS = {("snapshots", "stride"), ("solver", "max_newton"), ("audit", "battery_size"), ("seed",)}


def _build(cls, data, path, text):
    if not isinstance(data, dict):
        raise ConfigError(f"{'.'.join(path) or 'config'} must be an object", _line_of(text, path))
    obj = cls()
    names = {f.name: f for f in fields(cls)}
    for key, value in data.items():
        if key not in names:
            where = ".".join(path + (key,))
            raise ConfigError(f"unknown key {where!r}", _line_of(text, path + (key,)))
        default = getattr(obj, key)
        sub = path + (key,)
        if is_dataclass(default):
            setattr(obj, key, _build(type(default), value, sub, text))
        else:
            v = _coerce(value, default, sub, text)
            if sub in _INT_KEYS and v is not None:
                if isinstance(v, bool) or not float(v).is_integer():
                    raise ConfigError(f"{'.'.join(sub)} must be an integer", _line_of(text, sub))
                v = int(v)
            setattr(obj, key, v)
    return obj


def _validate(cfg, text):
    def fail(msg, *path):
        raise ConfigError(msg, _line_of(text, path))

    dim = len(cfg.grid.cells)
    if dim not in (1, 2):
        fail("grid.cells must have 1 or 2 entries", "grid", "cells")
    if len(cfg.grid.extents) != dim:
        fail("grid.extents must have one [a, b] pair per axis", "grid", "extents")
    for ext in cfg.grid.extents:
        if not (isinstance(ext, list) and len(ext) == 2 and all(isinstance(x, _NUMERIC) for x in ext)):
            fail("each grid extent must be a pair of numbers", "grid", "extents")
    for n in cfg.grid.cells:
        if not isinstance(n, int) or isinstance(n, bool) or n < 4:
            fail("grid.cells entries must be integers >= 4", "grid", "cells")
    if not (cfg.time.T > 0 and math.isfinite(cfg.time.T)):
        fail("time.T must be positive", "time", "T")
    if not (cfg.time.eps > 0 and cfg.time.eps <= cfg.time.T):
        fail("time.eps must be in (0, T]", "time", "eps")
    if cfg.graph.delta is not None and not cfg.graph.delta > 0:
        fail("graph.delta must be positive", "graph", "delta")
    if cfg.snapshots.stride is not None and cfg.snapshots.stride < 1:
        fail("snapshots.stride must be >= 1", "snapshots", "stride")
    if not cfg.audit.slack >= 0:
        fail("audit.slack must be nonnegative", "audit", "slack")
    if cfg.extension.margin is not None and not cfg.extension.margin > 0:
        fail("extension.margin must be positive", "extension", "margin")


def parse_config(text, source="<string>"):
    """Parse and validate JSON text; every failure is a :class:`ConfigError`."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON: {exc.msg}", exc.lineno) from exc
    cfg = _build(RunConfig, data, (), text)
    _validate(cfg, text)
    try:
        from .suite import build_setup

        build_setup(cfg)
    except ConfigError:
        raise
    except DriftBVError as exc:
        raise ConfigError(f"{source}: {exc}", _guess_line(text, exc)) from exc
    return cfg


def _guess_line(text, exc):
    msg = str(exc).lower()
    m = re.search(r"unknown parameter '(\w+)'", str(exc))
    if m:
        return _line_of(text, (m.group(1),))
    for path in (("bc",), ("field",), ("source",), ("initial",), ("graph",), ("grid",), ("cutoff",), ("extension",)):
        if path[0] in msg:
            return _line_of(text, path)
    name = type(exc).__name__
    guess = {
        "BadBoundarySpec": ("bc",),
        "BadEtaConstants": ("cutoff",),
        "CutoffDoesNotFit": ("cutoff",),
        "ExtensionMarginTooSmall": ("extension",),
        "GridMismatch": ("grid",),
    }.get(name)
    return _line_of(text, guess) if guess else 1


def config_from_dict(data):
    return parse_config(json.dumps(data, indent=2))


def dump_config(cfg):
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


PRESETS = {
    "heat_dirichlet": {
        "name": "heat_dirichlet",
        "grid": {"extents": [[0.0, 1.0]], "cells": [100]},
        "bc": {"dirichlet": ["all"], "neumann": []},
        "graph": {"kind": "identity"},
        "initial": {"kind": "sine", "params": {"modes": [1], "amplitude": 1.0}},
        "time": {"T": 0.1, "eps": 0.001},
    },
    "pme_neumann": {
        "name": "pme_neumann",
        "grid": {"extents": [[0.0, 1.0], [0.0, 1.0]], "cells": [32, 32]},
        "bc": {"dirichlet": [], "neumann": ["all"]},
        "graph": {"kind": "powerlaw", "m": 0.5},
        "field": {"kind": "rotation", "params": {"center": [0.5, 0.5], "rate": 1.0, "cutoff": [0.3, 0.45]}},
        "initial": {"kind": "bump", "params": {"center": [0.35, 0.5], "radius": 0.15, "amplitude": 1.0, "power": 2}},
        "time": {"T": 0.1, "eps": 0.005},
        "audit": {"battery_size": 10},
    },
    "heleshaw_mixed": {
        "name": "heleshaw_mixed",
        "grid": {"extents": [[0.0, 1.0]], "cells": [200]},
        "bc": {"dirichlet": ["left"], "neumann": ["right"]},
        "graph": {"kind": "sign"},
        "field": {"kind": "polynomial", "params": {"components": [[[-0.5, [1]], [0.5, [2]]]]}},
        "source": {"kind": "constant", "params": {"value": 0.5}},
        "initial": {"kind": "indicator", "params": {"lo": [0.4], "hi": [0.8], "value": 1.0}},
        "time": {"T": 0.5, "eps": 0.005},
    },
    "transport_rotation": {
        "name": "transport_rotation",
        "grid": {"extents": [[0.0, 1.0], [0.0, 1.0]], "cells": [128, 128]},
        "bc": {"dirichlet": ["all"], "neumann": []},
        "graph": {"kind": "transport_zero"},
        "field": {"kind": "rotation", "params": {"center": [0.5, 0.5], "rate": 1.0, "cutoff": [0.4, 0.45]}},
        "initial": {"kind": "bump", "params": {"center": [0.65, 0.5], "radius": 0.25, "amplitude": 1.0, "power": 2}},
        "time": {"T": math.pi / 2, "eps": math.pi / 512},
        "cutoff": {"h": 0.05},
        "audit": {"bv": True, "battery_size": 10},
    },
    "transport_outflow": {
        "name": "transport_outflow",
        "grid": {"extents": [[0.0, 1.0]], "cells": [100]},
        "bc": {"dirichlet": ["all"], "neumann": []},
        "graph": {"kind": "transport_zero"},
        "field": {"kind": "radial", "params": {"center": [0.5], "rate": 1.0}},
        "initial": {"kind": "bump", "params": {"center": [0.5], "radius": 0.3, "amplitude": 1.0, "power": 2}},
        "time": {"T": 0.5, "eps": 0.005},
        "extension": {"margin": 0.25},
    },
    "bv_shrinkfield": {
        "name": "bv_shrinkfield",
        "grid": {"extents": [[0.0, 1.0]], "cells": [200]},
        "bc": {"dirichlet": ["all"], "neumann": []},
        "graph": {"kind": "sign"},
        "field": {"kind": "radial", "params": {"center": [0.5], "rate": 1.0}},
        "initial": {"kind": "indicator", "params": {"lo": [0.35], "hi": [0.65], "value": 1.0}},
        "time": {"T": 0.25, "eps": 0.0025},
        "cutoff": {"h": 0.05},
        "audit": {"bv": True},
    },
}


def preset_names():
    return sorted(PRESETS)


def preset(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return config_from_dict(copy.deepcopy(PRESETS[name]))


def load_config(arg):
    """Load a config from a file path or a preset name."""
    path = Path(arg)
    if path.is_file():
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {arg}: {exc}") from exc
        return parse_config(text, source=str(path))
    if arg in PRESETS:
        return preset(arg)
    raise ConfigError(f"{arg}: no such config file or preset")
