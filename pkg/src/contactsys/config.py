"""Experiment configuration files.

A config is a small YAML mapping, one experiment per file::

    kind: systole
    model: hopf(n=1)
    rho: "1 + 0.1*re_z1z2bar"
    s_grid: [0.0]
    seed: 0
    tolerances: {integrator: 1.0e-10, verdict: 1.0e-6}
    params: {expected: 6.283185307179586}

Field expressions use the grammar of :func:`contactsys.fields.parse_field`.
The canonical serialization is ``yaml.safe_dump`` of the fully defaulted
mapping with sorted keys, so ``parse(serialize(c)) == c``.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import yaml

from .errors import ConfigError

KNOWN_KEYS = ("kind", "model", "rho", "jet", "s_grid", "seed", "tolerances", "params", "output")
DEFAULT_TOLERANCES = {"integrator": 1e-10, "verdict": 1e-6}


@dataclass
class ExperimentConfig:
    kind: str
    model: Optional[str] = None          # None: the catalog default for the kind
    rho: str = "1"
    jet: Optional[list] = None
    s_grid: Optional[list] = None
    seed: int = 0
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    params: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def tol(self, name, default=None):
        return float(self.tolerances.get(name, DEFAULT_TOLERANCES.get(name, default)))


def _node_position(node, key):
    """(line, column) of a key's value inside a composed YAML mapping node."""
    if node is None or not isinstance(node, yaml.MappingNode):
        return None, None
    for k, v in node.value:
        if getattr(k, "value", None) == key:
            return v.start_mark.line + 1, v.start_mark.column + 1
    return None, None


def parse_config(text, kinds=None):
    """Parse and validate config text; raises :class:`ConfigError` with a position."""
    try:
        data = yaml.safe_load(text)
        node = yaml.compose(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigError(str(exc.problem), mark.line + 1, mark.column + 1) from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", 1, 1)

    def fail(key, msg, col_offset=None):
        line, col = _node_position(node, key)
        if col is not None and col_offset is not None:
            col += col_offset
        raise ConfigError(f"{key}: {msg}", line, col)

    unknown = sorted(set(data) - set(KNOWN_KEYS))
    if unknown:
        fail(unknown[0], "unknown key")
    if "kind" not in data:
        raise ConfigError("missing required key 'kind'", 1, 1)
    kind = data["kind"]
    if kinds is not None and kind not in kinds:
        fail("kind", f"unknown experiment kind {kind!r}; see `contactsys list`")

    cfg = ExperimentConfig(kind=str(kind))
    if data.get("model") is not None:
        cfg.model = str(data["model"])
    if data.get("rho") is not None:
        cfg.rho = str(data["rho"])
    if data.get("jet") is not None:
        if not isinstance(data["jet"], list) or not data["jet"]:
            fail("jet", "must be a non-empty list of field expressions")
        cfg.jet = [str(c) for c in data["jet"]]
    if data.get("s_grid") is not None:
        grid = data["s_grid"]
        if not isinstance(grid, list):
            fail("s_grid", "must be a list")
        try:
            grid = [float(s) for s in grid]
        except (TypeError, ValueError):
            fail("s_grid", "entries must be numbers")
        if not all(math.isfinite(s) for s in grid):
            fail("s_grid", "entries must be finite")
        if 0.0 not in grid:
            fail("s_grid", "must contain 0")
        cfg.s_grid = grid
    if "seed" in data:
        if isinstance(data["seed"], bool) or not isinstance(data["seed"], int):
            fail("seed", "must be an integer")
        cfg.seed = int(data["seed"])
    if "tolerances" in data:
        tol = data["tolerances"]
        if not isinstance(tol, dict):
            fail("tolerances", "must be a mapping")
        merged = dict(DEFAULT_TOLERANCES)
        for k, v in tol.items():
            try:
                v = float(v)
            except (TypeError, ValueError):
                fail("tolerances", f"{k} is not a number")
            if not (v > 0 and math.isfinite(v)):
                fail("tolerances", f"{k} must be positive")
            merged[str(k)] = v
        cfg.tolerances = merged
    for key in ("params", "output"):
        if key in data:
            if not isinstance(data[key], dict):
                fail(key, "must be a mapping")
            setattr(cfg, key, dict(data[key]))
    return cfg


def load_config(path, kinds=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, kinds)


def serialize_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=False, allow_unicode=True)


def canonical(text, kinds=None) -> str:
    return serialize_config(parse_config(text, kinds))
