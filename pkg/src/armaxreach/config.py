"""Experiment configuration: JSON schema, line-anchored errors, model assembly."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from json.decoder import scanstring
from pathlib import Path

import jsonschema
import numpy as np

from .models import (
    ArmaxModel,
    InputDecomposition,
    StateSpaceModel,
    UncertaintySpec,
    deadbeat_gain,
    ss_to_armax,
    validate_deadbeat,
)
from .sets import DimensionError, Zonotope

SS_METHOD = "SS"
ALL_METHODS = ("SS", "ARMAX", "ARMAX-DP", "ARMAX-ONESHOT", "ARMAX-ALG1", "ARMAX-ALG2")
STACKED_METHODS = ("ARMAX-ONESHOT", "ARMAX-ALG1", "ARMAX-ALG2")
DEFAULT_METHODS = ("SS", "ARMAX", "ARMAX-DP", "ARMAX-ALG2")

_VECTOR = {"type": "array", "items": {"type": "number"}}
_MATRIX = {"type": "array", "items": _VECTOR}
_SET = {
    "type": "object",
    "properties": {"center": _VECTOR, "generators": _MATRIX, "radius": _VECTOR},
    "required": ["center"],
    "not": {"required": ["generators", "radius"]},
    "additionalProperties": False,
}
_CHANNEL = {
    "type": "object",
    "properties": {"constant": _SET, "per_step": {"type": "array", "items": _SET, "minItems": 1}},
    "minProperties": 1,
    "maxProperties": 1,
    "additionalProperties": False,
}
_SS_MODEL = {
    "type": "object",
    "properties": {
        "type": {"const": "ss"},
        "A": _MATRIX, "B": _MATRIX, "C": _MATRIX, "D": _MATRIX, "M": _MATRIX,
        "p": {"type": "integer", "minimum": 1},
    },
    "required": ["type", "A", "B", "C", "p"],
    "additionalProperties": False,
}
_ARMAX_MODEL = {
    "type": "object",
    "properties": {
        "type": {"const": "armax"},
        "p": {"type": "integer", "minimum": 1},
        "A_bar": {"type": "array", "items": _MATRIX, "minItems": 1},
        "B_bar": {"type": "array", "items": _MATRIX, "minItems": 2},
        "n_u": {"type": "integer", "minimum": 0},
        "n_w": {"type": "integer", "minimum": 0},
        "n_v": {"type": "integer", "minimum": 0},
    },
    "required": ["type", "p", "A_bar", "B_bar", "n_u", "n_w", "n_v"],
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "properties": {
        "model": {
            "type": "object",
            "required": ["type"],
            "properties": {"type": {"enum": ["ss", "armax"]}},
            "if": {"properties": {"type": {"const": "ss"}}},
            "then": _SS_MODEL,
            "else": _ARMAX_MODEL,
        },
        "uncertainty": {
            "type": "object",
            "properties": {
                "U": _CHANNEL, "W": _CHANNEL, "V": _CHANNEL,
                "decomposition": {
                    "type": "object",
                    "properties": {"const": _SET, "offsets": {"anyOf": [_VECTOR, _MATRIX]}},
                    "required": ["const", "offsets"],
                    "additionalProperties": False,
                },
            },
            "required": ["U", "W", "V"],
            "additionalProperties": False,
        },
        "y_init": _MATRIX,
        "k_h": {"type": "integer", "minimum": 0},
        "k_init": {"type": ["integer", "null"]},
        "methods": {"type": "array", "items": {"enum": list(ALL_METHODS)}, "uniqueItems": True},
        "n_samples": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "svg_dims": {"type": "array", "items": {"type": "integer", "minimum": 0},
                     "minItems": 2, "maxItems": 2},
        "outputs": {
            "type": "object",
            "properties": {k: {"type": "string", "minLength": 1}
                           for k in ("hulls", "containment", "meta", "svg")},
            "additionalProperties": False,
        },
    },
    "required": ["model", "uncertainty", "y_init", "k_h"],
    "additionalProperties": False,
}

DEFAULT_OUTPUTS = {"hulls": "hulls.csv", "containment": "containment.csv",
                   "meta": "meta.json", "svg": "reach.svg"}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` points into the source text when known."""

    def __init__(self, message: str, path=(), source: str | None = None, line: int | None = None):
        self.path = tuple(path)
        self.source = source
        self.line = line
        self.detail = message
        super().__init__(self.format())

    def format(self) -> str:
        where = ".".join(str(p) for p in self.path)
        prefix = f"{self.source or '<config>'}:{self.line or 1}: "
        return prefix + (f"{where}: {self.detail}" if where else self.detail)


def _skip_ws(text: str, pos: int) -> int:
    while pos < len(text) and text[pos] in " \t\r\n":
        pos += 1
    return pos


def locate(text: str, path) -> int:
    """1-based line of the value at ``path`` (keys and list indices).

    Falls back to the deepest enclosing value that could be found.
    """
    dec = json.JSONDecoder()
    pos = _skip_ws(text, 0)
    try:
        for key in path:
            if pos >= len(text):
                break
            if text[pos] == "{" and isinstance(key, str):
                pos = _skip_ws(text, pos + 1)
                while text[pos] != "}":
                    name, pos = scanstring(text, pos + 1)
                    pos = _skip_ws(text, _skip_ws(text, pos) + 1)  # past ':'
                    if name == key:
                        break
                    _, pos = dec.raw_decode(text, pos)
                    pos = _skip_ws(text, pos)
                    if text[pos] == ",":
                        pos = _skip_ws(text, pos + 1)
                else:
                    break
            elif text[pos] == "[" and isinstance(key, int):
                pos = _skip_ws(text, pos + 1)
                for _ in range(key):
                    if text[pos] == "]":
                        break
                    _, pos = dec.raw_decode(text, pos)
                    pos = _skip_ws(text, pos)
                    if text[pos] == ",":
                        pos = _skip_ws(text, pos + 1)
            else:
                break
    except (ValueError, IndexError):
        pass
    return text.count("\n", 0, min(pos, len(text))) + 1


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    The model is kept in its source form; :meth:`armax` performs the
    state-space conversion (which may fail numerically) on demand.
    """

    raw: dict
    source: str = "<config>"
    text: str = ""
    _armax: ArmaxModel | None = field(default=None, repr=False)
    _M: np.ndarray | None = field(default=None, repr=False)
    _residual: float | None = field(default=None, repr=False)

    @property
    def model_type(self) -> str:
        return self.raw["model"]["type"]

    @property
    def p(self) -> int:
        return int(self.raw["model"]["p"])

    @property
    def k_h(self) -> int:
        return int(self.raw["k_h"])

    @property
    def k_init(self) -> int | None:
        return self.raw.get("k_init")

    @property
    def methods(self) -> list:
        if "methods" in self.raw:
            return list(self.raw["methods"])
        return [m for m in DEFAULT_METHODS if m != SS_METHOD or self.model_type == "ss"]

    @property
    def n_samples(self) -> int:
        return int(self.raw.get("n_samples", 0))

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def svg_dims(self) -> tuple:
        return tuple(self.raw.get("svg_dims", (0, 1)))

    @property
    def outputs(self) -> dict:
        return {**DEFAULT_OUTPUTS, **self.raw.get("outputs", {})}

    @property
    def y_init(self) -> np.ndarray:
        return np.asarray(self.raw["y_init"], dtype=float)

    def error(self, message: str, *path) -> ConfigError:
        return ConfigError(message, path, self.source, locate(self.text, path) if self.text else None)

    def state_space(self) -> StateSpaceModel:
        if self.model_type != "ss":
            raise self.error("a state-space model is required", "model", "type")
        m = self.raw["model"]
        return StateSpaceModel(m["A"], m["B"], m["C"], m.get("D"))

    def armax(self) -> ArmaxModel:
        """The ARMAX model; state-space sources are converted (``ConversionError`` on failure)."""
        if self._armax is None:
            m = self.raw["model"]
            if self.model_type == "armax":
                self._armax = ArmaxModel(m["A_bar"], m["B_bar"], m["n_u"], m["n_w"], m["n_v"])
            else:
                ss = self.state_space()
                M = np.asarray(m["M"], dtype=float) if "M" in m else deadbeat_gain(ss, self.p)
                self._residual = validate_deadbeat(ss, M, self.p)
                self._M = M
                self._armax = ss_to_armax(ss, M, self.p)
        return self._armax

    @property
    def observer_gain(self) -> np.ndarray | None:
        self.armax()
        return self._M

    @property
    def nilpotency_residual(self) -> float | None:
        self.armax()
        return self._residual

    def last_input_step(self) -> int:
        """Last step at which input sets are read by the requested runs."""
        last = self.p + self.k_h
        if self.n_samples > 0 or any(m in STACKED_METHODS for m in self.methods):
            last += self.p - 1
        return last

    def spec(self) -> UncertaintySpec:
        """A fresh :class:`UncertaintySpec` (own label registry) for one run."""
        unc = self.raw["uncertainty"]
        sets = []
        for name in ("U", "W", "V"):
            ch = unc[name]
            if "constant" in ch:
                sets.append(_zonotope(ch["constant"]))
            else:
                sets.append([_zonotope(s) for s in ch["per_step"]])
        dec = None
        if "decomposition" in unc:
            d = unc["decomposition"]
            dec = InputDecomposition(_zonotope(d["const"]), np.asarray(d["offsets"], dtype=float))
        horizon = self.last_input_step()
        return UncertaintySpec(*sets, horizon=horizon if any(isinstance(s, list) for s in sets) else None,
                               decomposition=dec)


def _zonotope(s: dict) -> Zonotope:
    c = np.asarray(s["center"], dtype=float)
    if "radius" in s:
        r = np.asarray(s["radius"], dtype=float)
        if r.shape != c.shape:
            raise DimensionError(f"radius has length {r.size}, center has {c.size}")
        return Zonotope.box(c, r)
    if "generators" in s:
        G = np.asarray(s["generators"], dtype=float)
        if G.size == 0:
            G = np.zeros((c.size, 0))
        return Zonotope(c, G)
    return Zonotope.point(c)


def _matrix_shape(x) -> tuple | None:
    rows = [len(r) for r in x]
    if len(set(rows)) > 1:
        return None
    return (len(x), rows[0] if rows else 0)


def _check_dims(cfg: ExperimentConfig):
    raw = cfg.raw
    m = raw["model"]

    def shape(val, *path):
        s = _matrix_shape(val)
        if s is None:
            raise cfg.error("rows have different lengths", *path)
        return s

    if m["type"] == "ss":
        n_x, a2 = shape(m["A"], "model", "A")
        if a2 != n_x:
            raise cfg.error(f"A must be square, got {n_x}x{a2}", "model", "A")
        b1, n_u = shape(m["B"], "model", "B")
        if b1 != n_x:
            raise cfg.error(f"B has {b1} rows, expected {n_x}", "model", "B")
        n_y, c2 = shape(m["C"], "model", "C")
        if c2 != n_x:
            raise cfg.error(f"C has {c2} columns, expected {n_x}", "model", "C")
        if "D" in m and shape(m["D"], "model", "D") != (n_y, n_u):
            raise cfg.error(f"D must be {n_y}x{n_u}", "model", "D")
        if "M" in m and shape(m["M"], "model", "M") != (n_x, n_y):
            raise cfg.error(f"M must be {n_x}x{n_y}", "model", "M")
        n_w, n_v = n_x, n_y
    else:
        p = m["p"]
        if len(m["A_bar"]) != p:
            raise cfg.error(f"expected {p} matrices, got {len(m['A_bar'])}", "model", "A_bar")
        if len(m["B_bar"]) != p + 1:
            raise cfg.error(f"expected {p + 1} matrices, got {len(m['B_bar'])}", "model", "B_bar")
        n_u, n_w, n_v = m["n_u"], m["n_w"], m["n_v"]
        n_y = shape(m["A_bar"][0], "model", "A_bar", 0)[0]
        for i, a in enumerate(m["A_bar"]):
            if shape(a, "model", "A_bar", i) != (n_y, n_y):
                raise cfg.error(f"must be {n_y}x{n_y}", "model", "A_bar", i)
        for i, b in enumerate(m["B_bar"]):
            if shape(b, "model", "B_bar", i) != (n_y, n_u + n_w + n_v):
                raise cfg.error(f"must be {n_y}x{n_u + n_w + n_v}", "model", "B_bar", i)

    dims = {"U": n_u, "W": n_w, "V": n_v}
    unc = raw["uncertainty"]
    need = cfg.last_input_step() + 1
    for name, n in dims.items():
        ch = unc[name]
        kind = "constant" if "constant" in ch else "per_step"
        items = [(ch["constant"], (kind,))] if kind == "constant" else [
            (s, (kind, i)) for i, s in enumerate(ch["per_step"])]
        if kind == "per_step" and len(items) < need:
            raise cfg.error(f"{len(items)} sets given, the requested runs read steps 0..{need - 1}",
                            "uncertainty", name, kind)
        for s, sub in items:
            _check_set(cfg, s, n, ("uncertainty", name) + sub)
    if "decomposition" in unc:
        d = unc["decomposition"]
        n_ut = n_u + n_w + n_v
        _check_set(cfg, d["const"], n_ut, ("uncertainty", "decomposition", "const"))
        off = np.asarray(d["offsets"], dtype=float)
        if off.shape[-1:] != (n_ut,):
            raise cfg.error(f"offsets must have length {n_ut}", "uncertainty", "decomposition", "offsets")

    p = m["p"]
    y_shape = shape(raw["y_init"], "y_init")
    if y_shape != (p, n_y):
        raise cfg.error(f"expected {p} measurements of length {n_y}, got {y_shape[0]}x{y_shape[1]}", "y_init")
    k_init = raw.get("k_init")
    if k_init is not None and k_init < p:
        raise cfg.error(f"k_init must be at least p = {p}", "k_init")
    methods = cfg.methods
    if not methods:
        raise cfg.error("no methods requested; nothing to do", "methods")
    if SS_METHOD in methods and m["type"] != "ss":
        raise cfg.error("the SS method needs a state-space model", "methods")
    if "svg_dims" in raw and max(raw["svg_dims"]) >= n_y:
        raise cfg.error(f"output has {n_y} dimensions", "svg_dims")


def _check_set(cfg: ExperimentConfig, s: dict, n: int, path: tuple):
    if len(s["center"]) != n:
        raise cfg.error(f"center has length {len(s['center'])}, expected {n}", *path, "center")
    if "radius" in s and len(s["radius"]) != n:
        raise cfg.error(f"radius has length {len(s['radius'])}, expected {n}", *path, "radius")
    if "generators" in s:
        G = s["generators"]
        gs = _matrix_shape(G)
        if gs is None or (G and gs[0] != n):
            raise cfg.error(f"generators must be a {n}-row matrix", *path, "generators")


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse and validate config text; raises :class:`ConfigError`."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", (), source, exc.lineno) from None
    validator = jsonschema.Draft202012Validator(SCHEMA)
    err = jsonschema.exceptions.best_match(validator.iter_errors(raw))
    if err is not None:
        path = list(err.absolute_path)
        raise ConfigError(err.message, path, source, locate(text, path))
    cfg = ExperimentConfig(raw=raw, source=source, text=text)
    _check_dims(cfg)
    try:
        cfg.spec()
    except ValueError as exc:
        raise cfg.error(str(exc), "uncertainty") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", (), str(path), None) from None
    return parse_config(text, str(path))


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a config given as a dict (line numbers refer to its JSON dump)."""
    return parse_config(json.dumps(raw, indent=2))
