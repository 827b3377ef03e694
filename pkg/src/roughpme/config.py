"""Flat ``key = value`` experiment configuration and the closed-form initial-data catalog.

Function-style values use ``name(k=v, ...)``; several coefficients are
separated by ``;``.  Example::

    experiment = contraction
    m = 2
    T = 0.1
    dt = 1e-3
    nodes = 129
    coefficients = cosine(a=0.5, b=0.5)
    initial = bump(center=0.4, width=0.2)
    initial2 = bump(center=0.6, width=0.2, amplitude=0.5)
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields

import numpy as np

from .domain import CoefficientSpec, Grid, build_grid
from .errors import ConfigError, ParameterError

EXPERIMENTS = ("contraction", "convergence", "cocycle", "positivity", "diagnose", "solve")

_CALL = re.compile(r"^\s*([A-Za-z_]\w*)\s*(?:\((.*)\))?\s*$")


def _parse_call(text: str):
    """``name(k=v, ...)`` -> ``(name, {k: float})``."""
    match = _CALL.match(text)
    if not match:
        raise ValueError(f"cannot parse {text!r} as name(key=value, ...)")
    name, body = match.group(1), match.group(2)
    params = {}
    if body and body.strip():
        for item in body.split(","):
            if "=" not in item:
                raise ValueError(f"expected key=value, got {item.strip()!r}")
            k, v = (s.strip() for s in item.split("=", 1))
            params[k] = float(v)
    return name, params


# -- initial data -------------------------------------------------------------

def _bump_profile(grid: Grid, center, width, amplitude):
    out = np.full(grid.shape, float(amplitude))
    for ax in range(grid.d):
        s = (grid.coords[ax] - center[ax]) / width
        inside = np.abs(s) < 1
        b = np.zeros(grid.shape)
        b[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
        out = out * b
    return out


def barenblatt(grid: Grid, m: float, t: float, radius_t0: float, t0: float, center=None):
    """Self-similar source solution with support radius ``radius_t0`` at ``t0``, evaluated at ``t``.

    ``u = t^-a (C - k |x - c|^2 t^-2b)_+^(1/(m-1))`` with ``a = d/(d(m-1)+2)``,
    ``b = a/d``, ``k = a(m-1)/(2md)`` and ``C = k r0^2 t0^-2b``.
    """
    if not m > 1:
        raise ParameterError("the Barenblatt profile needs m > 1")
    d = grid.d
    a = d / (d * (m - 1) + 2)
    b = a / d
    k = a * (m - 1) / (2 * m * d)
    C = k * radius_t0**2 * t0 ** (-2 * b)
    center = np.asarray(center if center is not None else np.asarray(grid.extents) / 2, dtype=float)
    r2 = sum((grid.coords[ax] - center[ax]) ** 2 for ax in range(d))
    return t ** (-a) * np.maximum(C - k * r2 * t ** (-2 * b), 0.0) ** (1.0 / (m - 1))


def barenblatt_radius(m: float, d: int, radius_t0: float, t0: float, t: float) -> float:
    a = d / (d * (m - 1) + 2)
    return radius_t0 * (t / t0) ** (a / d)


INITIAL_KINDS = {
    "sine": {"mode": 1.0, "amplitude": 1.0},
    "bump": {"center": None, "width": 0.2, "amplitude": 1.0},
    "pair": {"c1": None, "c2": None, "width": 0.1, "amplitude": 1.0, "amplitude2": 1.0},
    "barenblatt": {"t0": 0.05, "radius": 0.2, "center": None},
}


@dataclass(frozen=True)
class InitialSpec:
    kind: str
    params: dict

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise ParameterError(f"unknown initial data {self.kind!r}; choose from {sorted(INITIAL_KINDS)}")
        unknown = set(self.params) - set(INITIAL_KINDS[self.kind])
        if unknown:
            raise ParameterError(f"unknown parameter(s) {sorted(unknown)} for {self.kind}")

    def get(self, key):
        return self.params.get(key, INITIAL_KINDS[self.kind][key])

    def evaluate(self, grid: Grid, m: float) -> np.ndarray:
        ext = np.asarray(grid.extents, dtype=float)
        if self.kind == "sine":
            k = self.get("mode")
            out = np.full(grid.shape, self.get("amplitude"))
            for ax in range(grid.d):
                out = out * np.sin(k * np.pi * grid.coords[ax] / ext[ax])
        elif self.kind == "bump":
            c = self.get("center")
            center = ext / 2 if c is None else np.full(grid.d, c)
            out = _bump_profile(grid, center, self.get("width"), self.get("amplitude"))
        elif self.kind == "pair":
            c1 = self.get("c1")
            c2 = self.get("c2")
            c1 = ext / 3 if c1 is None else np.full(grid.d, c1)
            c2 = 2 * ext / 3 if c2 is None else np.full(grid.d, c2)
            w = self.get("width")
            out = (_bump_profile(grid, c1, w, self.get("amplitude"))
                   + _bump_profile(grid, c2, w, self.get("amplitude2")))
        else:
            c = self.get("center")
            center = None if c is None else np.full(grid.d, c)
            t0 = self.get("t0")
            out = barenblatt(grid, m, t0, self.get("radius"), t0, center)
        out = np.where(grid.boundary, 0.0, out)
        return out


# -- experiment config ---------------------------------------------------------

def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    m: float
    T: float
    eta: float = 0.0
    epsilon: float = 0.05
    dt: float = 1e-3
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    d: int = 1
    extent: tuple = (1.0,)
    nodes: int = 129
    coefficients: tuple = ()
    hurst: float = 0.5
    seed: int = 0
    path_dt: float | None = None
    path_csv: str | None = None
    initial: InitialSpec = field(default_factory=lambda: InitialSpec("bump", {}))
    initial2: InitialSpec | None = None
    record_every: int = 1
    levels: int = 3
    ensemble: int = 1
    split: float | None = None
    n_xi: int = 256
    delta: float | None = None
    out: str | None = None

    def grid(self) -> Grid:
        return build_grid(self.d, self.extent, self.nodes)

    def echo(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, InitialSpec):
                v = {"kind": v.kind, **v.params}
            elif f.name == "coefficients":
                v = [{"kind": c.kind, **c.params} for c in v]
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


def _coefficients(text: str):
    text = text.strip()
    if text.lower() in ("none", "0", ""):
        return ()
    specs = []
    for part in text.split(";"):
        name, params = _parse_call(part)
        specs.append(CoefficientSpec(name, params))
    return tuple(specs)


def _initial(text: str):
    name, params = _parse_call(text)
    return InitialSpec(name, params)


def _int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _extent(text: str) -> tuple:
    return tuple(float(s) for s in text.replace(",", " ").split())


def _experiment(text: str) -> str:
    if text not in EXPERIMENTS:
        raise ValueError(f"experiment must be one of {', '.join(EXPERIMENTS)}")
    return text


# key -> (parser, validator, message)
_KEYS = {
    "experiment": (_experiment, None, ""),
    "m": (float, _pos, "m > 0"),
    "T": (float, _pos, "T > 0"),
    "eta": (float, _nonneg, "eta >= 0"),
    "epsilon": (float, _pos, "epsilon > 0"),
    "dt": (float, _pos, "dt > 0"),
    "newton_tol": (float, _pos, "newton_tol > 0"),
    "newton_max_iter": (_int, _pos, "newton_max_iter >= 1"),
    "d": (_int, lambda v: v in (1, 2), "d in {1, 2}"),
    "extent": (_extent, lambda v: len(v) >= 1 and all(x > 0 for x in v), "positive extents"),
    "nodes": (_int, lambda v: v >= 3, "nodes >= 3"),
    "coefficients": (_coefficients, None, ""),
    "hurst": (float, lambda v: 0 < v < 1, "0 < hurst < 1"),
    "seed": (_int, _nonneg, "seed >= 0"),
    "path_dt": (float, _pos, "path_dt > 0"),
    "path_csv": (str, None, ""),
    "initial": (_initial, None, ""),
    "initial2": (_initial, None, ""),
    "record_every": (_int, _pos, "record_every >= 1"),
    "levels": (_int, lambda v: v >= 1, "levels >= 1"),
    "ensemble": (_int, _pos, "ensemble >= 1"),
    "split": (float, _pos, "split > 0"),
    "n_xi": (_int, lambda v: v >= 2 and v % 2 == 0, "n_xi even and >= 2"),
    "delta": (float, lambda v: 0 < v <= 1, "0 < delta <= 1"),
    "out": (str, None, ""),
}
_REQUIRED = ("experiment", "m", "T")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a flat ``key = value`` config; errors name the offending line."""
    values = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first on line {lines[key]})", lineno)
        parser, check, what = _KEYS[key]
        try:
            parsed = parser(val)
        except (ValueError, ParameterError) as exc:
            raise ConfigError(f"invalid value for {key!r}: {exc}", lineno) from None
        if check is not None and not check(parsed):
            raise ConfigError(f"invalid value for {key!r}: need {what}, got {val}", lineno)
        values[key] = parsed
        lines[key] = lineno
    for key in _REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")

    def fail(key, msg):
        raise ConfigError(msg, lines.get(key))

    d = values.get("d", 1)
    ext = values.get("extent", (1.0,))
    if len(ext) == 1:
        ext = ext * d
    elif len(ext) != d:
        fail("extent", f"extent has {len(ext)} entries but d = {d}")
    values["extent"] = ext
    kind = values["experiment"]
    if kind == "contraction" and "initial2" not in values:
        fail("experiment", "contraction needs 'initial2'")
    if kind == "cocycle" and "split" not in values:
        fail("experiment", "cocycle needs 'split'")
    if kind == "convergence" and values.get("levels", 3) < 3:
        fail("levels", "convergence needs levels >= 3")
    for key in ("initial", "initial2"):
        spec = values.get(key)
        if spec is not None and spec.kind == "barenblatt" and values["m"] <= 1:
            fail(key, "barenblatt initial data needs m > 1")
    dt, T = values.get("dt", 1e-3), values["T"]
    if abs(T / dt - round(T / dt)) > 1e-9 * max(1.0, T / dt):
        fail("T", f"T={T} is not a multiple of dt={dt}")
    try:
        cfg = ExperimentConfig(**values)
        cfg.grid()
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None
    if any(not math.isfinite(v) for v in (cfg.m, cfg.T, cfg.dt, cfg.epsilon, cfg.eta)):
        raise ConfigError("non-finite numeric value")
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
