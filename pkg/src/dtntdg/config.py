"""Run configurations in TOML.

Numeric fields accept plain numbers, ``[re, im]`` pairs for complex values,
or short arithmetic strings such as ``"2*pi"``, ``"-pi/4"``, ``"1.49**2"``
and ``"(1.25+0.1j)**2"``.  A minimal file::

    [problem]
    L = "2*pi"
    H = 3
    k = 5
    theta = "-pi/3"
    eps_minus = 1.5

    [[regions]]
    rect = [0, "2*pi", -3, 0]
    eps = 1.5

    [mesh]
    h = 1.5

    [discretization]
    p = 20
    M = "auto"
"""
from __future__ import annotations

import ast
import math
import operator
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

import numpy as np

from .errors import ConfigError, GeometryError
from .geometry import ProblemConfig, Region, ingest_mesh, rectangle, rectangle_mesh
from .spectral import auto_truncation

_NAMES = {"pi": math.pi, "e": math.e, "j": 1j}
_FUNCS = {"sqrt": np.emath.sqrt, "cos": math.cos, "sin": math.sin, "exp": math.exp}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def evaluate_expression(text, name="value"):
    """Evaluate a restricted arithmetic expression (numbers, pi, + - * / **)."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)):
            return node.value
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and len(node.args) == 1:
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise ConfigError(f"{name}: unsupported expression {text!r}", name)

    try:
        tree = ast.parse(str(text).strip(), mode="eval")
    except SyntaxError:
        raise ConfigError(f"{name}: cannot parse {text!r}", name) from None
    return ev(tree)


def number(value, name, real=True):
    """Coerce a config value to a float (or complex when ``real`` is false)."""
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected a number, got {value!r}", name)
    if isinstance(value, (list, tuple)) and len(value) == 2 and not real:
        return complex(number(value[0], name), number(value[1], name))
    if isinstance(value, (int, float)):
        out = value
    elif isinstance(value, str):
        out = evaluate_expression(value, name)
    else:
        raise ConfigError(f"{name}: expected a number, got {value!r}", name)
    out = complex(out)
    if real:
        if out.imag != 0:
            raise ConfigError(f"{name}: expected a real number, got {out}", name)
        return out.real
    return out if out.imag != 0 else complex(out.real, 0.0)


@dataclass
class Case:
    """Everything a run needs: physics, mesh recipe, discretization, study."""

    config: ProblemConfig
    h: float = 1.0
    x_breaks: tuple = ()
    y_breaks: tuple = ()
    mesh_file: str | None = None
    p: int = 10
    M: int | None = None
    rotation: float = 0.0
    reference: dict = field(default_factory=dict)
    study: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    modes: dict = field(default_factory=dict)
    extended: dict = field(default_factory=dict)
    name: str = "case"

    def mesh(self, config=None, h=None):
        config = config or self.config
        if self.mesh_file:
            return ingest_mesh(self.mesh_file, config)
        return rectangle_mesh(config, h or self.h, self.x_breaks, self.y_breaks)

    def truncation(self, config=None):
        config = config or self.config
        if self.M is not None:
            return self.M
        if config.eps_minus.imag != 0:
            raise ConfigError("discretization.M: 'auto' requires a real eps_minus; set M explicitly",
                              "discretization.M")
        return auto_truncation(config)

    def oracle(self):
        """``config -> field`` for the configured analytic reference, or None."""
        from . import oracles

        kind = self.reference.get("kind", "refined")
        if kind == "two_layer":
            return oracles.two_layer
        if kind == "three_layer":
            d = number(self.reference["d"], "reference.d")
            eps_in = number(self.reference["eps_in"], "reference.eps_in", real=False)
            return lambda cfg: oracles.three_layer(cfg, d, eps_in)
        if kind == "incident":
            return oracles.incident_wave
        if kind == "refined":
            return None
        raise ConfigError(f"reference.kind: unknown reference {kind!r}", "reference.kind")


def _polygon(entry, name):
    if "rect" in entry:
        vals = [number(v, f"{name}.rect") for v in entry["rect"]]
        if len(vals) != 4:
            raise ConfigError(f"{name}.rect: expected [x0, x1, y0, y1]", f"{name}.rect")
        return rectangle(*vals)
    if "polygon" in entry:
        return np.array([[number(v, f"{name}.polygon") for v in pt] for pt in entry["polygon"]])
    raise ConfigError(f"{name}: needs 'rect' or 'polygon'", name)


def _set_path(data, dotted, raw):
    """Apply ``section.key=value``; values are parsed as TOML when possible."""
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    keys = dotted.split(".")
    if len(keys) == 1:
        keys = [_default_section(keys[0]), keys[0]]
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {dotted}: '{key}' is not a section", dotted)
    node[keys[-1]] = value


def _default_section(key):
    if key in ("p", "M", "rotation", "a", "b", "d"):
        return "discretization"
    if key in ("h",):
        return "mesh"
    return "problem"


def parse_case(data, overrides=(), name="case", base_dir=None):
    """Build a :class:`Case` from a parsed TOML dictionary."""
    import copy

    data = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}", item)
        key, raw = item.split("=", 1)
        _set_path(data, key.strip(), raw.strip())

    prob = data.get("problem")
    if not isinstance(prob, dict):
        raise ConfigError("problem: missing [problem] section", "problem")
    known = {"L", "H", "k", "theta", "eps_plus", "eps_minus"}
    unknown = set(prob) - known
    if unknown:
        field_name = f"problem.{sorted(unknown)[0]}"
        raise ConfigError(f"{field_name}: unknown key", field_name)
    for key in ("L", "H", "k", "theta"):
        if key not in prob:
            raise ConfigError(f"problem.{key}: required", f"problem.{key}")
    disc = data.get("discretization", {})
    flux = tuple(number(disc.get(key, 0.5), f"discretization.{key}") for key in ("a", "b", "d"))
    regions = []
    for i, entry in enumerate(data.get("regions", [])):
        if "eps" not in entry:
            raise ConfigError(f"regions[{i}].eps: required", f"regions[{i}].eps")
        regions.append(Region(_polygon(entry, f"regions[{i}]"), number(entry["eps"], f"regions[{i}].eps", real=False)))
    obstacles = [_polygon(entry, f"obstacles[{i}]") for i, entry in enumerate(data.get("obstacles", []))]
    values = {}
    for key in ("L", "H", "k", "theta"):
        values[key] = number(prob[key], f"problem.{key}")
    values["eps_plus"] = number(prob.get("eps_plus", 1.0), "problem.eps_plus")
    values["eps_minus"] = number(prob.get("eps_minus", 1.0), "problem.eps_minus", real=False)
    try:
        config = ProblemConfig(regions=tuple(regions), obstacles=tuple(obstacles), flux_params=flux, **values)
    except GeometryError as exc:
        msg = str(exc)
        guess = next((f"problem.{k}" for k in ("theta", "eps_plus", "eps_minus", "L", "H", "k") if k in msg), "problem")
        if "flux" in msg:
            guess = "discretization"
        elif "obstacle" in msg:
            guess = "obstacles"
        raise ConfigError(f"{guess}: {msg}", guess) from None

    mesh = data.get("mesh", {})
    mesh_file = mesh.get("file")
    if mesh_file and base_dir is not None and not Path(mesh_file).is_absolute():
        mesh_file = str(Path(base_dir) / mesh_file)
    h = number(mesh.get("h", 1.0), "mesh.h")
    if h <= 0:
        raise ConfigError("mesh.h: must be positive", "mesh.h")
    p = disc.get("p", 10)
    if isinstance(p, bool) or not isinstance(p, int) or p < 1:
        raise ConfigError(f"discretization.p: expected a positive integer, got {p!r}", "discretization.p")
    M = disc.get("M", "auto")
    if M == "auto":
        M = None
    elif isinstance(M, bool) or not isinstance(M, int) or M < 0:
        raise ConfigError(f"discretization.M: expected 'auto' or a non-negative integer, got {M!r}", "discretization.M")
    case = Case(
        config=config,
        h=h,
        x_breaks=tuple(number(v, "mesh.x_breaks") for v in mesh.get("x_breaks", [])),
        y_breaks=tuple(number(v, "mesh.y_breaks") for v in mesh.get("y_breaks", [])),
        mesh_file=mesh_file,
        p=p,
        M=M,
        rotation=number(disc.get("rotation", 0.0), "discretization.rotation"),
        reference=dict(data.get("reference", {})),
        study=dict(data.get("study", {})),
        output=dict(data.get("output", {})),
        modes=dict(data.get("modes", {})),
        extended=dict(data.get("extended", {})),
        name=data.get("name", name),
    )
    case.oracle()  # validates the reference section early
    return case


def load_case(path, overrides=()):
    """Read a TOML file (or the name of a bundled example) into a :class:`Case`."""
    path = Path(path)
    if not path.exists() and not path.suffix:
        bundled = resources.files("dtntdg") / "configs" / f"{path.name}.toml"
        if bundled.is_file():
            path = Path(str(bundled))
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path} ({exc.strerror})", "config") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config: invalid TOML in {path}: {exc}", "config") from None
    return parse_case(data, overrides, name=path.stem, base_dir=path.parent)


def bundled_cases():
    """Names of the example configurations shipped with the package."""
    root = resources.files("dtntdg") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def study_values(study):
    """Sweep values from ``values = [...]`` or ``range = [start, stop, step]`` (inclusive)."""
    if "values" in study:
        return tuple(number(v, "study.values") for v in study["values"])
    if "range" in study:
        start, stop, step = (number(v, "study.range") for v in study["range"])
        n = int(round((stop - start) / step)) + 1
        return tuple(start + i * step for i in range(n))
    if "center" in study:
        c = number(study["center"], "study.center")
        w = number(study.get("width", 1e-4), "study.width")
        n = int(study.get("points", 21))
        return tuple(np.linspace(c - w / 2, c + w / 2, n))
    raise ConfigError("study.values: give 'values', 'range' or 'center'", "study.values")
