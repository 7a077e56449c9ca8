"""Plain-text ``key=value`` study configuration.

Keys carry a dotted section prefix (``material.young=1.0``). Blank lines
and ``#`` comments are ignored; unknown keys are errors. Load and
modulation entries are arithmetic expressions in ``y1, y2, y3`` built from
numbers, ``+ - * / **``, ``pi`` and the functions in ``FUNCTIONS``.
"""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geometry import SectionSpec
from .material import MaterialField
from .regimes import as_fraction, classify

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs,
             "tanh": np.tanh, "log": np.log}
CONSTANTS = {"pi": math.pi}
VARIABLES = ("y1", "y2", "y3")

_H_KEYS = ("h11", "h22", "h33", "h23", "h13", "h12")
_H_INDEX = {"h11": (0, 0), "h22": (1, 1), "h33": (2, 2), "h23": (1, 2), "h13": (0, 2), "h12": (0, 1)}

DEFAULTS = {
    "material.kind": "isotropic",
    "material.young": "1.0",
    "material.poisson": "0.3",
    "material.voigt": "",
    "material.modulation": "",
    "section.shape": "disc",
    "section.radius": "1.0",
    "section.width": "1.0",
    "section.height": "1.0",
    "patch.shape": "disc",
    "patch.radius": "1.0",
    "patch.width": "1.0",
    "patch.height": "1.0",
    "load.f1": "0",
    "load.f2": "0",
    "load.f3": "0",
    **{f"load.{k}": "0" for k in _H_KEYS},
    "regime.kappa": "1.0",
    "regime.p": "2",
    "study.eps": "0.2, 0.1, 0.05",
    "mesh.axial_n": "40",
    "mesh.axial_h_factor": "0.5",
    "mesh.axial_refine": "1",
    "mesh.n_side": "8",
    "mesh.grading": "1.3",
    "limit.n_axial": "32",
    "limit.refine": "3",
    "limit.section_h": "0.05",
    "capacity.L": "16",
    "capacity.n_side": "6",
    "capacity.grading": "1.3",
    "solver.tol": "1e-10",
    "solver.maxit": "0",
    "solver.method": "pcg",
    "output.dir": "out",
}


class _Checker(ast.NodeVisitor):
    _ALLOWED = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name, ast.Call, ast.Load,
                ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)

    def generic_visit(self, node):
        if not isinstance(node, self._ALLOWED):
            raise ConfigError(f"disallowed syntax in expression: {type(node).__name__}")
        if isinstance(node, ast.Name) and node.id not in (*VARIABLES, *CONSTANTS, *FUNCTIONS):
            raise ConfigError(f"unknown name {node.id!r} in expression")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in FUNCTIONS):
            raise ConfigError("only the listed functions may be called")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigError("only numeric constants are allowed")
        super().generic_visit(node)


@dataclass(frozen=True)
class Expression:
    """Compiled scalar field of ``y = (y1, y2, y3)``."""

    text: str

    def __post_init__(self):
        try:
            tree = ast.parse(self.text.strip() or "0", mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"bad expression {self.text!r}: {exc.msg}") from None
        _Checker().visit(tree)
        object.__setattr__(self, "_code", compile(tree, "<config>", "eval"))

    @property
    def is_zero(self):
        try:
            return float(self.text.strip() or "0") == 0.0
        except ValueError:
            return False

    def __call__(self, y):
        y = np.atleast_2d(y)
        env = {"y1": y[:, 0], "y2": y[:, 1], "y3": y[:, 2], **CONSTANTS, **FUNCTIONS}
        val = eval(self._code, {"__builtins__": {}}, env)  # restricted by _Checker
        return np.broadcast_to(np.asarray(val, dtype=float), (len(y),)).copy()


@dataclass(frozen=True)
class LoadSpec:
    f: tuple   # three Expressions
    h: tuple   # six Expressions, order h11 h22 h33 h23 h13 h12

    @property
    def f_is_zero(self):
        return all(e.is_zero for e in self.f)

    @property
    def h_is_zero(self):
        return all(e.is_zero for e in self.h)

    def f_field(self):
        if self.f_is_zero:
            return None
        return lambda y: np.column_stack([e(y) for e in self.f])

    def h_field(self):
        if self.h_is_zero:
            return None

        def h(y):
            H = np.zeros((len(y), 3, 3))
            for key, e in zip(_H_KEYS, self.h):
                i, j = _H_INDEX[key]
                v = e(y)
                H[:, i, j] = v
                H[:, j, i] = v
            return H
        return h

    def scaled(self, s):
        wrap = lambda e: Expression(f"({s!r}) * ({e.text})")
        return LoadSpec(tuple(map(wrap, self.f)), tuple(map(wrap, self.h)))


@dataclass(frozen=True)
class StudyConfig:
    material: MaterialField
    section: SectionSpec
    patch: SectionSpec
    loads: LoadSpec
    kappa: float
    p: Fraction
    eps: tuple
    axial_n: int = 40
    axial_h_factor: float = 0.5
    axial_refine: int = 1
    n_side: int = 8
    grading: float = 1.3
    limit_n_axial: int = 32
    limit_refine: int = 3
    limit_section_h: float = 0.05
    capacity_L: tuple = (16.0,)
    capacity_n_side: int = 6
    capacity_grading: float = 1.3
    tol: float = 1e-10
    maxit: int | None = None
    method: str = "pcg"
    out_dir: str = "out"
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def regime(self):
        return classify(self.kappa, self.p)

    def r_eps(self, eps):
        return self.regime.r_eps(eps)

    def validate(self):
        e = np.asarray(self.eps, dtype=float)
        if len(e) == 0 or np.any(e <= 0):
            raise ConfigError("study.eps must hold positive values")
        if np.any(np.diff(e) >= 0):
            raise ConfigError("study.eps must be strictly decreasing")
        for name in ("axial_n", "axial_h_factor", "axial_refine", "n_side", "grading", "limit_n_axial",
                     "limit_refine", "limit_section_h", "capacity_n_side", "capacity_grading", "tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.grading < 1 or self.capacity_grading <= 1:
            raise ConfigError("grading ratios must be at least 1 (capacity: above 1)")
        if any(L < 4 * self.patch.diameter for L in self.capacity_L):
            raise ConfigError("capacity.L must be at least 4 diam(S_0)")
        if self.section.shape != self.patch.shape:
            raise ConfigError("section and patch must share a shape kind")
        for eps in self.eps:
            if not _patch_inside(self.section, self.patch.scaled(self.r_eps(eps))):
                raise ConfigError(f"r_eps S_0 is not inside S for eps={eps}")
        if self.method not in ("pcg", "direct"):
            raise ConfigError("solver.method must be pcg or direct")
        return self

    def with_loads(self, loads):
        return replace(self, loads=loads)


def _patch_inside(S, P):
    if S.shape == "disc":
        return P.radius < S.radius
    return P.width < S.width and P.height < S.height


def parse_text(text):
    """``key=value`` pairs from config text; raises ConfigError on unknown keys."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        out[key] = value
    return out


def _floats(s):
    return tuple(float(v) for v in s.replace(",", " ").split())


def build_config(values=None):
    """StudyConfig from a mapping of overrides on top of DEFAULTS."""
    values = dict(values or {})
    unknown = set(values) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    v = {**DEFAULTS, **{k: str(x) for k, x in values.items()}}
    try:
        section = _section(v, "section")
        patch = _section(v, "patch")
        modulation = None
        if v["material.modulation"].strip():
            expr = Expression(v["material.modulation"])
            modulation = expr
        if v["material.kind"] == "isotropic":
            material = MaterialField.isotropic(float(v["material.young"]), float(v["material.poisson"]),
                                               modulation=modulation, section=section)
        elif v["material.kind"] == "voigt":
            material = MaterialField.from_voigt(_floats(v["material.voigt"]), modulation=modulation,
                                                section=section)
        else:
            raise ConfigError("material.kind must be isotropic or voigt")
        loads = LoadSpec(tuple(Expression(v[f"load.f{i}"]) for i in (1, 2, 3)),
                         tuple(Expression(v[f"load.{k}"]) for k in _H_KEYS))
        maxit = int(v["solver.maxit"])
        cfg = StudyConfig(
            material=material, section=section, patch=patch, loads=loads,
            kappa=float(v["regime.kappa"]), p=as_fraction(v["regime.p"].strip()),
            eps=_floats(v["study.eps"]),
            axial_n=int(v["mesh.axial_n"]), axial_h_factor=float(v["mesh.axial_h_factor"]),
            axial_refine=int(v["mesh.axial_refine"]),
            n_side=int(v["mesh.n_side"]), grading=float(v["mesh.grading"]),
            limit_n_axial=int(v["limit.n_axial"]), limit_refine=int(v["limit.refine"]),
            limit_section_h=float(v["limit.section_h"]),
            capacity_L=_floats(v["capacity.L"]), capacity_n_side=int(v["capacity.n_side"]),
            capacity_grading=float(v["capacity.grading"]),
            tol=float(v["solver.tol"]), maxit=maxit if maxit > 0 else None, method=v["solver.method"],
            out_dir=v["output.dir"], raw=v,
        )
    except ConfigError:
        raise
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def _section(v, prefix):
    shape = v[f"{prefix}.shape"]
    if shape == "disc":
        return SectionSpec.disc(float(v[f"{prefix}.radius"]))
    if shape == "rect":
        return SectionSpec.rect(float(v[f"{prefix}.width"]), float(v[f"{prefix}.height"]))
    raise ConfigError(f"{prefix}.shape must be disc or rect")


def load_config(path, overrides=None):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    values = parse_text(text)
    values.update(overrides or {})
    return build_config(values)
