"""Experiment configuration: a strict TOML schema and field expressions.

Coefficient fields are numbers, expressions in the coordinates (``x``,
``y``, ``xn``; ``x0``, ``x1`` by axis) or ``{table = [...]}`` node tables.
Expressions are parsed with :mod:`ast` and may only use arithmetic, comparisons
and the whitelisted numpy functions in ``FUNCTIONS``.
"""

from __future__ import annotations

import ast
import re
from importlib import resources
from pathlib import Path
from typing import Literal, Union

import numpy as np

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .grid import Grid, build_grid
from .operators import ProblemSpec, check_ellipticity, make_problem

FUNCTIONS = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "where", "minimum", "maximum", "tanh", "sinh", "cosh")
}
CONSTANTS = {"pi": np.pi, "e": np.e}

_ALLOWED = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Compare, ast.BoolOp, ast.Call, ast.Name, ast.Load,
    ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Mod,
    ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq, ast.NotEq, ast.And, ast.Or, ast.BitAnd, ast.BitOr,
)


class ConfigError(ValueError):
    """Config problem with a source location (1-based line and column)."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


def _variables(grid: Grid) -> dict[str, np.ndarray]:
    X = grid.coords
    names = {f"x{k}": X[k] for k in range(grid.dimension)}
    names["x"] = X[0]
    names["xn"] = X[-1]
    if grid.dimension == 2:
        names["y"] = X[1]
    return names


def check_expression(expr: str) -> ast.Expression:
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"invalid expression {expr!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ValueError(f"disallowed syntax {type(node).__name__} in {expr!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in FUNCTIONS):
            raise ValueError(f"unknown function in {expr!r}")
        if isinstance(node, ast.Name) and not (
            node.id in FUNCTIONS or node.id in CONSTANTS or re.fullmatch(r"x\d?|y|xn", node.id)
        ):
            raise ValueError(f"unknown name {node.id!r} in {expr!r}")
    return tree


def evaluate_field(value, grid: Grid) -> np.ndarray:
    """Node values of a number, expression or ``{"table": ...}``."""
    if isinstance(value, dict):
        arr = np.asarray(value["table"], dtype=float)
        if arr.size != grid.size:
            raise ValueError(f"table has {arr.size} entries, grid has {grid.size} nodes")
        return arr.reshape(grid.shape)
    if isinstance(value, (int, float)):
        return np.full(grid.shape, float(value))
    code = compile(check_expression(value), "<field>", "eval")
    ns = {**FUNCTIONS, **CONSTANTS, **_variables(grid)}
    out = eval(code, {"__builtins__": {}}, ns)  # names and nodes whitelisted above
    out = np.array(np.broadcast_to(np.asarray(out, dtype=float), grid.shape))
    if not np.all(np.isfinite(out)):
        raise ValueError(f"expression {value!r} is not finite on the grid")
    return out


FieldValue = Union[float, str, dict]


def _check_field(v):
    if isinstance(v, dict):
        if set(v) != {"table"}:
            raise ValueError("a table field needs exactly one key, 'table'")
    elif isinstance(v, str):
        check_expression(v)
    elif isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"field must be a number, expression or table, got {v!r}")
    return v


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridBlock(Strict):
    dimension: Literal[1, 2] = 1
    extents: list[float] = [1.0]
    counts: list[int] = [65]

    @model_validator(mode="after")
    def _shape(self):
        if len(self.extents) != self.dimension or len(self.counts) != self.dimension:
            raise ValueError("extents and counts need one entry per axis")
        return self


class CoefficientBlock(Strict):
    a: Union[FieldValue, list[list[FieldValue]]] = 1.0
    b: Union[FieldValue, list[FieldValue]] = 0.0
    c: FieldValue = 0.0
    mu: FieldValue = 0.0
    h: FieldValue = 0.0
    g: FieldValue = 0.0
    m_diag: list[FieldValue] | None = None
    lam: float = 0.0

    @field_validator("c", "mu", "h", "g")
    @classmethod
    def _scalar(cls, v):
        return _check_field(v)

    @field_validator("a")
    @classmethod
    def _matrix(cls, v):
        if isinstance(v, list):
            for row in v:
                for x in row:
                    _check_field(x)
            return v
        return _check_field(v)

    @field_validator("b", "m_diag")
    @classmethod
    def _vector(cls, v):
        if isinstance(v, list):
            for x in v:
                _check_field(x)
            return v
        return v if v is None else _check_field(v)


class DiscretizationBlock(Strict):
    gradient_scheme: Literal["central", "exponential"] = "central"
    cross_stencil: Literal["nine-point", "seven-point"] = "nine-point"
    upwind: bool = False


class SolverBlock(Strict):
    tol: float = Field(1e-10, gt=0)
    max_iter: int = Field(50, gt=0)
    deflation_power: float = 2.0
    deflation_shift: float = 1.0
    seed_amplitudes: list[float] = [1.0, 5.0, 25.0]


class ContinuationBlock(Strict):
    lam_range: tuple[float, float] = (0.0, 10.0)
    ds: float = Field(0.1, gt=0)
    ds_min: float = Field(1e-6, gt=0)
    max_steps: int = 5000
    observation: list[int] | None = None

    @model_validator(mode="after")
    def _range(self):
        if self.lam_range[1] <= self.lam_range[0]:
            raise ValueError("lam_range must be increasing")
        return self


class VerifyBlock(Strict):
    mode: Literal["family", "single", "negative-case", "localization", "chain"] = "family"
    inequalities: list[Literal["BQSMP", "BWHI", "BLMP"]] = ["BQSMP", "BWHI", "BLMP"]
    eps: list[float] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
    ratios: tuple[float, float, float] = (1.0, 1.5, 2.0)
    family_seed: int = 0
    family_count: int = 50
    ellipticity: tuple[float, float] = (1.0, 3.0)
    drift: float = 1.0
    field: FieldValue = "xn"
    source: FieldValue = 0.0
    region: tuple[float, float] = (0.6, 0.95)
    mu_pair: tuple[float, float] = (1.0, 1.0)
    lam_window: tuple[float, float] | None = None


class TransformBlock(Strict):
    mu: float = 1.0
    direction: Literal["positive", "negative"] = "positive"


class ExperimentConfig(Strict):
    name: str = "experiment"
    grid: GridBlock = GridBlock()
    coefficients: CoefficientBlock = CoefficientBlock()
    discretization: DiscretizationBlock = DiscretizationBlock()
    solver: SolverBlock = SolverBlock()
    continuation: ContinuationBlock = ContinuationBlock()
    verify: VerifyBlock = VerifyBlock()
    transform: TransformBlock = TransformBlock()

    def build_grid(self) -> Grid:
        return build_grid(self.grid.dimension, self.grid.extents, self.grid.counts)

    def build_problem(self, lam: float | None = None) -> ProblemSpec:
        grid = self.build_grid()
        co = self.coefficients
        ev = lambda v: evaluate_field(v, grid)  # noqa: E731
        a = [[ev(x) for x in row] for row in co.a] if isinstance(co.a, list) else ev(co.a)
        b = [ev(x) for x in co.b] if isinstance(co.b, list) else ev(co.b)
        return make_problem(
            grid,
            a=a,
            b=b,
            c=ev(co.c),
            mu=ev(co.mu),
            h=ev(co.h),
            g=ev(co.g),
            lam=co.lam if lam is None else lam,
            m_diag=None if co.m_diag is None else [ev(x) for x in co.m_diag],
            gradient_scheme=self.discretization.gradient_scheme,
            cross_stencil=self.discretization.cross_stencil,
            upwind=self.discretization.upwind,
        )


def _locate(text: str, loc: tuple) -> tuple[int, int] | tuple[None, None]:
    """Line and column of the key named by a validation-error path."""
    keys = [k for k in loc if isinstance(k, str)]
    if not keys:
        return None, None
    lines = text.splitlines()
    section, key = (keys[0], keys[1]) if len(keys) > 1 else (None, keys[0])
    start = 0
    if section is not None:
        for i, ln in enumerate(lines):
            if re.match(rf"\s*\[{re.escape(section)}\]\s*(#.*)?$", ln):
                start = i + 1
                break
        else:
            return None, None
    for i in range(start, len(lines)):
        if section is not None and i > start and re.match(r"\s*\[", lines[i]):
            break
        m = re.match(rf"(\s*){re.escape(key)}\s*=", lines[i])
        if m:
            return i + 1, len(m.group(1)) + 1
    if section is not None:
        return start, 1
    return None, None


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        msg = getattr(exc, "msg", str(exc).split(" (at")[0])
        raise ConfigError(f"TOML syntax error: {msg}", getattr(exc, "lineno", None), getattr(exc, "colno", None)) from None
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        line, col = _locate(text, tuple(err["loc"]))
        path = ".".join(str(k) for k in err["loc"])
        raise ConfigError(f"invalid config at {path}: {err['msg']}", line, col) from None
    try:
        spec = cfg.build_problem()
        check_ellipticity(spec.coeffs, spec.grid)
    except ValueError as exc:
        raise ConfigError(f"config does not define a valid problem: {exc}") from None
    return cfg


def bundled_configs() -> list[str]:
    root = resources.files("quadgrad") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_config(name_or_path: str | Path) -> ExperimentConfig:
    """Load a config file, or a bundled config by name."""
    p = Path(name_or_path)
    if p.is_file():
        return parse_config(p.read_text())
    if str(name_or_path) in bundled_configs():
        text = (resources.files("quadgrad") / "configs" / f"{name_or_path}.toml").read_text()
        return parse_config(text)
    raise ConfigError(f"no config file or bundled config named {str(name_or_path)!r}")
