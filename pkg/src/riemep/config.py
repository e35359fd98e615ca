"""Experiment configuration: TOML files with descriptor strings.

A config has four tables, ``[problem]``, ``[solver]``, ``[verify]`` and
``[output]``, plus an optional top-level ``seed``.  Descriptor strings
such as ``"ball([0, 0, 1], 0.5)"`` are parsed with :mod:`ast` against a
fixed vocabulary; nothing is ever evaluated as Python.  See
``docs/config.md`` for the full dialect.
"""

from __future__ import annotations

import ast
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import bifunctions as bf
from .manifolds import Euclidean, Hyperbolic, Manifold, Product, Sphere
from .problems import BuiltinProblem, example51_cap, get_problem
from .sets import Box, ConstraintSet, Interval, MetricBall, ProductSet, SphericalCap, WholeManifold
from .solvers import LambdaSchedule, SolverConfig

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key (``section.key``)."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# ---------------------------------------------------------------------------
# descriptor mini-language


def _literal(node, where):
    try:
        return ast.literal_eval(node)
    except ValueError:
        raise ConfigError(where, f"expected a literal, got {ast.unparse(node)!r}") from None


def parse_descriptor(text: str, where: str):
    """``name(arg, ...)`` -> ``(name, [args])``; arguments are literals or nested descriptors."""
    try:
        tree = ast.parse(text.strip(), mode="eval").body
    except SyntaxError as err:
        raise ConfigError(where, f"cannot parse descriptor {text!r}: {err.msg}") from None
    return _node(tree, where)


def _node(node, where):
    if isinstance(node, ast.Name):
        return (node.id, [])
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        if node.keywords:
            raise ConfigError(where, "keyword arguments are not supported in descriptors")
        args = []
        for a in node.args:
            if isinstance(a, (ast.Call, ast.Name)):
                args.append(_node(a, where))
            else:
                args.append(_literal(a, where))
        return (node.func.id, args)
    raise ConfigError(where, f"expected name(...) descriptor, got {ast.unparse(node)!r}")


def _arity(name, args, lo, hi, where):
    if not lo <= len(args) <= hi:
        want = str(lo) if lo == hi else f"{lo}-{hi}"
        raise ConfigError(where, f"{name} takes {want} argument(s), got {len(args)}")


def _vec(v, where, n=None):
    try:
        a = np.asarray(v, float)
    except (TypeError, ValueError):
        raise ConfigError(where, f"expected numbers, got {v!r}") from None
    if n is not None and a.shape != (n,):
        raise ConfigError(where, f"expected a vector of length {n}, got shape {a.shape}")
    return a


def build_manifold(desc, where="problem.manifold") -> Manifold:
    name, args = desc if isinstance(desc, tuple) else parse_descriptor(desc, where)
    if name == "euclidean":
        _arity(name, args, 1, 1, where)
        if not isinstance(args[0], int) or args[0] < 1:
            raise ConfigError(where, "euclidean(n) needs a positive integer n")
        return Euclidean(args[0])
    if name in ("sphere2", "sphere"):
        _arity(name, args, 0, 0, where)
        return Sphere(2)
    if name in ("hyperbolic2", "hyperbolic"):
        _arity(name, args, 0, 0, where)
        return Hyperbolic(2)
    if name == "product":
        if not args:
            raise ConfigError(where, "product needs at least one factor")
        return Product([build_manifold(a if isinstance(a, tuple) else str(a), where) for a in args])
    raise ConfigError(where, f"unknown manifold {name!r}")


def build_set(desc, M: Manifold, where="problem.set") -> ConstraintSet:
    name, args = desc if isinstance(desc, tuple) else parse_descriptor(desc, where)
    if name == "interval":
        _arity(name, args, 2, 2, where)
        if M != Euclidean(1):
            raise ConfigError(where, "interval needs manifold euclidean(1)")
        lo, hi = float(args[0]), float(args[1])
        if not lo < hi:
            raise ConfigError(where, "interval needs lo < hi")
        return Interval(lo, hi)
    if name == "box":
        _arity(name, args, 2, 2, where)
        if not isinstance(M, Euclidean):
            raise ConfigError(where, "box needs a euclidean manifold")
        lo, hi = _vec(args[0], where, M.dim), _vec(args[1], where, M.dim)
        if np.any(lo >= hi):
            raise ConfigError(where, "box needs lo < hi componentwise")
        return Box(lo, hi)
    if name == "ball":
        _arity(name, args, 2, 2, where)
        c = _vec(args[0], where, M.ambient_dim)
        try:
            return MetricBall(M, M.check_point(c, tol=1e-9), float(args[1]))
        except ValueError as err:
            raise ConfigError(where, str(err)) from None
    if name == "cap":
        _arity(name, args, 2, 2, where)
        if not isinstance(M, Sphere):
            raise ConfigError(where, "cap needs manifold sphere2")
        angle = float(args[1])
        if not 0 < angle <= math.pi / 2:
            raise ConfigError(where, "cap angle must lie in (0, pi/2]")
        return SphericalCap.cap(_vec(args[0], where, 3), angle)
    if name == "halfspaces":
        _arity(name, args, 2, 3, where)
        if not isinstance(M, Sphere):
            raise ConfigError(where, "halfspaces needs manifold sphere2")
        extent = float(args[2]) if len(args) > 2 else math.pi / 2
        try:
            return SphericalCap(args[0], _vec(args[1], where, 3), extent=extent)
        except ValueError as err:
            raise ConfigError(where, str(err)) from None
    if name == "example51_cap":
        _arity(name, args, 0, 0, where)
        if not isinstance(M, Sphere):
            raise ConfigError(where, "example51_cap needs manifold sphere2")
        return example51_cap()
    if name == "whole":
        _arity(name, args, 0, 0, where)
        return WholeManifold(M)
    if name == "product":
        if not isinstance(M, Product) or len(args) != len(M.factors):
            raise ConfigError(where, "product set needs one factor set per factor manifold")
        return ProductSet([build_set(a, m, where) for a, m in zip(args, M.factors)])
    raise ConfigError(where, f"unknown set {name!r}")


def _function(desc, M: Manifold, where):
    """Scalar function descriptor -> ``(f, grad_or_None, smooth)``."""
    name, args = desc
    if name == "half_square":
        _arity(name, args, 0, 0, where)
        if not isinstance(M, Euclidean):
            raise ConfigError(where, "half_square needs a euclidean manifold")
        return (lambda x: 0.5 * np.sum(np.asarray(x) ** 2, axis=-1)), (lambda x: np.asarray(x)), True
    if name in ("half_dist2", "dist"):
        _arity(name, args, 1, 1, where)
        p = M.check_point(_vec(args[0], where, M.ambient_dim), tol=1e-9)
        dist = lambda x: M.dist(x, np.broadcast_to(p, np.shape(x)))  # noqa: E731
        if name == "half_dist2":
            return (lambda x: 0.5 * dist(x) ** 2), (lambda x: -M.log(x, p)), True

        def sub(x):
            u = M.log(x, p)
            n = float(M.norm(x, u))
            return np.zeros_like(u) if n < 1e-12 else -u / n

        return dist, sub, False
    if name == "linear":
        _arity(name, args, 1, 1, where)
        if not isinstance(M, Euclidean):
            raise ConfigError(where, "linear needs a euclidean manifold")
        a = _vec(args[0], where, M.dim)
        return (lambda x: np.asarray(x) @ a), (lambda x: a.copy()), True
    if name == "abs_sum":
        _arity(name, args, 0, 0, where)
        if not isinstance(M, Euclidean):
            raise ConfigError(where, "abs_sum needs a euclidean manifold")
        return (lambda x: np.sum(np.abs(x), axis=-1)), (lambda x: np.sign(x)), False
    raise ConfigError(where, f"unknown function {name!r}")


def _field(desc, M: Manifold, where) -> bf.VectorField:
    name, args = desc
    if name == "linear":
        _arity(name, args, 2, 2, where)
        if not isinstance(M, Euclidean):
            raise ConfigError(where, "linear field needs a euclidean manifold")
        A = np.asarray(args[0], float)
        b = _vec(args[1], where, M.dim)
        if A.shape != (M.dim, M.dim):
            raise ConfigError(where, f"matrix must be {M.dim}x{M.dim}")
        return bf.VectorField(M, lambda x: np.asarray(x) @ A.T + b, name="linear")
    if name == "constant":
        _arity(name, args, 1, 1, where)
        if not isinstance(M, Euclidean):
            raise ConfigError(where, "constant field needs a euclidean manifold")
        v = _vec(args[0], where, M.dim)
        return bf.VectorField(M, lambda x: np.broadcast_to(v, np.shape(x)).copy(), name="constant")
    if name == "neg_log":
        _arity(name, args, 1, 1, where)
        p = M.check_point(_vec(args[0], where, M.ambient_dim), tol=1e-9)
        return bf.VectorField(M, lambda x: -M.log(x, np.broadcast_to(p, np.shape(x))), name="neg_log")
    raise ConfigError(where, f"unknown vector field {name!r}")


def build_bifunction(desc, M: Manifold, where="problem.bifunction") -> bf.Bifunction:
    name, args = desc if isinstance(desc, tuple) else parse_descriptor(desc, where)
    if name == "zero":
        _arity(name, args, 0, 0, where)
        return bf.zero(M)
    if name == "optimization":
        _arity(name, args, 1, 1, where)
        if not isinstance(args[0], tuple):
            raise ConfigError(where, "optimization(f) needs a function descriptor")
        f, g, smooth = _function(args[0], M, where)
        return bf.optimization(M, f, grad=g, name=args[0][0]) if g is not None else bf.optimization(M, f)
    if name == "gv":
        _arity(name, args, 1, 1, where)
        if not isinstance(args[0], tuple):
            raise ConfigError(where, "gv(V) needs a field descriptor")
        return bf.gv(_field(args[0], M, where))
    if name == "gz":
        _arity(name, args, 1, 1, where)
        return bf.gz(M, M.check_point(_vec(args[0], where, M.ambient_dim), tol=1e-9))
    if name == "regularize":
        _arity(name, args, 3, 3, where)
        F = build_bifunction(args[0], M, where)
        z = M.check_point(_vec(args[2], where, M.ambient_dim), tol=1e-9)
        if not float(args[1]) > 0:
            raise ConfigError(where, "regularize needs lambda > 0")
        return bf.regularize(F, float(args[1]), z)
    raise ConfigError(where, f"unknown bifunction {name!r}")


# ---------------------------------------------------------------------------
# config tables


SECTIONS = {
    "problem": {"builtin", "manifold", "set", "bifunction", "x0", "solution"},
    "solver": {
        "schedule",
        "lambda",
        "power",
        "values",
        "max_outer_iters",
        "inner",
        "inner_tol",
        "max_inner_iters",
        "step_tol",
        "residual_tol",
        "probe_spacing",
        "grid_resolution",
        "auto_shrink",
        "assume_proximity",
        "lipschitz_radius",
    },
    "verify": {"oracle", "monotone", "convexity", "grid", "pairs"},
    "output": {"dir"},
}
TOP_LEVEL = {"seed"} | set(SECTIONS)


@dataclass
class VerifyToggles:
    oracle: bool = True
    monotone: bool = True
    convexity: bool = True
    grid: object = 41
    pairs: int = 500


@dataclass
class ExperimentConfig:
    name: str
    problem: BuiltinProblem
    solver: SolverConfig
    verify: VerifyToggles = field(default_factory=VerifyToggles)
    output_dir: str | None = None
    seed: int = 0


def _typed(table, key, kind, where, default=None):
    if key not in table:
        return default
    v = table[key]
    ok = {
        "int": isinstance(v, int) and not isinstance(v, bool),
        "float": isinstance(v, (int, float)) and not isinstance(v, bool),
        "bool": isinstance(v, bool),
        "str": isinstance(v, str),
        "list": isinstance(v, list),
    }[kind]
    if not ok:
        raise ConfigError(f"{where}.{key}", f"expected {kind}, got {type(v).__name__}")
    return float(v) if kind == "float" else v


def _check_keys(data):
    for key, value in data.items():
        if key not in TOP_LEVEL:
            raise ConfigError(key, "unknown key")
        if key in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(key, "expected a table")
            for sub in value:
                if sub not in SECTIONS[key]:
                    raise ConfigError(f"{key}.{sub}", "unknown key")


def _problem(table, name) -> BuiltinProblem:
    where = "problem"
    if "builtin" in table:
        extra = {"manifold", "set", "bifunction"} & set(table)
        if extra:
            raise ConfigError(f"problem.{sorted(extra)[0]}", "not allowed together with problem.builtin")
        try:
            P = get_problem(_typed(table, "builtin", "str", where))
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError("problem.builtin", str(err).strip('"')) from None
    else:
        for key in ("manifold", "set", "bifunction", "x0"):
            if key not in table:
                raise ConfigError(f"problem.{key}", "required when problem.builtin is absent")
        M = build_manifold(_typed(table, "manifold", "str", where))
        Q = build_set(_typed(table, "set", "str", where), M)
        F = build_bifunction(_typed(table, "bifunction", "str", where), M)
        P = BuiltinProblem(name, F, Q, np.zeros(M.ambient_dim), SolverConfig(), monotone=False)
    M = P.manifold
    if "x0" in table:
        x0 = _vec(_typed(table, "x0", "list", where), "problem.x0", M.ambient_dim)
        if float(M.point_residual(x0)) > 1e-9:
            raise ConfigError("problem.x0", "point is not on the manifold")
        if not bool(P.Q.contains(x0)):
            raise ConfigError("problem.x0", "point is not in the constraint set")
        P.x0 = M.proj_point(x0)
    if "solution" in table:
        P.solution = _vec(_typed(table, "solution", "list", where), "problem.solution", M.ambient_dim)
    return P


def _solver(table, base: SolverConfig, seed: int) -> SolverConfig:
    where = "solver"
    kind = _typed(table, "schedule", "str", where, base.schedule.kind)
    if kind not in ("constant", "harmonic", "power", "list"):
        raise ConfigError("solver.schedule", f"unknown schedule {kind!r}")
    values = tuple(_typed(table, "values", "list", where, list(base.schedule.values)))
    sched = LambdaSchedule(
        kind,
        _typed(table, "lambda", "float", where, base.schedule.c),
        _typed(table, "power", "float", where, base.schedule.power),
        tuple(float(v) for v in values) if all(isinstance(v, (int, float)) for v in values) else values,
    )
    try:
        sched.validate()
    except ValueError as err:
        key = "values" if kind == "list" else ("power" if kind == "power" else "lambda")
        raise ConfigError(f"solver.{key}", str(err)) from None
    inner = _typed(table, "inner", "str", where, base.inner)
    if inner not in ("extragradient", "oracle-grid"):
        raise ConfigError("solver.inner", f"unknown inner solver {inner!r}")
    cfg = SolverConfig(
        schedule=sched,
        max_outer_iters=_typed(table, "max_outer_iters", "int", where, base.max_outer_iters),
        inner=inner,
        inner_tol=_typed(table, "inner_tol", "float", where, base.inner_tol),
        max_inner_iters=_typed(table, "max_inner_iters", "int", where, base.max_inner_iters),
        step_tol=_typed(table, "step_tol", "float", where, base.step_tol),
        residual_tol=_typed(table, "residual_tol", "float", where, base.residual_tol),
        probe_spacing=_typed(table, "probe_spacing", "float", where, base.probe_spacing),
        grid_resolution=_typed(table, "grid_resolution", "int", where, base.grid_resolution),
        seed=seed,
        auto_shrink=_typed(table, "auto_shrink", "bool", where, base.auto_shrink),
        lipschitz_radius=_typed(table, "lipschitz_radius", "float", where, base.lipschitz_radius),
        assume_proximity=_typed(table, "assume_proximity", "bool", where, base.assume_proximity),
    )
    for key in ("inner_tol", "step_tol", "residual_tol", "probe_spacing", "lipschitz_radius"):
        if not getattr(cfg, key) > 0:
            raise ConfigError(f"solver.{key}", "must be positive")
    for key in ("max_outer_iters", "max_inner_iters", "grid_resolution"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"solver.{key}", "must be at least 1")
    return cfg


def _verify(table) -> VerifyToggles:
    where = "verify"
    grid = table.get("grid", 41)
    if not (isinstance(grid, int) and grid >= 3) and not (
        isinstance(grid, list) and grid and all(isinstance(g, int) and g >= 3 for g in grid)
    ):
        raise ConfigError("verify.grid", "expected an integer >= 3 or a list of them")
    pairs = _typed(table, "pairs", "int", where, 500)
    if pairs < 1:
        raise ConfigError("verify.pairs", "must be at least 1")
    return VerifyToggles(
        oracle=_typed(table, "oracle", "bool", where, True),
        monotone=_typed(table, "monotone", "bool", where, True),
        convexity=_typed(table, "convexity", "bool", where, True),
        grid=grid,
        pairs=pairs,
    )


def parse_config(data: dict, name: str = "experiment") -> ExperimentConfig:
    """Validate a decoded TOML document."""
    _check_keys(data)
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed", "expected a non-negative integer")
    if "problem" not in data:
        raise ConfigError("problem", "missing table")
    P = _problem(data["problem"], name)
    cfg = _solver(data.get("solver", {}), P.config, seed)
    out = data.get("output", {})
    return ExperimentConfig(
        name=name,
        problem=P,
        solver=cfg,
        verify=_verify(data.get("verify", {})),
        output_dir=_typed(out, "dir", "str", "output"),
        seed=seed,
    )


def load_config(path) -> ExperimentConfig:
    from pathlib import Path

    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError("file", f"cannot read {path}: {err.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError("file", f"{path.name}: {err}") from None
    return parse_config(data, path.stem)
