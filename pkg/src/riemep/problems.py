"""Built-in test problems, keyed by name.

Every problem carries a starting point, a solver configuration that works
for it, and either a closed-form solution or enough data for the grid
oracles to produce one.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .applications import (
    MVIProblem,
    NashProblem,
    best_response_oracle,
    build_mvip_bifunction,
    build_nep_bifunction,
)
from .bifunctions import Bifunction, VectorField, affine_vip, gv, optimization
from .manifolds import Euclidean, Hyperbolic, Sphere
from .sets import Box, ConstraintSet, Interval, MetricBall, SphericalCap, WholeManifold
from .solvers import LambdaSchedule, SolverConfig, brute_force_ep


@dataclass
class BuiltinProblem:
    name: str
    F: Bifunction
    Q: ConstraintSet
    x0: np.ndarray
    config: SolverConfig
    solution: np.ndarray | None = None
    monotone: bool = True
    description: str = ""
    nash: NashProblem | None = None
    mvip: MVIProblem | None = None
    oracle_grid: object = 41

    @property
    def manifold(self):
        return self.Q.manifold

    @property
    def hadamard(self) -> bool:
        return self.manifold.kappa <= 0

    def reference_solution(self):
        """Known solution points, shape ``(k, d)``; grid oracle output when none is known."""
        if self.solution is not None:
            return np.atleast_2d(self.solution)
        if self.nash is not None:
            return best_response_oracle(self.nash, self.oracle_grid).points
        return brute_force_ep(self.F, self.Q, self.oracle_grid).points


_REGISTRY: dict[str, Callable[..., BuiltinProblem]] = {}


def register(name):
    def deco(fn):
        _REGISTRY[name] = fn
        return fn

    return deco


def problem_names():
    return sorted(_REGISTRY)


def get_problem(spec: str) -> BuiltinProblem:
    """Look up ``name`` or ``name(arg, ...)`` with integer arguments."""
    m = re.fullmatch(r"\s*([a-z0-9-]+)\s*(?:\(([^)]*)\))?\s*", spec)
    if not m or m.group(1) not in _REGISTRY:
        raise KeyError(f"unknown problem {spec!r}; known: {', '.join(problem_names())}")
    args = [int(a) for a in m.group(2).split(",")] if m.group(2) and m.group(2).strip() else []
    return _REGISTRY[m.group(1)](*args)


# ---------------------------------------------------------------------------
# Euclidean


@register("prox-quadratic")
def prox_quadratic() -> BuiltinProblem:
    M = Euclidean(1)
    F = optimization(M, lambda x: 0.5 * np.sum(np.asarray(x) ** 2, axis=-1), grad=lambda x: x, name="half-square")
    return BuiltinProblem(
        "prox-quadratic",
        F,
        Box([-100.0], [100.0]),
        np.array([8.0]),
        SolverConfig(schedule=LambdaSchedule("constant", 1.0)),
        solution=np.array([0.0]),
        description="f(x) = x^2/2 on [-100, 100]; iterates halve at lambda = 1",
    )


@register("quadratic-game")
def quadratic_game(m: int = 2) -> BuiltinProblem:
    """Chain game ``f_i = (x_i - x_{i+1})^2``, ``f_m = x_m^2`` on ``[-1, 1]^m``.

    The unique equilibrium is the origin.  ``F_r`` is not monotone (its
    symmetrised sum has an indefinite cross term) but the pseudogradient
    field is strongly monotone.
    """
    if m < 1:
        raise ValueError("need at least one player")

    def loss(i):
        if i == m - 1:
            return lambda x: np.asarray(x)[..., i] ** 2
        return lambda x: (np.asarray(x)[..., i] - np.asarray(x)[..., i + 1]) ** 2

    game = NashProblem([Interval(-1.0, 1.0) for _ in range(m)], [loss(i) for i in range(m)], name=f"quadratic-game({m})")
    x0 = np.array([0.5 * (-1) ** i for i in range(m)])
    return BuiltinProblem(
        f"quadratic-game({m})",
        build_nep_bifunction(game),
        game.Q,
        x0,
        SolverConfig(schedule=LambdaSchedule("constant", 1.0)),
        solution=np.zeros(m),
        monotone=False,
        description="chain quadratic game, Nash point 0",
        nash=game,
        oracle_grid=41 if m <= 2 else 11,
    )


MVIP_A = np.array([[1.0, 1.0], [-1.0, 1.0]])
MVIP_SOLUTION = np.array([0.3, -0.2])


@register("mvip-linear")
def mvip_linear() -> BuiltinProblem:
    """``V(x) = A x + b`` with ``A + A^T = 2I`` and ``f = |x|^2 / 2`` on ``[-1, 1]^2``."""
    M = Euclidean(2)
    b = -(MVIP_A + np.eye(2)) @ MVIP_SOLUTION
    V = VectorField(M, lambda x: np.asarray(x) @ MVIP_A.T + b, name="affine")
    p = MVIProblem(V, lambda x: 0.5 * np.sum(np.asarray(x) ** 2, axis=-1), Box([-1, -1], [1, 1]), subgradient=lambda x: x)
    return BuiltinProblem(
        "mvip-linear",
        build_mvip_bifunction(p),
        p.Q,
        np.array([-0.8, 0.9]),
        SolverConfig(schedule=LambdaSchedule("constant", 1.0)),
        solution=MVIP_SOLUTION.copy(),
        description="affine monotone field plus |x|^2/2 on a square",
        mvip=p,
    )


AFFINE_A = np.array([[1.0, 2.0], [-2.0, 1.0]])
AFFINE_B = np.array([0.5, -0.3])


@register("affine-vip")
def affine_vip_problem() -> BuiltinProblem:
    return BuiltinProblem(
        "affine-vip",
        affine_vip(AFFINE_A, AFFINE_B),
        Box([-1, -1], [1, 1]),
        np.array([0.9, 0.9]),
        SolverConfig(schedule=LambdaSchedule("constant", 1.0)),
        solution=-np.linalg.solve(AFFINE_A, AFFINE_B),
        description="<A x + b, y - x> with a rotation-dominated A on a square",
    )


# ---------------------------------------------------------------------------
# hyperbolic plane


def _h2_point(v):
    H = Hyperbolic(2)
    return H.exp(H.origin, np.array([0.0, *v]))


@register("h2-distance")
def h2_distance() -> BuiltinProblem:
    """Minimise ``d(x, p)^2 / 2`` over the whole hyperbolic plane."""
    H = Hyperbolic(2)
    p = _h2_point([0.6, -0.3])
    F = optimization(
        H,
        lambda x: 0.5 * H.dist(x, np.broadcast_to(p, np.shape(x))) ** 2,
        grad=lambda x: -H.log(x, p),
        name="half-dist2",
    )
    return BuiltinProblem(
        "h2-distance",
        F,
        WholeManifold(H),
        _h2_point([-1.0, 0.5]),
        SolverConfig(schedule=LambdaSchedule("constant", 1.0)),
        solution=p,
        description="squared distance to a point of H^2",
    )


def _h2_rotation(x):
    x = np.asarray(x, float)
    return np.stack([np.zeros(x.shape[:-1]), -x[..., 2], x[..., 1]], axis=-1)


@register("h2-field")
def h2_field() -> BuiltinProblem:
    """``G_V`` for ``V(x) = -log_x o + J x/2`` (gradient plus a rotation about ``o``)."""
    H = Hyperbolic(2)
    o = H.origin
    V = VectorField(H, lambda x: -H.log(x, np.broadcast_to(o, np.shape(x))) + 0.5 * _h2_rotation(x), name="grad+rot")
    return BuiltinProblem(
        "h2-field",
        gv(V),
        WholeManifold(H),
        _h2_point([1.2, 0.4]),
        SolverConfig(schedule=LambdaSchedule("constant", 1.0)),
        solution=o,
        description="monotone field with a Killing component; zero at the origin",
    )


# ---------------------------------------------------------------------------
# sphere


SPHERE_AXIS = np.array([0.0, 0.0, 1.0])


def _sphere_point(theta, phi):
    return np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])


@register("sphere-distance")
def sphere_distance() -> BuiltinProblem:
    """Minimise ``d(x, p)^2 / 2`` over a geodesic ball of radius 0.6 on S^2."""
    S = Sphere(2)
    p = _sphere_point(0.3, 0.5)
    F = optimization(
        S,
        lambda x: 0.5 * S.dist(x, np.broadcast_to(p, np.shape(x))) ** 2,
        grad=lambda x: -S.log(x, p),
        name="half-dist2",
    )
    return BuiltinProblem(
        "sphere-distance",
        F,
        MetricBall(S, SPHERE_AXIS, 0.6),
        _sphere_point(0.55, 0.9),
        SolverConfig(schedule=LambdaSchedule("constant", 0.5)),
        solution=p,
        description="squared distance on a spherical ball",
    )


@register("sphere-field")
def sphere_field() -> BuiltinProblem:
    """``G_V`` for ``V(x) = -log_x p + (p x x)/2`` on a spherical ball; zero at ``p``."""
    S = Sphere(2)
    p = _sphere_point(0.2, -1.0)
    V = VectorField(
        S,
        lambda x: -S.log(x, np.broadcast_to(p, np.shape(x))) + 0.5 * np.cross(p, x),
        name="grad+rot",
    )
    return BuiltinProblem(
        "sphere-field",
        gv(V),
        MetricBall(S, SPHERE_AXIS, 0.6),
        _sphere_point(0.5, -0.6),
        SolverConfig(schedule=LambdaSchedule("constant", 0.5)),
        solution=p,
        description="gradient plus Killing rotation on a spherical ball",
    )


# ---------------------------------------------------------------------------
# the two-player game on R x S^2


EX51_CONSTRAINTS = [
    [1.0, 0.0, 0.0, 0.0],  # t1 >= 0
    [0.0, 0.0, 1.0, 0.0],  # t3 >= 0
    [0.0, 1.0, 0.0, -0.5],  # t2 >= -1/2
    [0.0, -1.0, 0.0, -0.5],  # t2 <= 1/2
]
EX51_POLE = np.array([1.0, 0.0, 0.0])
EX51_STATED = np.array([1.0, 1.0, 0.0, 0.0])
EX51_COMPUTED = np.array([0.0, 1.0, 0.0, 0.0])


def example51_cap(closed: bool = True) -> SphericalCap:
    return SphericalCap(EX51_CONSTRAINTS, EX51_POLE, extent=math.pi / 2, closed=closed, weak_pole=EX51_POLE if closed else None)


def _ex51_f1(x):
    x = np.asarray(x, float)
    return (x[..., 0] - x[..., 3]) ** 2


def _ex51_f2(x):
    x = np.asarray(x, float)
    return np.arccos(np.clip(x[..., 1], -1.0, 1.0))


def _ex51_partial2(x):
    S = Sphere(2)
    x2 = np.asarray(x, float)[1:]
    u = S.log(x2, EX51_POLE)
    n = float(np.linalg.norm(u))
    # d(., p) has the unit ball as subdifferential at p; 0 is the selection
    return np.zeros((1, 3)) if n < 1e-12 else -(u / n)[None, :]


def example51_game(r=(1.0, 1.0)) -> NashProblem:
    return NashProblem(
        [Interval(-1.0, 1.0), example51_cap()],
        [_ex51_f1, _ex51_f2],
        weights=np.asarray(r, float),
        partials=[lambda x: np.array([[2.0 * (x[0] - x[3])]]), _ex51_partial2],
        smooth=False,
        name="example51",
    )


@register("example51")
def example51() -> BuiltinProblem:
    """Two players on ``R x S^2`` with ``Q_2`` replaced by its closure.

    The best-response oracle gives ``(0, (1, 0, 0))``; the point
    ``(1, (1, 0, 0))`` stated in the source fails player 1's best response.
    """
    game = example51_game()
    x0 = np.array([0.2, math.cos(0.3), 0.0, math.sin(0.3)])
    cfg = SolverConfig(
        schedule=LambdaSchedule("constant", 0.5),
        inner="oracle-grid",
        grid_resolution=15,
        max_inner_iters=4000,
        step_tol=1e-6,
    )
    return BuiltinProblem(
        "example51",
        build_nep_bifunction(game),
        game.Q,
        x0,
        cfg,
        solution=None,
        monotone=False,
        description="NEP on R x S^2 (closure of the strategy cap)",
        nash=game,
        oracle_grid=[41, 41],
    )
