"""Reductions of Nash games and mixed variational inequalities to equilibrium problems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bifunctions import Bifunction, FD_STEP, VectorField, ext_sub
from .manifolds import Manifold, Product
from .sets import ConstraintSet, Grid, ProductSet
from .solvers import EVAL_BUDGET, OracleResult, _as_grid, grid_tolerance

# ---------------------------------------------------------------------------
# Nash equilibrium problems


@dataclass
class NashProblem:
    """Game with strategy sets ``Q_i`` on factor manifolds ``M_i``.

    ``losses[i]`` maps full strategy profiles (ambient coordinates of the
    product, shape ``(..., d)``) to extended reals.  ``partials[i]``, if
    given, returns a ``(k, d_i)`` array of subgradients of ``losses[i]`` in
    player ``i``'s own slot, as tangent vectors of ``M_i``.
    """

    sets: Sequence[ConstraintSet]
    losses: Sequence[Callable]
    weights: np.ndarray | None = None
    partials: Sequence[Callable | None] | None = None
    smooth: bool = True
    name: str = "nash"
    Q: ProductSet = field(init=False)

    def __post_init__(self):
        m = len(self.sets)
        if len(self.losses) != m:
            raise ValueError("need one loss per player")
        self.weights = np.ones(m) if self.weights is None else np.asarray(self.weights, float)
        if self.weights.shape != (m,) or np.any(~(self.weights > 0)):
            raise ValueError("weights must be strictly positive, one per player")
        if self.partials is None:
            self.partials = [None] * m
        self.Q = ProductSet(self.sets)

    @property
    def players(self):
        return len(self.sets)

    @property
    def manifold(self) -> Product:
        return self.Q.manifold

    def with_weights(self, r) -> "NashProblem":
        return NashProblem(self.sets, self.losses, r, self.partials, self.smooth, self.name)

    def substitute(self, x, y, i):
        """Profile ``x`` with player ``i``'s strategy taken from ``y``."""
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        out = np.array(np.broadcast_to(x, shape), float)
        sl = self.manifold.slices[i]
        out[..., sl] = np.broadcast_to(y, shape)[..., sl]
        return out


def build_nep_bifunction(p: NashProblem) -> Bifunction:
    """``F_r(x, y) = sum_i r_i (f_i(x_1, .., y_i, .., x_m) - f_i(x))``."""
    r = p.weights

    def func(x, y):
        total = 0.0
        for i, f in enumerate(p.losses):
            total = total + r[i] * ext_sub(f(p.substitute(x, y, i)), f(np.asarray(x, float)))
        return np.asarray(total, float)

    return Bifunction(
        p.manifold,
        func,
        subgradient=lambda x: pseudosubgradient_gr(p, x),
        smooth=p.smooth,
        name=f"F_r[{p.name}]",
    )


def _player_gradient(p: NashProblem, x, i, h=FD_STEP):
    """Central-difference gradient of ``f_i`` in slot ``i`` on ``M_i``."""
    M = p.manifold
    Mi = M.factors[i]
    sl = M.slices[i]
    xi = x[sl]
    basis = Mi.tangent_basis(xi)
    xs = np.broadcast_to(xi, basis.shape)
    prof_p = np.repeat(x[None], len(basis), axis=0)
    prof_m = prof_p.copy()
    prof_p[:, sl] = Mi.exp(xs, h * basis)
    prof_m[:, sl] = Mi.exp(xs, -h * basis)
    f = p.losses[i]
    coeffs = (f(prof_p) - f(prof_m)) / (2 * h)
    return (coeffs @ basis)[None, :]


def pseudosubgradient_gr(p: NashProblem, x):
    """``g_r(x) = (r_1 d_1 f_1(x), ..., r_m d_m f_m(x))`` as product tangent vectors ``(k, d)``.

    Blocks with several subgradients are combined as a Cartesian product.
    """
    x = np.asarray(x, float)
    M = p.manifold
    blocks = []
    for i in range(p.players):
        oracle = p.partials[i]
        if oracle is not None:
            g = np.atleast_2d(np.asarray(oracle(x), float))
        elif p.smooth:
            g = _player_gradient(p, x, i)
        else:
            raise ValueError(f"player {i}: nonsmooth loss needs a partial subgradient oracle")
        blocks.append(p.weights[i] * g)
    out = [np.zeros(0)]
    for g in blocks:
        out = [np.concatenate([a, b]) for a in out for b in g]
    return np.array(out).reshape(len(out), M.ambient_dim)


def _factor_grids(p: NashProblem, grid):
    ns = grid if isinstance(grid, (list, tuple)) else [grid] * p.players
    for q in p.sets:
        if not q.compact:
            raise ValueError("best-response oracle needs compact strategy sets")
    return [q.grid(n) for q, n in zip(p.sets, ns)]


def nash_grid(p: NashProblem, grid=41) -> Grid:
    """Product grid shared by the best-response and EP oracles."""
    from .sets import product_grid

    return product_grid(p.manifold, _factor_grids(p, grid))


def player_regrets(p: NashProblem, grid: Grid, factor_grids):
    """``rho_i(x) = f_i(x) - min_{y_i} f_i(x_{-i}, y_i)`` for each grid point, shape ``(m, N)``."""
    X = grid.points
    M = p.manifold
    out = np.empty((p.players, len(X)))
    for i, (f, G) in enumerate(zip(p.losses, factor_grids)):
        sl = M.slices[i]
        Yi = G.points
        best = np.empty(len(X))
        step = max(1, EVAL_BUDGET // max(len(Yi), 1))
        for s in range(0, len(X), step):
            prof = np.repeat(X[s : s + step, None, :], len(Yi), axis=1)
            prof[:, :, sl] = Yi[None, :, :]
            vals = np.asarray(f(prof), float)
            best[s : s + step] = np.min(np.where(np.isnan(vals), np.inf, vals), axis=1)
        out[i] = ext_sub(np.asarray(f(X), float), best)
    return out


def best_response_oracle(p: NashProblem, grid=41) -> OracleResult:
    """Grid profiles at which every player is within slack of a best response.

    The slack for player ``i`` is the local Lipschitz modulus of its regret
    over lattice neighbours times the grid spacing.  ``values`` holds
    ``-max_i (rho_i - slack_i)``.
    """
    fg = _factor_grids(p, grid)
    from .sets import product_grid

    G = product_grid(p.manifold, fg)
    rho = player_regrets(p, G, fg)
    excess = np.empty_like(rho)
    for i in range(p.players):
        excess[i] = rho[i] - grid_tolerance(G, rho[i], p.manifold)
    worst = np.max(excess, axis=0)
    mask = worst <= 1e-12
    return OracleResult(G, -np.max(rho, axis=0), np.max(rho - excess, axis=0), mask)


# ---------------------------------------------------------------------------
# mixed variational inequalities


@dataclass
class MVIProblem:
    """``<V(x), gamma'(0)> + f(y) - f(x) >= 0`` for all ``y`` in ``Q``.

    ``subgradient`` returns a ``(k, d)`` array generating ``∂f(x)``;
    without it ``f`` must be smooth and is differentiated numerically.
    """

    V: VectorField
    f: Callable
    Q: ConstraintSet
    subgradient: Callable | None = None
    smooth: bool = True
    name: str = "mvip"

    def __post_init__(self):
        if not self.V.single_valued:
            raise ValueError("MVIP field must be single-valued")
        if self.V.manifold != self.Q.manifold:
            raise ValueError("V and Q live on different manifolds")


def _riemannian_gradient(M: Manifold, f, x, h=FD_STEP):
    basis = M.tangent_basis(x)
    xs = np.broadcast_to(x, basis.shape)
    coeffs = (np.asarray(f(M.exp(xs, h * basis))) - np.asarray(f(M.exp(xs, -h * basis)))) / (2 * h)
    return coeffs @ basis


def f_subgradient(p: MVIProblem, x):
    x = np.asarray(x, float)
    if p.subgradient is not None:
        return np.atleast_2d(np.asarray(p.subgradient(x), float))
    if p.smooth:
        return _riemannian_gradient(p.Q.manifold, p.f, x)[None, :]
    raise ValueError("nonsmooth f needs a subgradient oracle")


def build_mvip_bifunction(p: MVIProblem) -> Bifunction:
    """``F(x, y) = sup_{u in exp_x^{-1} y} <V(x), u> + f(y) - f(x)``, with ``A_F = V + ∂f``."""
    M = p.Q.manifold
    V, f = p.V, p.f

    def func(x, y):
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        xb = np.broadcast_to(x, shape)
        return M.log_support(xb, np.broadcast_to(y, shape), V(xb)) + ext_sub(f(y), f(x))

    def oracle(x):
        return V(np.asarray(x, float))[None, :] + f_subgradient(p, x)

    return Bifunction(M, func, subgradient=oracle, smooth=p.smooth, name=f"mvip[{p.name}]")


def mvip_direct_test(p: MVIProblem, grid=41, samples: int = 16) -> OracleResult:
    """Grid points passing the MVIP inequality against every grid ``y``.

    Each ``y`` is tested along every minimal geodesic lying in ``Q`` (the
    worst direction is taken); points ``y`` reached only by geodesics
    leaving ``Q`` are skipped.
    """
    Q = p.Q
    M = Q.manifold
    grid = _as_grid(Q, grid)
    X = grid.points
    VX = p.V(X)
    fX = np.asarray(p.f(X), float)
    fY = np.asarray(p.f(X), float)
    res = np.empty(len(X))
    step = max(1, EVAL_BUDGET // max(len(X), 1))
    for s in range(0, len(X), step):
        xs = X[s : s + step, None, :]
        shape = (len(xs), len(X), X.shape[-1])
        xb = np.broadcast_to(xs, shape)
        yb = np.broadcast_to(X[None], shape)
        vb = np.broadcast_to(VX[s : s + step, None, :], shape)
        pairing = -M.log_support(xb, yb, -vb)
        vals = pairing + ext_sub(fY[None, :], fX[s : s + step, None])
        if not Q.geodesically_convex:
            logs = M.log(xb, yb)
            inside = np.ones(shape[:2], bool)
            for t in np.linspace(0, 1, samples + 2)[1:-1]:
                inside &= Q.contains(M.exp(xb, t * logs))
            vals = np.where(inside, vals, np.inf)
        res[s : s + step] = np.min(vals, axis=1)
    tol = grid_tolerance(grid, res, M)
    return OracleResult(grid, res, tol, res >= -tol - 1e-12)


# ---------------------------------------------------------------------------
# existence diagnostics


@dataclass
class CompactnessWitness:
    tested: int
    failures: list

    @property
    def passed(self):
        return not self.failures


def check_compact_condition(F: Bifunction, Q: ConstraintSet, in_L: Callable, n: int = 200, seed: int = 0, L_points=None):
    """Sampled test of ``x in Q \\ L  =>  exists y in Q ∩ L with F(x, y) < 0``.

    ``in_L`` is a membership predicate for the compact set ``L``;
    ``L_points`` are candidate ``y`` (default: samples of ``Q`` inside
    ``L``).  A pass is evidence only.
    """
    rng = np.random.default_rng(seed)
    pts = Q.sample(rng, 4 * n)
    inside = np.asarray(in_L(pts), bool)
    if L_points is None:
        L_points = pts[inside]
    L_points = np.atleast_2d(L_points)
    outside = pts[~inside][:n]
    failures = []
    if len(outside) and len(L_points):
        vals = F(outside[:, None, :], L_points[None, :, :])
        ok = np.min(vals, axis=1) < 0
        failures = [outside[j] for j in np.flatnonzero(~ok)]
    elif len(outside):
        failures = list(outside)
    return CompactnessWitness(len(outside), failures)
