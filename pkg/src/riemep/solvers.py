"""Resolvent, proximal point iteration and brute-force equilibrium oracles."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bifunctions import Bifunction, VectorField, linear_row_min, lipschitz_estimate, regularize, subgradient_AF
from .manifolds import Euclidean, Manifold
from .sets import ConstraintSet, Grid, MetricBall, WholeManifold, geodesic_within

log = logging.getLogger(__name__)

EVAL_BUDGET = 4_000_000


class StepConditionError(RuntimeError):
    """``lambda * L_hat >= D_kappa / 4``, or a step left ``B(x, D_kappa / 4)``."""


class InnerSolverError(RuntimeError):
    def __init__(self, msg, point=None, iterations=0):
        super().__init__(msg)
        self.point = point
        self.iterations = iterations


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class LambdaSchedule:
    """Proximal parameters ``lambda_k``.

    ``constant``: ``c``; ``harmonic``: ``c / sqrt(k + 1)``;
    ``power``: ``c / (k + 1) ** p``; ``list``: explicit values, the last one
    repeated once the list runs out.
    """

    kind: str = "constant"
    c: float = 1.0
    power: float = 0.5
    values: tuple = ()

    def __call__(self, k: int) -> float:
        if self.kind == "constant":
            return self.c
        if self.kind == "harmonic":
            return self.c / math.sqrt(k + 1)
        if self.kind == "power":
            return self.c / (k + 1) ** self.power
        if self.kind == "list":
            return float(self.values[min(k, len(self.values) - 1)])
        raise ValueError(f"unknown schedule {self.kind!r}")

    def validate(self):
        """Raise unless ``sum lambda_k^2`` provably diverges and every ``lambda_k > 0``."""
        if self.kind in ("constant", "harmonic", "power"):
            if not self.c > 0:
                raise ValueError("schedule constant must be positive")
        if self.kind == "constant":
            return
        if self.kind == "harmonic":
            # sum c^2 / (k + 1) is the harmonic series
            return
        if self.kind == "power":
            if not 0 <= self.power <= 0.5:
                raise ValueError(
                    f"power schedule with p={self.power} has summable squares; need p <= 1/2"
                )
            return
        if self.kind == "list":
            if not self.values:
                raise ValueError("explicit schedule is empty")
            if any(not v > 0 for v in self.values):
                raise ValueError("explicit schedule values must be positive")
            # constant tail makes the sum diverge
            return
        raise ValueError(f"unknown schedule {self.kind!r}")


@dataclass
class SolverConfig:
    schedule: LambdaSchedule = field(default_factory=LambdaSchedule)
    max_outer_iters: int = 500
    inner: str = "extragradient"
    inner_tol: float = 1e-12
    max_inner_iters: int = 5000
    step_tol: float = 1e-8
    residual_tol: float = 1e-6
    probe_spacing: float = 1e-2
    probe_max_points: int = 60_000
    grid_resolution: int = 41
    seed: int = 0
    auto_shrink: bool = False
    lipschitz_radius: float = 1e-3
    lipschitz_samples: int = 64
    assume_proximity: bool = True

    def validate(self):
        self.schedule.validate()
        for name in ("inner_tol", "step_tol", "residual_tol", "probe_spacing", "lipschitz_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_outer_iters", "max_inner_iters", "grid_resolution", "lipschitz_samples"):
            if not getattr(self, name) >= 1:
                raise ValueError(f"{name} must be at least 1")
        if self.inner not in ("extragradient", "oracle-grid"):
            raise ValueError(f"unknown inner solver {self.inner!r}")
        return self


@dataclass
class ResolventProblem:
    F: Bifunction
    Q: ConstraintSet
    lam: float
    z: np.ndarray

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        self.z = self.Q.manifold.check_point(self.z, tol=1e-10)


# ---------------------------------------------------------------------------
# brute-force oracles


def _as_grid(Q: ConstraintSet, grid) -> Grid:
    if isinstance(grid, Grid):
        return grid
    if grid is None:
        grid = 41
    if isinstance(grid, (int, np.integer, list, tuple)):
        if not Q.compact:
            raise ValueError("brute-force oracles need a compact constraint set")
        return Q.grid(grid)
    pts = np.asarray(grid, float)
    from scipy import sparse

    return Grid(pts, sparse.csr_matrix((len(pts), len(pts)), dtype=np.int8), 0.0)


def _points(Q, grid):
    if isinstance(grid, Grid):
        return grid.points
    if grid is None or isinstance(grid, (int, np.integer, list, tuple)):
        return _as_grid(Q, grid).points
    return np.asarray(grid, float)


def row_min(F: Bifunction, X, Y, budget: int = EVAL_BUDGET):
    """``min_j F(X[i], Y[j])`` for every row, evaluated in chunks."""
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    if F.min_over is not None:
        return np.asarray(F.min_over(X, Y), float)
    out = np.empty(len(X))
    step = max(1, budget // max(len(Y), 1))
    for s in range(0, len(X), step):
        vals = F(X[s : s + step, None, :], Y[None, :, :])
        vals = np.where(np.isnan(vals), np.inf, vals)
        out[s : s + step] = np.min(vals, axis=1)
    return out


def local_slopes(grid: Grid, values, manifold: Manifold):
    """Largest ``|r_i - r_j| / d(x_i, x_j)`` over lattice neighbours ``j`` of each ``i``."""
    a = grid.adjacency.tocoo()
    slopes = np.zeros(len(values))
    if a.nnz == 0:
        return slopes
    d = manifold.dist(grid.points[a.row], grid.points[a.col])
    with np.errstate(invalid="ignore"):
        s = np.abs(values[a.row] - values[a.col]) / np.where(d > 0, d, np.inf)
    s = np.where(np.isfinite(s), s, 0.0)
    np.maximum.at(slopes, a.row, s)
    return slopes


def grid_tolerance(grid: Grid, values, manifold: Manifold):
    """Per-point acceptance slack: ``max_j |r_i - r_j|`` over lattice neighbours ``j``.

    This is ``L_hat * spacing`` with the local Lipschitz modulus and the
    spacing measured edge by edge, so anisotropic product grids get a
    slack matched to each factor's resolution.
    """
    a = grid.adjacency.tocoo()
    slack = np.zeros(len(values))
    if a.nnz == 0:
        return slack
    diff = np.abs(values[a.row] - values[a.col])
    diff = np.where(np.isfinite(diff), diff, 0.0)
    np.maximum.at(slack, a.row, diff)
    return slack


@dataclass
class OracleResult:
    """Grid points accepted by a brute-force oracle."""

    grid: Grid
    values: np.ndarray
    tolerance: np.ndarray
    mask: np.ndarray

    @property
    def points(self):
        return self.grid.points[self.mask]

    @property
    def spacing(self):
        return self.grid.spacing

    def __len__(self):
        return int(self.mask.sum())


def brute_force_ep(F: Bifunction, Q: ConstraintSet, grid=41, eps=None, candidates=None) -> OracleResult:
    """All grid points ``x`` with ``min_y F(x, y) >= -eps`` over the grid.

    ``eps`` defaults to the per-point slack of :func:`grid_tolerance`.
    ``candidates`` optionally restricts which grid points are tested as
    ``x`` (all grid points remain test points ``y``).
    """
    grid = _as_grid(Q, grid)
    X = grid.points
    residual = np.full(len(X), -np.inf)
    idx = np.arange(len(X)) if candidates is None else np.flatnonzero(candidates)
    residual[idx] = row_min(F, X[idx], X)
    if eps is None:
        filled = np.where(np.isfinite(residual), residual, np.min(residual[idx]) if len(idx) else 0)
        tol = grid_tolerance(grid, filled, Q.manifold)
    else:
        tol = np.full(len(X), float(eps))
    mask = residual >= -tol - 1e-12
    if candidates is not None:
        mask &= np.asarray(candidates, bool)
    return OracleResult(grid, residual, tol, mask)


def ep_residual(F: Bifunction, Q: ConstraintSet, x, grid=None) -> float:
    """``min_y F(x, y)`` over a grid of ``Q``; ``x`` is an eps-solution iff ``>= -eps``."""
    Y = _points(Q, grid)
    return float(row_min(F, np.asarray(x, float)[None, :], Y)[0])


def _min_directional(manifold, Q, X, V, Y, samples=16, budget=EVAL_BUDGET):
    """``min_y <v_i, gamma'(0)>`` over geodesics from ``X[i]`` to grid points in ``Q``."""
    if isinstance(manifold, Euclidean) and Q.geodesically_convex:
        # gamma'(0) = y - x
        return linear_row_min(V, Y, np.sum(V * X, axis=1))
    out = np.empty(len(X))
    step = max(1, budget // max(len(Y), 1))
    for s in range(0, len(X), step):
        xs = X[s : s + step, None, :]
        vs = V[s : s + step, None, :]
        shape = (len(xs), len(Y), X.shape[-1])
        xb = np.broadcast_to(xs, shape)
        yb = np.broadcast_to(Y[None], shape)
        # minimum over all minimal directions = -(support of -v)
        vals = -manifold.log_support(xb, yb, -np.broadcast_to(vs, shape))
        if not Q.geodesically_convex:
            logs = manifold.log(xb, yb)
            inside = np.ones(shape[:2], bool)
            for t in np.linspace(0, 1, samples + 2)[1:-1]:
                inside &= Q.contains(manifold.exp(xb, t * logs))
            vals = np.where(inside, vals, np.inf)
        out[s : s + step] = np.min(vals, axis=1)
    return out


def field_values(F_or_field, X):
    """Stack ``A(x)`` over the rows of ``X``; shape ``(N, k, d)`` (rows padded by repetition)."""
    if isinstance(F_or_field, VectorField):
        if F_or_field.single_valued:
            return F_or_field(X)[:, None, :]
        sets = [F_or_field.at(x) for x in X]
    else:
        F = F_or_field
        if F.field is not None:
            return F.field(X)[:, None, :]
        if F.oracle is None and F.smooth:
            return _batched_fd(F, X)[:, None, :]
        sets = [subgradient_AF(F, x) for x in X]
    k = max(len(s) for s in sets)
    return np.stack([np.concatenate([s, np.repeat(s[:1], k - len(s), axis=0)]) for s in sets])


def _batched_fd(F: Bifunction, X, h=1e-5):
    M = F.manifold
    bases = np.stack([M.tangent_basis(x) for x in X])  # (N, k, d)
    xs = np.broadcast_to(X[:, None, :], bases.shape)
    fp = F(xs, M.exp(xs, h * bases))
    fm = F(xs, M.exp(xs, -h * bases))
    coeffs = (fp - fm) / (2 * h)
    return np.einsum("nk,nkd->nd", coeffs, bases)


def vip_residual(A, Q: ConstraintSet, x, grid=None) -> float:
    """``max_{v in A(x)} min_y <v, gamma'_{xy}(0)>`` over grid points ``y``.

    ``A`` is a :class:`VectorField` or a bifunction (whose ``A_F`` is used).
    Only geodesics inside ``Q`` count.
    """
    Y = _points(Q, grid)
    x = np.asarray(x, float)
    V = field_values(A, x[None, :])[0]
    best = -np.inf
    for v in V:
        val = _min_directional(Q.manifold, Q, x[None, :], v[None, :], Y)[0]
        best = max(best, val)
    return float(best)


def brute_force_vip(A, Q: ConstraintSet, grid=41, eps=None) -> OracleResult:
    """Grid points passing the VIP test at the :func:`grid_tolerance` slack."""
    grid = _as_grid(Q, grid)
    X = grid.points
    V = field_values(A, X)
    res = np.full(len(X), -np.inf)
    for j in range(V.shape[1]):
        res = np.maximum(res, _min_directional(Q.manifold, Q, X, V[:, j, :], X))
    tol = grid_tolerance(grid, res, Q.manifold) if eps is None else np.full(len(X), float(eps))
    return OracleResult(grid, res, tol, res >= -tol - 1e-12)


def set_distance(manifold: Manifold, A, B, budget=EVAL_BUDGET):
    """``max_{a in A} min_{b in B} d(a, b)``; ``inf`` if ``B`` is empty and ``A`` is not."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if len(A) == 0 or A.size == 0:
        return 0.0
    if len(B) == 0 or B.size == 0:
        return math.inf
    worst = 0.0
    step = max(1, budget // len(B))
    for s in range(0, len(A), step):
        d = manifold.dist(A[s : s + step, None, :], B[None, :, :])
        worst = max(worst, float(np.max(np.min(d, axis=1))))
    return worst


def hausdorff(manifold: Manifold, grid: Grid, mask_a, mask_b):
    """Hausdorff distance between two subsets of one grid, given as masks."""
    P = grid.points
    only_a = mask_a & ~mask_b
    only_b = mask_b & ~mask_a
    return max(
        set_distance(manifold, P[only_a], P[mask_b]),
        set_distance(manifold, P[only_b], P[mask_a]),
    )


@dataclass
class InclusionReport:
    ep: OracleResult
    vip: OracleResult
    vip_in_ep: float
    ep_in_vip: float
    tolerance: float
    diagonal_zero: bool

    @property
    def inclusion(self):
        return self.vip_in_ep <= self.tolerance

    @property
    def equality(self):
        return self.inclusion and self.ep_in_vip <= self.tolerance

    @property
    def hausdorff(self):
        return max(self.vip_in_ep, self.ep_in_vip)


def verify_inclusion_vip_ep(F: Bifunction, Q: ConstraintSet, grid=41, factor: float = 3.0) -> InclusionReport:
    """Compare the brute-force solution sets of ``VIP(A_F, Q)`` and ``EP(F, Q)``.

    Both sets live on the same grid; they are compared in Hausdorff
    distance against ``factor * spacing``.
    """
    if not Q.compact:
        raise ValueError("verify_inclusion_vip_ep needs a compact constraint set")
    grid = _as_grid(Q, grid)
    ep = brute_force_ep(F, Q, grid)
    vip = brute_force_vip(F, Q, grid)
    M = Q.manifold
    P = grid.points
    diag = float(np.max(np.abs(F(P, P))))
    return InclusionReport(
        ep=ep,
        vip=vip,
        vip_in_ep=set_distance(M, P[vip.mask & ~ep.mask], P[ep.mask]),
        ep_in_vip=set_distance(M, P[ep.mask & ~vip.mask], P[vip.mask]),
        tolerance=factor * grid.spacing,
        diagonal_zero=diag <= 1e-10,
    )


def cluster_diameter(manifold: Manifold, points) -> float:
    P = np.atleast_2d(points)
    if len(P) < 2:
        return 0.0
    return float(np.max(manifold.dist(P[:, None, :], P[None, :, :])))


# ---------------------------------------------------------------------------
# resolvent


@dataclass
class ResolventResult:
    point: np.ndarray
    inner_iters: int
    lipschitz: float
    fallback_steps: int = 0


def _select(vectors):
    return np.asarray(vectors, float)[0]


def _lipschitz_radius(M: Manifold, z, cfg: SolverConfig):
    return min(cfg.lipschitz_radius, 0.5 * M.convexity_radius(z))


def _e_field(M: Manifold, Q: ConstraintSet, x, z):
    """A vector of ``E^Q_z(x)``; second value tells whether the fallback was used."""
    u = M.log(x, z)
    if Q.geodesically_convex and bool(Q.contains(z)):
        return u, False
    if geodesic_within(Q, M.geodesic(x, u, True), 16):
        return u, False
    return u, True


def _extragradient(F: Bifunction, Q: ConstraintSet, lam, z, L_hat, cfg: SolverConfig):
    M = Q.manifold
    D4 = M.d_kappa / 4
    fallbacks = 0

    def field_at(x):
        nonlocal fallbacks
        e, fb = _e_field(M, Q, x, z)
        fallbacks += fb
        return lam * _select(subgradient_AF(F, x)) - e

    alpha = 0.5 * min(1.0, 1.0 / (lam * L_hat + 1.0))
    x = Q.project(z) if not bool(Q.contains(z)) else np.array(z, float)
    if math.isfinite(D4) and M.dist(x, z) >= D4:
        x = np.array(z, float)
    resid = math.inf
    for it in range(1, cfg.max_inner_iters + 1):
        g = field_at(x)
        while True:
            y = Q.project(M.exp(x, -alpha * g))
            dxy = float(M.dist(x, y))
            resid = dxy / alpha
            if resid < cfg.inner_tol:
                return x, it, fallbacks
            gy = field_at(y)
            gy_x = M.transport(y, x, gy)
            # step safeguard: alpha * |A(y) - A(x)| <= 0.9 d(x, y)
            if alpha * float(M.norm(x, gy_x - g)) <= 0.9 * dxy or alpha < 1e-12:
                break
            alpha *= 0.5
        x_new = Q.project(M.exp(x, -alpha * gy_x))
        if np.array_equal(x_new, x) and resid < math.sqrt(cfg.inner_tol):
            return x, it, fallbacks
        x = x_new
    raise InnerSolverError(
        f"extragradient did not reach natural residual {cfg.inner_tol:g} "
        f"(last {resid:.3g}) in {cfg.max_inner_iters} iterations",
        point=x,
        iterations=cfg.max_inner_iters,
    )


def _stencil(Q: ConstraintSet, x, h, levels=40):
    """Points ``P_Q(exp_x(±r e_i))`` for an orthonormal basis and ``r = h 2^-j``."""
    M = Q.manifold
    basis = M.tangent_basis(x)
    r = h * 0.5 ** np.arange(levels)
    dirs = np.concatenate([basis, -basis])
    v = (r[:, None, None] * dirs[None]).reshape(-1, len(x))
    return Q.project(M.exp(np.broadcast_to(x, v.shape), v))


def _oracle_grid(F: Bifunction, Q: ConstraintSet, lam, z, cfg: SolverConfig):
    """Grid search for ``EP(F_{lam,z}, Q) ∩ B(z, D_kappa/4)``, then compass-search polish.

    The polish minimises the gap ``-min_y F_{lam,z}(x, y)`` where ``y`` runs
    over the grid plus a multi-scale stencil around ``x`` (so the gap sees
    first-order information at every scale).
    """
    M = Q.manifold
    D4 = M.d_kappa / 4
    Fz = regularize(F, lam, z)
    grid = Q.grid(cfg.grid_resolution)
    P = grid.points
    cand = np.ones(len(P), bool)
    if math.isfinite(D4):
        cand = M.dist(P, np.broadcast_to(z, P.shape)) < D4
    if not cand.any():
        raise InnerSolverError("no grid point of Q inside B(z, D_kappa/4)")
    res = brute_force_ep(Fz, Q, grid, candidates=cand)
    scores = np.where(cand, res.values, -np.inf)
    x = P[int(np.argmax(scores))]
    h = grid.spacing
    evals = 0

    def gap(u):
        nonlocal evals
        evals += 1
        Y = np.concatenate([P, _stencil(Q, u, h)])
        return max(0.0, -float(row_min(Fz, u[None, :], Y)[0]))

    gx = gap(x)
    step = h
    while step > 1e-13 and gx > 0 and evals < cfg.max_inner_iters:
        moved = False
        for e in np.concatenate([M.tangent_basis(x), -M.tangent_basis(x)]):
            y = Q.project(M.exp(x, step * e))
            if math.isfinite(D4) and not float(M.dist(y, z)) < D4:
                continue
            gy = gap(y)
            if gy < gx:
                x, gx, moved = y, gy, True
                break
        if not moved:
            step *= 0.5
    return x, evals, 0


def solve_resolvent(prob: ResolventProblem, cfg: SolverConfig | None = None) -> ResolventResult:
    """Compute the selection of ``J_lambda^F(z) ∩ B(z, D_kappa / 4)``."""
    cfg = cfg or SolverConfig()
    F, Q, lam, z = prob.F, prob.Q, prob.lam, prob.z
    M = Q.manifold
    D4 = M.d_kappa / 4
    L_hat = lipschitz_estimate(F, z, _lipschitz_radius(M, z, cfg), cfg.lipschitz_samples, cfg.seed).estimate
    if not lam * L_hat < D4:
        raise StepConditionError(
            f"lambda * L_hat = {lam * L_hat:.6g} is not below D_kappa/4 = {D4:.6g}"
        )
    if cfg.inner == "extragradient":
        x, iters, fb = _extragradient(F, Q, lam, z, L_hat, cfg)
    else:
        x, iters, fb = _oracle_grid(F, Q, lam, z, cfg)
    if math.isfinite(D4) and not float(M.dist(x, z)) < D4:
        raise StepConditionError("resolvent point left B(z, D_kappa/4)")
    return ResolventResult(np.asarray(x, float), iters, L_hat, fb)


def resolvent(prob: ResolventProblem, cfg: SolverConfig | None = None) -> np.ndarray:
    return solve_resolvent(prob, cfg).point


# ---------------------------------------------------------------------------
# Algorithm P


@dataclass
class IterationRecord:
    k: int
    point: np.ndarray
    lam: float
    L_hat: float
    step: float
    residual: float
    inner_iters: int
    ball_slack: float
    status: str


CSV_COLUMNS = ["k", "lambda", "step", "residual", "L_hat", "inner_iters", "ball_slack", "status"]


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


@dataclass
class SolverTrace:
    x0: np.ndarray
    records: list = field(default_factory=list)
    status: str = "running"
    warnings: list = field(default_factory=list)
    proximity_verified: bool | None = None

    @property
    def points(self):
        return np.stack([self.x0] + [r.point for r in self.records])

    @property
    def final_point(self):
        return self.records[-1].point if self.records else self.x0

    @property
    def final_residual(self):
        return self.records[-1].residual if self.records else math.nan

    @property
    def iterations(self):
        return len(self.records)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow(
                [_fmt(v) for v in (r.k, r.lam, r.step, r.residual, r.L_hat, r.inner_iters, r.ball_slack, r.status)]
            )
        return buf.getvalue()

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())

    def summary(self) -> dict:
        return {
            "status": self.status,
            "iterations": self.iterations,
            "final_point": [float(v) for v in self.final_point],
            "final_residual": float(self.final_residual),
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def probe_grid(Q: ConstraintSet, x, spacing: float = 1e-2, max_points: int = 60_000) -> Grid:
    """Grid for residual checks with roughly the requested spacing.

    Non-compact sets are probed on a unit ball around ``x``.
    """
    if not Q.compact:
        M = Q.manifold
        r = min(1.0, 0.49 * M.convexity_radius(x))
        ball = MetricBall(M, x, r, check_radius=False)
        return _probe(ball, spacing, max_points)
    return _probe(Q, spacing, max_points)


def _extent(Q):
    from .sets import Box, ProductSet, SphericalCap

    if isinstance(Q, Box):
        return [float(np.max(Q.hi - Q.lo))]
    if isinstance(Q, MetricBall):
        return [2 * Q.radius]
    if isinstance(Q, SphericalCap):
        return [2 * Q.extent]
    if isinstance(Q, ProductSet):
        return [e for q in Q.factors for e in _extent(q)]
    raise ValueError(f"no probe grid for {Q!r}")


def _factor_dims(Q):
    from .sets import ProductSet

    if isinstance(Q, ProductSet):
        return [d for q in Q.factors for d in _factor_dims(q)]
    return [Q.manifold.dim]


def _probe(Q, spacing, max_points):
    from .sets import ProductSet

    ext = _extent(Q)
    dims = _factor_dims(Q)
    ns = [int(math.ceil(e / spacing)) + 1 for e in ext]
    total = np.prod([float(n) ** d for n, d in zip(ns, dims)])
    if total > max_points:
        shrink = (max_points / total) ** (1.0 / sum(dims))
        ns = [max(3, int(n * shrink)) for n in ns]
    ns = [n if n % 2 else n + 1 for n in ns]
    if isinstance(Q, ProductSet):
        return Q.grid(ns)
    return Q.grid(ns[0])


def algorithm_p(F: Bifunction, Q: ConstraintSet, x0, cfg: SolverConfig | None = None) -> SolverTrace:
    """Proximal point iteration ``x_{k+1} in J_{lambda_k}^F(x_k) ∩ B(x_k, D_kappa / 4)``.

    Terminates when the step falls below ``cfg.step_tol`` with EP residual
    at least ``-cfg.residual_tol`` on the probe grid, on the iteration
    budget, or when the step condition ``lambda_k L_hat < D_kappa / 4``
    fails (halving ``lambda_k`` up to 10 times first if ``auto_shrink``).
    """
    cfg = (cfg or SolverConfig()).validate()
    M = Q.manifold
    D4 = M.d_kappa / 4
    x = M.check_point(np.asarray(x0, float), tol=1e-10)
    if not bool(Q.contains(x)):
        raise ValueError("x0 is not in Q")
    trace = SolverTrace(x0=x.copy())
    probe = probe_grid(Q, x, cfg.probe_spacing, cfg.probe_max_points) if Q.compact else None
    prev_residual = -math.inf
    for k in range(cfg.max_outer_iters):
        lam = cfg.schedule(k)
        L_hat = lipschitz_estimate(F, x, _lipschitz_radius(M, x, cfg), cfg.lipschitz_samples, cfg.seed).estimate
        shrinks = 0
        while not lam * L_hat < D4 and cfg.auto_shrink and shrinks < 10:
            lam *= 0.5
            shrinks += 1
        if not lam * L_hat < D4:
            trace.records.append(
                IterationRecord(k, x.copy(), lam, L_hat, 0.0, trace.final_residual, 0, D4, "step-condition-violated")
            )
            trace.status = "step-condition-violated"
            return trace
        try:
            res = solve_resolvent(ResolventProblem(F, Q, lam, x), cfg)
        except StepConditionError:
            trace.status = "step-condition-violated"
            return trace
        except InnerSolverError as err:
            trace.warnings.append(f"k={k}: {err}")
            trace.status = "max-iters"
            return trace
        if res.fallback_steps:
            trace.warnings.append(f"k={k}: E^Q_z empty at {res.fallback_steps} inner steps")
        x_new = res.point
        step = float(M.dist(x_new, x))
        slack = D4 - step
        grid = probe if probe is not None else probe_grid(Q, x_new, cfg.probe_spacing, cfg.probe_max_points)
        residual = ep_residual(F, Q, x_new, grid)
        if residual < prev_residual - 1e-6:
            msg = f"k={k}: residual decreased {prev_residual:.3g} -> {residual:.3g}"
            log.info(msg)
            trace.warnings.append(msg)
        prev_residual = residual
        done = step < cfg.step_tol and residual >= -cfg.residual_tol
        status = "converged" if done else "ok"
        if not slack > 0:
            status = "step-condition-violated"
        trace.records.append(
            IterationRecord(k, x_new.copy(), lam, L_hat, step, residual, res.inner_iters, slack, status)
        )
        x = x_new
        if status != "ok":
            trace.status = status
            return trace
    trace.status = "max-iters"
    return trace


def verify_proximity(trace: SolverTrace, F: Bifunction, Q: ConstraintSet, grid=41) -> bool:
    """Post-hoc check of ``d(x0, EP(F, Q)) < D_kappa / 8`` against the grid oracle."""
    M = Q.manifold
    ep = brute_force_ep(F, Q, grid)
    if len(ep) == 0:
        trace.proximity_verified = False
        return False
    d = float(np.min(M.dist(np.broadcast_to(trace.x0, ep.points.shape), ep.points)))
    ok = d < M.d_kappa / 8 + ep.spacing
    trace.proximity_verified = ok
    return ok
