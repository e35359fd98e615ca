"""Bifunctions ``F(x, y)``, the fields built from them, and sampled checks.

A :class:`Bifunction` evaluates ``F`` with numpy broadcasting over leading
axes: ``F(X[:, None], Y[None, :])`` gives the full matrix of values.  Values
are extended reals; ``+inf`` is allowed and ``a - (+inf)`` is taken as
``+inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .manifolds import Euclidean, Manifold
from .sets import ConstraintSet, geodesic_within

FD_STEP = 1e-5


def ext_sub(a, b):
    """``a - b`` on extended reals with ``a - (+inf) = +inf``."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    with np.errstate(invalid="ignore"):
        out = a - b
    return np.where(np.isposinf(b) | np.isposinf(a), np.inf, out)


def linear_row_min(W, Y, offset, budget: int = 4_000_000):
    """``min_j <W[i], Y[j]> - offset[i]``, in row chunks."""
    out = np.empty(len(W))
    step = max(1, budget // max(len(Y), 1))
    for s in range(0, len(W), step):
        out[s : s + step] = np.min(W[s : s + step] @ Y.T, axis=1) - offset[s : s + step]
    return out


class VectorField:
    """A (possibly set-valued) vector field ``x -> V(x) ⊆ T_x M``.

    With ``single_valued=True`` the callable maps points of shape ``(..., d)``
    to vectors of the same shape.  Otherwise it maps one point to an array of
    shape ``(k, d)`` holding finitely many vectors.
    """

    def __init__(self, manifold: Manifold, func: Callable, single_valued: bool = True, name="V"):
        self.manifold = manifold
        self.func = func
        self.single_valued = single_valued
        self.name = name

    def at(self, x):
        """The finite set ``V(x)`` as an array of shape ``(k, d)``."""
        out = np.asarray(self.func(np.asarray(x, float)), float)
        return out[None, :] if self.single_valued else np.atleast_2d(out)

    def __call__(self, x):
        if not self.single_valued:
            raise TypeError("set-valued field; use .at(x)")
        return np.asarray(self.func(np.asarray(x, float)), float)

    def __repr__(self):
        return f"VectorField({self.name})"


class Bifunction:
    """Evaluator for ``F(x, y)`` plus an optional subgradient oracle for ``A_F``.

    Parameters
    ----------
    manifold : Manifold
    func : callable
        ``func(x, y)`` broadcasting over leading axes (unless
        ``vectorized=False``, in which case it is called pair by pair).
    subgradient : callable, optional
        ``x -> array (k, d)``: finitely many vectors generating
        ``A_F(x) = ∂F(x, ·)(x)``.
    smooth : bool
        If true and no oracle is given, ``A_F`` is computed by central
        finite differences.
    min_over : callable, optional
        ``(X, Y) -> min_j F(X[i], Y[j])`` for 2-d point arrays; an exact
        shortcut used by the grid oracles when ``F`` has exploitable
        structure.
    field : VectorField, optional
        Single-valued field generating ``A_F`` (vectorized access).
    """

    def __init__(
        self,
        manifold: Manifold,
        func: Callable,
        subgradient: Callable | None = None,
        smooth: bool = False,
        name: str = "custom",
        vectorized: bool = True,
        min_over: Callable | None = None,
        field: "VectorField | None" = None,
    ):
        self.manifold = manifold
        self.func = func
        self.oracle = subgradient
        self.smooth = smooth
        self.name = name
        self.vectorized = vectorized
        self.min_over = min_over
        self.field = field

    def __call__(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if self.vectorized:
            return np.asarray(self.func(x, y), float)
        shape = np.broadcast_shapes(x.shape, y.shape)
        xs = np.broadcast_to(x, shape).reshape(-1, shape[-1])
        ys = np.broadcast_to(y, shape).reshape(-1, shape[-1])
        vals = np.array([float(self.func(a, b)) for a, b in zip(xs, ys)])
        return vals.reshape(shape[:-1])

    def __repr__(self):
        return f"Bifunction({self.name})"


# ---------------------------------------------------------------------------
# constructors


def zero(manifold: Manifold) -> Bifunction:
    d = manifold.ambient_dim
    return Bifunction(
        manifold,
        lambda x, y: np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y))[:-1]),
        subgradient=lambda x: np.zeros((1, d)),
        smooth=True,
        name="zero",
        min_over=lambda X, Y: np.zeros(len(X)),
    )


def optimization(manifold: Manifold, f: Callable, grad: Callable | None = None, name="optimization"):
    """``F(x, y) = f(y) - f(x)``; its equilibria are the minimisers of ``f``.

    ``grad`` may return one vector or a ``(k, d)`` array of subgradients.
    """
    oracle = None
    if grad is not None:
        oracle = lambda x: np.atleast_2d(grad(x))  # noqa: E731
    return Bifunction(
        manifold,
        lambda x, y: ext_sub(f(y), f(x)),
        subgradient=oracle,
        smooth=grad is None,
        name=name,
        min_over=lambda X, Y: ext_sub(np.full(len(X), np.min(f(Y))), f(X)),
    )


def gv(field_: VectorField) -> Bifunction:
    """``G_V(x, y) = sup <u, v>`` over ``u ∈ V(x)`` and minimal directions ``v``."""
    M = field_.manifold
    if field_.single_valued:

        def func(x, y):
            return M.log_support(x, y, np.broadcast_to(field_(x), np.broadcast_shapes(np.shape(x), np.shape(y))))

        min_over = None
        if isinstance(M, Euclidean):
            # <V(x), y - x> is linear in y
            def min_over(X, Y):
                VX = field_(X)
                return linear_row_min(VX, Y, np.sum(VX * X, axis=1))

        return Bifunction(
            M, func, subgradient=field_.at, name=f"gv({field_.name})", min_over=min_over, field=field_
        )

    def func_multi(x, y):
        return max(float(M.log_support(x, y, u)) for u in field_.at(x))

    return Bifunction(
        M, func_multi, subgradient=field_.at, name=f"gv({field_.name})", vectorized=False
    )


def gz(manifold: Manifold, z) -> Bifunction:
    """``G_z(x, y) = sup <-u, v>`` over ``u ∈ exp_x^{-1} z`` and ``v ∈ exp_x^{-1} y``."""
    z = np.asarray(z, float)

    def func(x, y):
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        return manifold.log_pair_support(
            np.broadcast_to(x, shape), np.broadcast_to(z, shape), np.broadcast_to(y, shape)
        )

    def oracle(x):
        return -np.array(manifold.log_min(x, z).representatives())

    return Bifunction(manifold, func, subgradient=oracle, name="gz")


def eval_GV(V: VectorField, x, y) -> float:
    """Single-pair ``G_V`` through the explicit direction sets."""
    M = V.manifold
    logs = M.log_min(np.asarray(x, float), np.asarray(y, float))
    return max(logs.support(u) for u in V.at(x))


def eval_Gz(manifold: Manifold, z, x, y) -> float:
    from .manifolds import sup_pairing

    x = np.asarray(x, float)
    return sup_pairing(manifold.log_min(x, np.asarray(z, float)), manifold.log_min(x, np.asarray(y, float)))


def regularize(F: Bifunction, lam: float, z) -> Bifunction:
    """``F_{lam,z}(x, y) = lam * F(x, y) + G_z(x, y)``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    M = F.manifold
    G = gz(M, z)

    def func(x, y):
        return lam * F(x, y) + G(x, y)

    oracle = None
    if F.oracle is not None:

        def oracle(x):
            a = np.atleast_2d(F.oracle(x))
            b = G.oracle(x)
            return np.array([lam * u + w for u in a for w in b])

    return Bifunction(
        M,
        func,
        subgradient=oracle,
        smooth=F.smooth,
        name=f"reg({F.name}, {lam:g})",
        vectorized=F.vectorized,
    )


def affine_vip(A, b) -> Bifunction:
    """Euclidean ``F(x, y) = <A x + b, y - x>``."""
    A = np.atleast_2d(np.asarray(A, float))
    b = np.asarray(b, float)
    M = Euclidean(A.shape[0])
    V = VectorField(M, lambda x: x @ A.T + b, name="affine")
    F = gv(V)
    F.name = "affine-vip"
    return F


# ---------------------------------------------------------------------------
# A_F and checks


def finite_difference_gradient(F: Bifunction, x, h: float = FD_STEP):
    """Riemannian gradient of ``y -> F(x, y)`` at ``y = x`` by central differences.

    Each difference quotient is taken along ``exp(x, ±h e_i)`` for an
    orthonormal tangent basis ``e_i``.
    """
    M = F.manifold
    x = np.asarray(x, float)
    basis = M.tangent_basis(x)
    xs = np.broadcast_to(x, basis.shape)
    fp = F(xs, M.exp(xs, h * basis))
    fm = F(xs, M.exp(xs, -h * basis))
    coeffs = (fp - fm) / (2 * h)
    return coeffs @ basis


def subgradient_AF(F: Bifunction, x):
    """Finitely many vectors generating ``A_F(x) = ∂F(x, ·)(x)``, shape ``(k, d)``."""
    if F.oracle is not None:
        return np.atleast_2d(np.asarray(F.oracle(np.asarray(x, float)), float))
    if F.smooth:
        return finite_difference_gradient(F, x)[None, :]
    raise ValueError(f"{F.name}: no subgradient oracle and not flagged smooth")


def af_field(F: Bifunction) -> VectorField:
    return VectorField(F.manifold, lambda x: subgradient_AF(F, x), single_valued=False, name=f"A[{F.name}]")


@dataclass
class MonotonicityReport:
    worst_value: float
    witness: tuple | None
    monotone: bool
    strict: bool
    diagonal_max: float
    n_pairs: int


def check_monotone(F: Bifunction, Q: ConstraintSet, n_pairs: int = 500, seed: int = 0, tol: float = 1e-10):
    """Largest ``F(x, y) + F(y, x)`` over sampled pairs of ``Q``."""
    rng = np.random.default_rng(seed)
    X = Q.sample(rng, n_pairs)
    Y = Q.sample(rng, n_pairs)
    s = F(X, Y) + F(Y, X)
    s = np.where(np.isnan(s), np.inf, s)
    i = int(np.argmax(s))
    diag = float(np.max(np.abs(F(X, X))))
    worst = float(s[i])
    monotone = worst <= tol
    return MonotonicityReport(
        worst_value=worst,
        witness=(X[i], Y[i]),
        monotone=monotone,
        strict=monotone and diag <= tol,
        diagonal_max=diag,
        n_pairs=n_pairs,
    )


@dataclass
class ConvexityReport:
    n_tests: int
    violations: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.violations


def check_pointwise_weak_convexity(
    F: Bifunction, Q: ConstraintSet, n_points: int = 20, n_dirs: int = 10, seed: int = 0, slack: float = 1e-9
) -> ConvexityReport:
    """Midpoint-convexity of ``t -> F(x, gamma(t))`` on a 9-point grid.

    ``gamma`` is the minimal geodesic returned by ``log`` from each sampled
    ``x`` to each sampled ``y``.  A pass is evidence, not proof.
    """
    M = Q.manifold
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, 9)
    report = ConvexityReport(0)
    for x in Q.sample(rng, n_points):
        for y in Q.sample(rng, n_dirs):
            v = M.log(x, y)
            pts = M.exp(np.broadcast_to(x, (len(t), len(x))), t[:, None] * v)
            phi = F(np.broadcast_to(x, pts.shape), pts)
            excess = phi[1:-1] - 0.5 * (phi[:-2] + phi[2:])
            report.n_tests += 1
            j = int(np.argmax(excess))
            if excess[j] > slack:
                report.violations.append((x, y, float(t[j + 1]), float(excess[j])))
    return report


def subgradient_inequality_test(F: Bifunction, x, v, samples=50, seed: int = 0, Q=None, radius=1.0, tol=1e-8):
    """``F(x, y) >= F(x, x) + <v, gamma'(0)> - tol`` at every sampled ``y``.

    ``samples`` is a count (points drawn from ``Q``, or from the ball of
    ``radius`` around ``x``) or an explicit array of points.
    """
    M = F.manifold
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    if np.ndim(samples) == 0:
        rng = np.random.default_rng(seed)
        if Q is not None:
            Y = Q.sample(rng, int(samples))
        else:
            from .sets import MetricBall

            Y = MetricBall(M, x, radius, check_radius=False).sample(rng, int(samples))
    else:
        Y = np.asarray(samples, float)
    xs = np.broadcast_to(x, Y.shape)
    lhs = F(xs, Y)
    rhs = F(x, x) + M.inner(xs, np.broadcast_to(v, Y.shape), M.log(xs, Y))
    return bool(np.all(lhs >= rhs - tol))


@dataclass
class LipschitzEstimate:
    point: np.ndarray
    radius: float
    samples: int
    estimate: float


def lipschitz_estimate(F: Bifunction, x, radius: float, n: int = 200, seed: int = 0) -> LipschitzEstimate:
    """Sampled center Lipschitz constant of ``F(x, ·)`` at ``x``."""
    M = F.manifold
    x = np.asarray(x, float)
    if not radius < M.convexity_radius(x):
        raise ValueError("radius must be below the convexity radius at x")
    rng = np.random.default_rng(seed)
    basis = M.tangent_basis(x)
    g = rng.normal(size=(n, len(basis)))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * (1.0 - rng.uniform(size=(n, 1)))
    # include the basis directions at full radius
    dirs = np.concatenate([g * r, radius * np.eye(len(basis)), -radius * np.eye(len(basis))])
    v = dirs @ basis
    xs = np.broadcast_to(x, v.shape)
    Y = M.exp(xs, v)
    d = M.dist(xs, Y)
    vals = np.abs(F(xs, Y) - F(x, x)) / d
    est = float(np.max(vals)) if np.all(np.isfinite(vals)) else math.inf
    return LipschitzEstimate(x, float(radius), len(v), est)


@dataclass
class FieldMonotonicityReport:
    worst_value: float
    witness: tuple | None
    n_pairs: int

    def holds(self, tol=1e-8):
        return self.worst_value <= tol


def check_field_monotone(field_: VectorField, Q: ConstraintSet, n_pairs: int = 500, seed: int = 0):
    """Largest ``<u, gamma'(0)> - <w, gamma'(1)>`` over sampled pairs.

    ``u ∈ V(x)``, ``w ∈ V(y)`` and ``gamma`` is the minimal geodesic from
    ``x`` to ``y``; pairs whose geodesic leaves ``Q`` are skipped.
    """
    M = field_.manifold
    rng = np.random.default_rng(seed)
    X = Q.sample(rng, n_pairs)
    Y = Q.sample(rng, n_pairs)
    worst, witness, used = -math.inf, None, 0
    for x, y in zip(X, Y):
        if M.log_min(x, y).degenerate:
            continue
        vxy = M.log(x, y)
        if not Q.geodesically_convex and not geodesic_within(Q, M.geodesic(x, vxy, True)):
            continue
        vyx = M.log(y, x)
        used += 1
        for u in field_.at(x):
            for w in field_.at(y):
                val = float(M.inner(x, u, vxy) + M.inner(y, w, vyx))
                if val > worst:
                    worst, witness = val, (x, y)
    return FieldMonotonicityReport(worst, witness, used)
