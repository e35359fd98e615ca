"""Closed-form Riemannian geometry on a few manifold families.

Points and tangent vectors are plain ``numpy`` arrays in ambient
coordinates.  Every operation broadcasts over leading axes, so ``x`` of
shape ``(n, d)`` and ``v`` of shape ``(n, d)`` give ``n`` results at once.

Supported families:

* :class:`Euclidean` -- ``R^n``, flat.
* :class:`Sphere` -- unit sphere ``S^n`` embedded in ``R^{n+1}`` (default ``S^2``).
* :class:`Hyperbolic` -- hyperboloid model of ``H^n`` in Minkowski space
  ``R^{1,n}``; the first coordinate is the time coordinate.
* :class:`Product` -- finite products with the product metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

POINT_TOL = 1e-12
TANGENT_TOL = 1e-10
# pairs closer than this to distance pi on the sphere are treated as antipodal
ANTIPODAL_TOL = 1e-9


def d_kappa(kappa: float) -> float:
    """Return ``pi / sqrt(kappa)`` for ``kappa > 0`` and ``inf`` otherwise."""
    if kappa > 0:
        return math.pi / math.sqrt(kappa)
    return math.inf


def _norm(v):
    return np.sqrt(np.sum(v * v, axis=-1))


def _dot(u, v):
    return np.sum(u * v, axis=-1)


def _sinc_ratio(theta):
    """sin(theta)/theta with the removable singularity filled in."""
    safe = np.where(theta == 0, 1.0, theta)
    return np.where(theta < 1e-8, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)


def _sinhc_ratio(theta):
    safe = np.where(theta == 0, 1.0, theta)
    return np.where(theta < 1e-8, 1.0 + theta**2 / 6.0, np.sinh(safe) / safe)


# ---------------------------------------------------------------------------
# sets of minimal-geodesic directions


@dataclass(frozen=True)
class FiniteLogs:
    """Finitely many minimal-geodesic directions (usually just one)."""

    manifold: "Manifold"
    base: np.ndarray
    vectors: tuple

    degenerate = False

    def support(self, w):
        """``sup <w, v>`` over the set."""
        return max(float(self.manifold.inner(self.base, w, v)) for v in self.vectors)

    def max_norm(self):
        return max(float(self.manifold.norm(self.base, v)) for v in self.vectors)

    def representatives(self):
        return list(self.vectors)


@dataclass(frozen=True)
class AntipodalLogs:
    """All directions ``radius * w`` with ``w`` a unit tangent vector at ``base``.

    ``basis`` is an orthonormal basis of the tangent space, shape ``(k, d)``.
    """

    manifold: "Manifold"
    base: np.ndarray
    basis: np.ndarray
    radius: float

    degenerate = True

    def support(self, w):
        # only the tangential part of w can be paired with the circle
        return self.radius * float(_norm(self.basis @ w))

    def max_norm(self):
        return self.radius

    def representatives(self):
        return [self.radius * b for b in self.basis] + [-self.radius * b for b in self.basis]


@dataclass(frozen=True)
class ProductLogs:
    """Cartesian product of per-factor direction sets."""

    manifold: "Product"
    base: np.ndarray
    parts: tuple

    @property
    def degenerate(self):
        return any(p.degenerate for p in self.parts)

    def support(self, w):
        ws = self.manifold.split(w)
        return sum(p.support(wi) for p, wi in zip(self.parts, ws))

    def max_norm(self):
        return math.sqrt(sum(p.max_norm() ** 2 for p in self.parts))

    def representatives(self):
        reps = [np.zeros(0)]
        for p in self.parts:
            reps = [np.concatenate([r, v]) for r in reps for v in p.representatives()]
        return reps


def sup_pairing(a, b) -> float:
    """``sup <-u, v>`` over ``u`` in ``a`` and ``v`` in ``b`` (same base point)."""
    if isinstance(a, ProductLogs):
        return sum(sup_pairing(pa, pb) for pa, pb in zip(a.parts, b.parts))
    if isinstance(a, AntipodalLogs):
        # -u sweeps the whole circle of radius pi, so the sup is radius * |v|
        return a.radius * b.max_norm()
    return max(b.support(-u) for u in a.vectors)


@dataclass(frozen=True)
class GeodesicSegment:
    """The geodesic ``t -> exp(start, t * velocity)`` on ``[0, 1]``."""

    manifold: "Manifold"
    start: np.ndarray
    velocity: np.ndarray
    minimal: bool = True

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        v = t[..., None] * self.velocity
        return self.manifold.exp(np.broadcast_to(self.start, v.shape), v)

    @property
    def end(self):
        return self.manifold.exp(self.start, self.velocity)

    @property
    def length(self):
        return float(self.manifold.norm(self.start, self.velocity))

    def velocity_at(self, t):
        """Velocity ``gamma'(t)``, obtained by parallel transport of the initial velocity."""
        return self.manifold.transport(self.start, self(t), self.velocity)


# ---------------------------------------------------------------------------
# manifolds


class Manifold:
    """Base class.  Subclasses fill in the closed-form geometry."""

    dim: int
    ambient_dim: int
    kappa: float = 0.0
    name: str = "manifold"

    # -- metric ------------------------------------------------------------
    def inner(self, x, u, v):
        return _dot(u, v)

    def norm(self, x, v):
        return np.sqrt(np.maximum(self.inner(x, v, v), 0.0))

    # -- constraints -------------------------------------------------------
    def proj_point(self, x):
        return np.asarray(x, dtype=float)

    def proj_tangent(self, x, v):
        return np.asarray(v, dtype=float)

    def point_residual(self, x):
        """How badly ``x`` violates the defining constraint (0 for exact points)."""
        return np.zeros(np.shape(x)[:-1])

    def tangent_residual(self, x, v):
        return np.zeros(np.shape(v)[:-1])

    def check_point(self, x, tol=POINT_TOL):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.ambient_dim:
            raise ValueError(
                f"{self.name}: point has {x.shape[-1]} coordinates, expected {self.ambient_dim}"
            )
        if np.any(self.point_residual(x) > tol):
            raise ValueError(f"{self.name}: point is off the manifold")
        return x

    def check_tangent(self, x, v, tol=TANGENT_TOL):
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.ambient_dim:
            raise ValueError(
                f"{self.name}: vector has {v.shape[-1]} coordinates, expected {self.ambient_dim}"
            )
        scale = np.maximum(1.0, _norm(v))
        if np.any(self.tangent_residual(x, v) > tol * scale):
            raise ValueError(f"{self.name}: vector is not tangent at the base point")
        return v

    # -- geometry ----------------------------------------------------------
    def exp(self, x, v):
        raise NotImplementedError

    def log(self, x, y):
        """One minimal-geodesic direction from ``x`` to ``y``.

        For antipodal sphere pairs a deterministic representative is returned;
        use :meth:`log_min` to get the whole set.
        """
        raise NotImplementedError

    def log_min(self, x, y):
        """All minimal-geodesic directions from ``x`` to ``y`` (single pair)."""
        return FiniteLogs(self, np.asarray(x, float), (self.log(x, y),))

    def dist(self, x, y):
        raise NotImplementedError

    def log_support(self, x, y, w):
        """``sup <w, v>`` over minimal directions ``v`` from ``x`` to ``y`` (vectorised)."""
        return self.inner(x, w, self.log(x, y))

    def log_pair_support(self, x, z, y):
        """``sup <-u, v>`` over ``u`` in ``exp_x^{-1} z`` and ``v`` in ``exp_x^{-1} y`` (vectorised)."""
        return -self.inner(x, self.log(x, z), self.log(x, y))

    def transport(self, x, y, v):
        """Parallel transport of ``v`` from ``x`` to ``y`` along the minimal geodesic."""
        raise NotImplementedError

    def convexity_radius(self, x=None) -> float:
        return math.inf

    @property
    def d_kappa(self) -> float:
        return d_kappa(self.kappa)

    def tangent_basis(self, x):
        """Orthonormal basis of ``T_x M`` as rows, by Gram-Schmidt on ambient axes."""
        x = np.asarray(x, dtype=float)
        basis = []
        for i in range(self.ambient_dim):
            e = np.zeros(self.ambient_dim)
            e[i] = 1.0
            w = self.proj_tangent(x, e)
            for b in basis:
                w = w - self.inner(x, w, b) * b
            n = float(self.norm(x, w))
            if n > 1e-8:
                basis.append(w / n)
            if len(basis) == self.dim:
                break
        return np.array(basis)

    def geodesic(self, x, v, minimal=None) -> GeodesicSegment:
        if minimal is None:
            minimal = float(self.norm(x, v)) <= self.injectivity_radius()
        return GeodesicSegment(self, np.asarray(x, float), np.asarray(v, float), minimal)

    def minimal_geodesic(self, x, y) -> GeodesicSegment:
        return GeodesicSegment(self, np.asarray(x, float), self.log(x, y), True)

    def injectivity_radius(self) -> float:
        return math.inf

    # -- sampling ----------------------------------------------------------
    def random_point(self, rng, size=None, scale=1.0):
        raise NotImplementedError

    def random_tangent(self, rng, x, scale=1.0):
        x = np.asarray(x, dtype=float)
        v = rng.normal(size=x.shape) * scale
        return self.proj_tangent(x, v)

    def __repr__(self):
        return self.name


class Euclidean(Manifold):
    def __init__(self, n: int):
        self.dim = self.ambient_dim = int(n)
        self.kappa = 0.0
        self.name = f"euclidean({self.dim})"

    def exp(self, x, v):
        return np.asarray(x, float) + np.asarray(v, float)

    def log(self, x, y):
        return np.asarray(y, float) - np.asarray(x, float)

    def dist(self, x, y):
        return _norm(np.asarray(y, float) - np.asarray(x, float))

    def transport(self, x, y, v):
        return np.array(v, dtype=float)

    def random_point(self, rng, size=None, scale=1.0):
        shape = (() if size is None else (size,)) + (self.dim,)
        return rng.normal(size=shape) * scale

    def __eq__(self, other):
        return isinstance(other, Euclidean) and other.dim == self.dim

    def __hash__(self):
        return hash(("euclidean", self.dim))


class Sphere(Manifold):
    """Unit sphere ``S^n`` in ``R^{n+1}``; sectional curvature 1."""

    def __init__(self, n: int = 2):
        self.dim = int(n)
        self.ambient_dim = self.dim + 1
        self.kappa = 1.0
        self.name = "sphere2" if self.dim == 2 else f"sphere({self.dim})"

    def proj_point(self, x):
        x = np.asarray(x, dtype=float)
        return x / _norm(x)[..., None]

    def proj_tangent(self, x, v):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        return v - _dot(x, v)[..., None] * x

    def point_residual(self, x):
        return np.abs(_norm(x) - 1.0)

    def tangent_residual(self, x, v):
        return np.abs(_dot(x, v))

    def exp(self, x, v):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        t = _norm(v)[..., None]
        y = np.cos(t) * x + _sinc_ratio(t) * v
        return self.proj_point(y)

    def dist(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        return 2.0 * np.arctan2(_norm(x - y), _norm(x + y))

    def _is_antipodal(self, x, y):
        return np.pi - self.dist(x, y) <= ANTIPODAL_TOL

    def log(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        diff = y - x
        # y - <x,y> x written without cancellation
        u = diff + 0.5 * _dot(diff, diff)[..., None] * x
        u = u - _dot(x, u)[..., None] * x
        theta = self.dist(x, y)[..., None]
        un = _norm(u)[..., None]
        anti = self._is_antipodal(x, y)[..., None]
        fallback = self._fixed_tangent(x)
        direction = np.where(un > 0, u / np.where(un > 0, un, 1.0), fallback)
        direction = np.where(anti, fallback, direction)
        return theta * direction

    def _fixed_tangent(self, x):
        """A deterministic unit tangent vector at each ``x`` (used for antipodes)."""
        x = np.asarray(x, float)
        k = np.argmin(np.abs(x), axis=-1)
        e = np.zeros_like(x)
        np.put_along_axis(e, k[..., None], 1.0, axis=-1)
        w = e - _dot(x, e)[..., None] * x
        return w / _norm(w)[..., None]

    def log_min(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if bool(self._is_antipodal(x, y)):
            return AntipodalLogs(self, x, self.tangent_basis(x), math.pi)
        return FiniteLogs(self, x, (self.log(x, y),))

    def log_support(self, x, y, w):
        x = np.asarray(x, float)
        w = np.asarray(w, float)
        regular = _dot(w, self.log(x, y))
        circle = np.pi * _norm(self.proj_tangent(x, w))
        return np.where(self._is_antipodal(x, y), circle, regular)

    def log_pair_support(self, x, z, y):
        u = self.log(x, z)
        regular = self.log_support(x, y, -u)
        # -u runs over the whole circle of radius pi when z is antipodal to x
        return np.where(self._is_antipodal(x, z), np.pi * self.dist(x, y), regular)

    def transport(self, x, y, v):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        v = np.asarray(v, float)
        if np.any(self._is_antipodal(x, y)):
            raise ValueError("parallel transport between antipodal points is not unique")
        out = v - (_dot(y, v) / (1.0 + _dot(x, y)))[..., None] * (x + y)
        return self.proj_tangent(y, out)

    def convexity_radius(self, x=None) -> float:
        return math.pi / 2.0

    def injectivity_radius(self) -> float:
        return math.pi

    def random_point(self, rng, size=None, scale=1.0):
        shape = (() if size is None else (size,)) + (self.ambient_dim,)
        return self.proj_point(rng.normal(size=shape))

    def __eq__(self, other):
        return isinstance(other, Sphere) and other.dim == self.dim

    def __hash__(self):
        return hash(("sphere", self.dim))


def minkowski(u, v):
    """Minkowski form ``-u_0 v_0 + sum_i u_i v_i``."""
    return _dot(u, v) - 2.0 * u[..., 0] * v[..., 0]


class Hyperbolic(Manifold):
    """Hyperboloid ``{x : <x,x>_L = -1, x_0 > 0}``; sectional curvature -1."""

    def __init__(self, n: int = 2):
        self.dim = int(n)
        self.ambient_dim = self.dim + 1
        self.kappa = 0.0
        self.name = "hyperbolic2" if self.dim == 2 else f"hyperbolic({self.dim})"

    @property
    def origin(self):
        o = np.zeros(self.ambient_dim)
        o[0] = 1.0
        return o

    def inner(self, x, u, v):
        return minkowski(np.asarray(u, float), np.asarray(v, float))

    def proj_point(self, x):
        x = np.array(x, dtype=float)
        x[..., 0] = np.sqrt(1.0 + np.sum(x[..., 1:] ** 2, axis=-1))
        return x

    def proj_tangent(self, x, v):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        return v + minkowski(x, v)[..., None] * x

    def point_residual(self, x):
        x = np.asarray(x, float)
        scale = np.maximum(1.0, x[..., 0] ** 2)
        return np.abs(minkowski(x, x) + 1.0) / scale + np.where(x[..., 0] > 0, 0.0, np.inf)

    def tangent_residual(self, x, v):
        x = np.asarray(x, float)
        return np.abs(minkowski(x, v)) / np.maximum(1.0, np.abs(x[..., 0]))

    def exp(self, x, v):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        t = self.norm(x, v)[..., None]
        return self.proj_point(np.cosh(t) * x + _sinhc_ratio(t) * v)

    def _chord2(self, x, y):
        d = np.asarray(y, float) - np.asarray(x, float)
        return np.maximum(minkowski(d, d), 0.0)

    def dist(self, x, y):
        return 2.0 * np.arcsinh(np.sqrt(self._chord2(x, y)) / 2.0)

    def log(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        diff = y - x
        # y + <x,y>_L x with <x,y>_L = -1 - |y-x|_L^2 / 2
        u = diff - 0.5 * self._chord2(x, y)[..., None] * x
        u = self.proj_tangent(x, u)
        un = self.norm(x, u)[..., None]
        d = self.dist(x, y)[..., None]
        return np.where(un > 0, d * u / np.where(un > 0, un, 1.0), 0.0)

    def transport(self, x, y, v):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        v = np.asarray(v, float)
        out = v + (minkowski(y, v) / (1.0 - minkowski(x, y)))[..., None] * (x + y)
        return self.proj_tangent(y, out)

    def random_point(self, rng, size=None, scale=1.0):
        shape = (() if size is None else (size,)) + (self.ambient_dim,)
        v = rng.normal(size=shape) * scale
        v[..., 0] = 0.0
        o = np.broadcast_to(self.origin, shape)
        return self.exp(o, v)

    def __eq__(self, other):
        return isinstance(other, Hyperbolic) and other.dim == self.dim

    def __hash__(self):
        return hash(("hyperbolic", self.dim))


class Product(Manifold):
    """Product manifold; points are concatenations of factor points."""

    def __init__(self, factors: Sequence[Manifold]):
        if not factors:
            raise ValueError("product needs at least one factor")
        self.factors = tuple(factors)
        self.dim = sum(f.dim for f in self.factors)
        self.ambient_dim = sum(f.ambient_dim for f in self.factors)
        self.kappa = max(f.kappa for f in self.factors)
        self.name = "product([" + ", ".join(f.name for f in self.factors) + "])"
        bounds = np.cumsum([0] + [f.ambient_dim for f in self.factors])
        self.slices = tuple(slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]))

    def split(self, x):
        x = np.asarray(x, float)
        return [x[..., s] for s in self.slices]

    def join(self, parts):
        return np.concatenate([np.asarray(p, float) for p in parts], axis=-1)

    def _map2(self, fn, x, v):
        return self.join([fn(f, a, b) for f, a, b in zip(self.factors, self.split(x), self.split(v))])

    def inner(self, x, u, v):
        return sum(
            f.inner(a, b, c)
            for f, a, b, c in zip(self.factors, self.split(x), self.split(u), self.split(v))
        )

    def proj_point(self, x):
        return self.join([f.proj_point(a) for f, a in zip(self.factors, self.split(x))])

    def proj_tangent(self, x, v):
        return self._map2(lambda f, a, b: f.proj_tangent(a, b), x, v)

    def point_residual(self, x):
        return np.max(
            np.stack([f.point_residual(a) for f, a in zip(self.factors, self.split(x))]), axis=0
        )

    def tangent_residual(self, x, v):
        return np.max(
            np.stack(
                [
                    f.tangent_residual(a, b)
                    for f, a, b in zip(self.factors, self.split(x), self.split(v))
                ]
            ),
            axis=0,
        )

    def exp(self, x, v):
        return self._map2(lambda f, a, b: f.exp(a, b), x, v)

    def log(self, x, y):
        return self._map2(lambda f, a, b: f.log(a, b), x, y)

    def log_min(self, x, y):
        parts = tuple(f.log_min(a, b) for f, a, b in zip(self.factors, self.split(x), self.split(y)))
        return ProductLogs(self, np.asarray(x, float), parts)

    def log_support(self, x, y, w):
        return sum(
            f.log_support(a, b, c)
            for f, a, b, c in zip(self.factors, self.split(x), self.split(y), self.split(w))
        )

    def log_pair_support(self, x, z, y):
        return sum(
            f.log_pair_support(a, c, b)
            for f, a, b, c in zip(self.factors, self.split(x), self.split(y), self.split(z))
        )

    def dist(self, x, y):
        sq = sum(f.dist(a, b) ** 2 for f, a, b in zip(self.factors, self.split(x), self.split(y)))
        return np.sqrt(sq)

    def transport(self, x, y, v):
        xs, ys, vs = self.split(x), self.split(y), self.split(v)
        return self.join([f.transport(a, b, c) for f, a, b, c in zip(self.factors, xs, ys, vs)])

    def convexity_radius(self, x=None) -> float:
        xs = self.split(x) if x is not None else [None] * len(self.factors)
        return min(f.convexity_radius(a) for f, a in zip(self.factors, xs))

    def injectivity_radius(self) -> float:
        return min(f.injectivity_radius() for f in self.factors)

    def tangent_basis(self, x):
        rows = []
        for f, s, a in zip(self.factors, self.slices, self.split(x)):
            for b in f.tangent_basis(a):
                row = np.zeros(self.ambient_dim)
                row[s] = b
                rows.append(row)
        return np.array(rows)

    def random_point(self, rng, size=None, scale=1.0):
        return self.join([f.random_point(rng, size, scale) for f in self.factors])

    def random_tangent(self, rng, x, scale=1.0):
        return self.join(
            [f.random_tangent(rng, a, scale) for f, a in zip(self.factors, self.split(x))]
        )

    def __eq__(self, other):
        return isinstance(other, Product) and other.factors == self.factors

    def __hash__(self):
        return hash(("product", self.factors))


def euclidean(n: int) -> Euclidean:
    return Euclidean(n)


def sphere2() -> Sphere:
    return Sphere(2)


def hyperbolic2() -> Hyperbolic:
    return Hyperbolic(2)


def product(factors: Sequence[Manifold]) -> Product:
    return Product(factors)


# ---------------------------------------------------------------------------
# validated entry points


def exp(manifold: Manifold, x, v):
    """Exponential map with shape and tangency checks."""
    x = manifold.check_point(x)
    v = manifold.check_tangent(x, v)
    return manifold.exp(x, v)


def log_min(manifold: Manifold, x, y):
    """Set of minimal-geodesic directions from ``x`` to ``y``.

    Returns a :class:`FiniteLogs`, :class:`AntipodalLogs` or
    :class:`ProductLogs`; check ``.degenerate`` for the antipodal case.
    """
    return manifold.log_min(manifold.check_point(x), manifold.check_point(y))


def parallel_transport(manifold: Manifold, x, y, v):
    x = manifold.check_point(x)
    y = manifold.check_point(y)
    v = manifold.check_tangent(x, v)
    return manifold.transport(x, y, v)


def distance(manifold: Manifold, x, y):
    return manifold.dist(manifold.check_point(x), manifold.check_point(y))


def convexity_radius(manifold: Manifold, x=None) -> float:
    return manifold.convexity_radius(x)
