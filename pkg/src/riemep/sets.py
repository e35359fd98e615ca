"""Closed constraint sets ``Q`` with membership, projection, grids and sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .manifolds import Euclidean, Manifold, Product, Sphere

MEMBER_TOL = 1e-10


class ProjectionUnsupported(NotImplementedError):
    pass


@dataclass
class Grid:
    """Finite point cloud on ``Q`` with a lattice neighbour graph.

    ``adjacency`` links points that are neighbours along one lattice axis;
    ``spacing`` is the largest distance between linked points.
    """

    points: np.ndarray
    adjacency: sparse.csr_matrix
    spacing: float

    def __len__(self):
        return len(self.points)

    def neighbours(self, i):
        a = self.adjacency
        return a.indices[a.indptr[i] : a.indptr[i + 1]]


def _finish_grid(manifold, points, adjacency):
    adjacency = sparse.csr_matrix(adjacency)
    adjacency = ((adjacency + adjacency.T) > 0).astype(np.int8).tocsr()
    rows, cols = adjacency.nonzero()
    if len(rows):
        spacing = float(np.max(manifold.dist(points[rows], points[cols])))
    else:
        spacing = 0.0
    return Grid(np.ascontiguousarray(points), adjacency, spacing)


def _lattice(axes, mask=None):
    """Cartesian lattice from 1-d coordinate arrays, optionally masked.

    Returns the kept coordinates, shape ``(N, len(axes))``, and the axis
    neighbour adjacency among kept points.
    """
    shape = tuple(len(a) for a in axes)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    keep = np.ones(len(mesh), bool) if mask is None else mask(mesh)
    index = -np.ones(len(mesh), dtype=np.int64)
    index[keep] = np.arange(int(keep.sum()))
    full = np.arange(len(mesh)).reshape(shape)
    rows, cols = [], []
    for ax in range(len(shape)):
        a = np.take(full, np.arange(shape[ax] - 1), axis=ax).ravel()
        b = np.take(full, np.arange(1, shape[ax]), axis=ax).ravel()
        ok = keep[a] & keep[b]
        rows.append(index[a[ok]])
        cols.append(index[b[ok]])
    rows = np.concatenate(rows) if rows else np.zeros(0, np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, np.int64)
    n = int(keep.sum())
    adj = sparse.coo_matrix((np.ones(len(rows), np.int8), (rows, cols)), shape=(n, n))
    return mesh[keep], adj


def _tangent_disc_grid(manifold, center, radius, n, mask=None):
    """Grid of ``exp(center, v)`` for ``v`` on a square tangent lattice with ``|v| <= radius``."""
    basis = manifold.tangent_basis(center)
    axis = np.linspace(-radius, radius, n)

    def keep(c):
        ok = np.sum(c * c, axis=1) <= radius**2 * (1 + 1e-12)
        return ok if mask is None else ok & mask(c)

    coords, adj = _lattice([axis] * manifold.dim, keep)
    v = coords @ basis
    pts = manifold.exp(np.broadcast_to(center, v.shape), v)
    return pts, adj


class ConstraintSet:
    """Base class for the closed set ``Q``.

    Subclasses define ``contains``, and optionally ``project``, ``grid`` and
    ``sample``.  ``exact_projection`` tells whether ``project`` returns the
    metric projection or only a feasible nearby point.
    """

    manifold: Manifold
    weak_pole = None
    compact = True
    exact_projection = True
    # minimal geodesics between members are known to stay inside
    geodesically_convex = False

    def contains(self, x, tol=MEMBER_TOL):
        raise NotImplementedError

    def project(self, x):
        raise ProjectionUnsupported(f"{type(self).__name__} has no projection")

    def grid(self, n: int) -> Grid:
        raise ValueError(f"{type(self).__name__} is not compact; no exhaustive grid")

    def sample(self, rng, n: int):
        raise NotImplementedError

    def _check_pole(self):
        if self.weak_pole is not None:
            self.weak_pole = np.asarray(self.weak_pole, float)
            if not bool(self.contains(self.weak_pole)):
                raise ValueError("declared weak pole is not in the set")


def default_centre(manifold: Manifold):
    """Zero for Euclidean factors, the first ambient axis for the others."""
    if isinstance(manifold, Product):
        return manifold.join([default_centre(f) for f in manifold.factors])
    if isinstance(manifold, Euclidean):
        return np.zeros(manifold.dim)
    return manifold.proj_point(np.eye(manifold.ambient_dim)[0])


class WholeManifold(ConstraintSet):
    """``Q = M``.  Not compact; sampling draws from a ball around ``centre``."""

    compact = False

    def __init__(self, manifold: Manifold, centre=None, sample_radius=1.0, weak_pole=None):
        self.manifold = manifold
        if centre is None:
            centre = default_centre(manifold)
        self.centre = np.asarray(centre, float)
        self.sample_radius = sample_radius
        self.weak_pole = weak_pole
        self.geodesically_convex = manifold.kappa <= 0

    def contains(self, x, tol=MEMBER_TOL):
        return np.ones(np.shape(x)[:-1], bool)

    def project(self, x):
        return self.manifold.proj_point(x)

    def sample(self, rng, n):
        return MetricBall(self.manifold, self.centre, self.sample_radius, check_radius=False).sample(
            rng, n
        )

    def __repr__(self):
        return f"WholeManifold({self.manifold})"


class Box(ConstraintSet):
    """Axis-aligned box ``[lo, hi]`` in ``R^n``."""

    geodesically_convex = True

    def __init__(self, lo, hi, weak_pole=None):
        self.lo = np.atleast_1d(np.asarray(lo, float))
        self.hi = np.atleast_1d(np.asarray(hi, float))
        if self.lo.shape != self.hi.shape or np.any(self.lo > self.hi):
            raise ValueError("box needs lo <= hi with matching shapes")
        self.manifold = Euclidean(len(self.lo))
        self.weak_pole = weak_pole if weak_pole is not None else (self.lo + self.hi) / 2
        self._check_pole()

    def contains(self, x, tol=MEMBER_TOL):
        x = np.asarray(x, float)
        return np.all((x >= self.lo - tol) & (x <= self.hi + tol), axis=-1)

    def project(self, x):
        return np.clip(np.asarray(x, float), self.lo, self.hi)

    def grid(self, n):
        axes = [np.linspace(a, b, n) for a, b in zip(self.lo, self.hi)]
        pts, adj = _lattice(axes)
        return _finish_grid(self.manifold, pts, adj)

    def grid_for_spacing(self, h):
        n = int(round(float(np.max(self.hi - self.lo)) / h)) + 1
        return self.grid(n)

    def sample(self, rng, n):
        return rng.uniform(self.lo, self.hi, size=(n, len(self.lo)))

    def __repr__(self):
        return f"Box({self.lo.tolist()}, {self.hi.tolist()})"


class Interval(Box):
    """``[lo, hi]`` on the real line."""

    def __init__(self, lo, hi, weak_pole=None):
        super().__init__([lo], [hi], weak_pole=weak_pole)

    def __repr__(self):
        return f"Interval({self.lo[0]}, {self.hi[0]})"


class MetricBall(ConstraintSet):
    """Closed geodesic ball ``{x : d(centre, x) <= radius}``.

    The radius has to stay below the convexity radius at the centre so the
    ball is strongly convex.
    """

    geodesically_convex = True

    def __init__(self, manifold: Manifold, centre, radius, weak_pole=None, check_radius=True):
        self.manifold = manifold
        self.centre = manifold.check_point(centre)
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")
        if check_radius and not self.radius < manifold.convexity_radius(self.centre):
            raise ValueError(
                f"ball radius {self.radius} is not below the convexity radius "
                f"{manifold.convexity_radius(self.centre)}"
            )
        self.weak_pole = self.centre if weak_pole is None else weak_pole
        self._check_pole()

    def contains(self, x, tol=MEMBER_TOL):
        d = self.manifold.dist(np.broadcast_to(self.centre, np.shape(x)), x)
        return d <= self.radius + tol

    def project(self, x):
        x = np.asarray(x, float)
        c = np.broadcast_to(self.centre, x.shape)
        d = self.manifold.dist(c, x)[..., None]
        v = self.manifold.log(c, x)
        scale = np.where(d > self.radius, self.radius / np.where(d > 0, d, 1.0), 1.0)
        inside = d <= self.radius
        return np.where(inside, x, self.manifold.exp(c, scale * v))

    def grid(self, n):
        pts, adj = _tangent_disc_grid(self.manifold, self.centre, self.radius, n)
        return _finish_grid(self.manifold, pts, adj)

    def sample(self, rng, n):
        k = self.manifold.dim
        basis = self.manifold.tangent_basis(self.centre)
        g = rng.normal(size=(n, k))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = self.radius * rng.uniform(size=(n, 1)) ** (1.0 / k)
        v = (r * g) @ basis
        return self.manifold.exp(np.broadcast_to(self.centre, v.shape), v)

    def __repr__(self):
        return f"MetricBall({self.manifold}, {self.centre.tolist()}, {self.radius})"


class SphericalCap(ConstraintSet):
    """Intersection of half-space constraints ``<a_j, x> >= b_j`` on the sphere.

    ``axis`` is a point of the sphere used as the centre of grids and
    samplers, and ``extent`` bounds ``d(axis, x)`` over the set.  With
    ``closed=False`` membership uses strict inequalities (the open set);
    everything else works with the closure.

    Projection is exact: the nearest point lies in the relative interior
    of a face, so it is the point itself, its projection onto one
    constraint circle, or a vertex where two circles meet; the nearest
    feasible candidate wins.  Cyclic projection (at most ``max_sweeps``
    sweeps) is kept as a fallback when no candidate is feasible.
    """

    def __init__(
        self,
        constraints,
        axis,
        extent=math.pi / 2,
        closed=True,
        weak_pole=None,
        manifold=None,
        max_sweeps=50,
        sweep_tol=1e-9,
    ):
        self.manifold = manifold or Sphere(2)
        cons = np.atleast_2d(np.asarray(constraints, float))
        self.normals = cons[:, :-1]
        self.offsets = cons[:, -1]
        norms = np.linalg.norm(self.normals, axis=1)
        if np.any(norms == 0):
            raise ValueError("constraint normal must be nonzero")
        self.normals = self.normals / norms[:, None]
        self.offsets = self.offsets / norms
        if np.any(np.abs(self.offsets) > 1):
            raise ValueError("constraint offset outside [-1, 1] gives an empty or trivial set")
        self.axis = self.manifold.proj_point(np.asarray(axis, float))
        self.extent = float(extent)
        self.closed = closed
        self.max_sweeps = max_sweeps
        self.sweep_tol = sweep_tol
        self.weak_pole = weak_pole
        self._check_pole()

    @classmethod
    def cap(cls, axis, angle, **kw):
        """Geodesic ball-like cap ``d(axis, x) <= angle`` as one constraint."""
        axis = np.asarray(axis, float)
        axis = axis / np.linalg.norm(axis)
        return cls([[*axis, math.cos(angle)]], axis, extent=angle, **kw)

    def closure(self):
        return SphericalCap(
            np.column_stack([self.normals, self.offsets]),
            self.axis,
            self.extent,
            closed=True,
            weak_pole=self.weak_pole,
            manifold=self.manifold,
        )

    def _values(self, x):
        return np.asarray(x, float) @ self.normals.T - self.offsets

    def contains(self, x, tol=MEMBER_TOL):
        g = self._values(x)
        if self.closed:
            return np.all(g >= -tol, axis=-1)
        return np.all(g > 0, axis=-1)

    def _project_one(self, x, j):
        """Project rows of ``x`` onto the spherical half-space of constraint ``j``."""
        a, b = self.normals[j], self.offsets[j]
        s = x @ a
        bad = s < b
        if not bad.any():
            return x
        perp = x[bad] - s[bad, None] * a
        pn = np.linalg.norm(perp, axis=-1, keepdims=True)
        # a point at the pole of the violated constraint goes to any boundary point
        pole = pn[:, 0] < 1e-15
        if pole.any():
            perp[pole] = self.manifold.tangent_basis(a)[0]
            pn[pole] = 1.0
        out = x.copy()
        out[bad] = b * a + math.sqrt(max(1.0 - b * b, 0.0)) * perp / pn
        return out

    def _vertices(self):
        """Points where two constraint circles meet, shape ``(k, 3)``."""
        out = []
        A, b = self.normals, self.offsets
        for i in range(len(b)):
            for j in range(i + 1, len(b)):
                n = np.cross(A[i], A[j])
                nn = float(n @ n)
                if nn < 1e-24:
                    continue
                # the point of the line {a_i.y = b_i, a_j.y = b_j} closest to 0
                p = np.cross(b[i] * A[j] - b[j] * A[i], n) / nn
                h = 1.0 - float(p @ p)
                if h < 0:
                    continue
                t = math.sqrt(h / nn)
                out += [p + t * n, p - t * n]
        return np.array(out).reshape(-1, 3)

    def project(self, x):
        x = np.asarray(x, float)
        shape = x.shape
        X = self.manifold.proj_point(x.reshape(-1, shape[-1]))
        cands = [X] + [self._project_one(X, j) for j in range(len(self.offsets))]
        cands = np.stack(cands, axis=1)
        V = self._vertices()
        if len(V):
            cands = np.concatenate([cands, np.broadcast_to(V, (len(X),) + V.shape)], axis=1)
        feasible = np.all(cands @ self.normals.T - self.offsets >= -self.sweep_tol, axis=-1)
        d = self.manifold.dist(np.broadcast_to(X[:, None, :], cands.shape), cands)
        d = np.where(feasible, d, np.inf)
        best = np.argmin(d, axis=1)
        y = cands[np.arange(len(X)), best]
        missing = ~np.isfinite(d[np.arange(len(X)), best])
        if missing.any():
            y[missing] = self._cyclic(X[missing])
        return y.reshape(shape)

    def _cyclic(self, y):
        y = y.copy()
        active = np.ones(len(y), bool)
        for _ in range(self.max_sweeps):
            prev = y[active]
            cur = prev
            for j in range(len(self.offsets)):
                cur = self._project_one(cur, j)
            y[active] = cur
            done = (np.min(self._values(cur), axis=-1) >= -self.sweep_tol) & (
                np.linalg.norm(cur - prev, axis=-1) < self.sweep_tol
            )
            active[np.flatnonzero(active)[done]] = False
            if not active.any():
                break
        return y

    def grid(self, n):
        pts, adj = _tangent_disc_grid(self.manifold, self.axis, self.extent, n)
        keep = self.closure().contains(pts)
        idx = np.flatnonzero(keep)
        adj = sparse.csr_matrix(adj)
        adj = adj + adj.T
        return _finish_grid(self.manifold, pts[idx], adj[idx][:, idx])

    def sample(self, rng, n):
        out = []
        closure = self.closure()
        ball = MetricBall(self.manifold, self.axis, self.extent, check_radius=False)
        while sum(len(o) for o in out) < n:
            cand = ball.sample(rng, 4 * n)
            out.append(cand[closure.contains(cand)])
        return np.concatenate(out)[:n]

    def __repr__(self):
        return f"SphericalCap({len(self.offsets)} constraints, closed={self.closed})"


class ProductSet(ConstraintSet):
    """``Q = Q_1 x ... x Q_m`` on the product manifold."""

    def __init__(self, factors, weak_pole=None):
        self.factors = tuple(factors)
        self.manifold = Product([q.manifold for q in self.factors])
        self.compact = all(q.compact for q in self.factors)
        self.exact_projection = all(q.exact_projection for q in self.factors)
        self.geodesically_convex = all(q.geodesically_convex for q in self.factors)
        if weak_pole is None and all(q.weak_pole is not None for q in self.factors):
            weak_pole = self.manifold.join([q.weak_pole for q in self.factors])
        self.weak_pole = weak_pole
        self._check_pole()

    def contains(self, x, tol=MEMBER_TOL):
        parts = self.manifold.split(x)
        ok = [q.contains(p, tol) for q, p in zip(self.factors, parts)]
        return np.logical_and.reduce(ok)

    def project(self, x):
        parts = self.manifold.split(x)
        return self.manifold.join([q.project(p) for q, p in zip(self.factors, parts)])

    def grid(self, n):
        ns = n if isinstance(n, (list, tuple)) else [n] * len(self.factors)
        grids = [q.grid(k) for q, k in zip(self.factors, ns)]
        return product_grid(self.manifold, grids)

    def sample(self, rng, n):
        return self.manifold.join([q.sample(rng, n) for q in self.factors])

    def __repr__(self):
        return "ProductSet(" + ", ".join(map(repr, self.factors)) + ")"


def product_grid(manifold: Product, grids) -> Grid:
    """Cartesian product of factor grids; neighbours differ in one factor."""
    pts = grids[0].points
    adj = sparse.csr_matrix(grids[0].adjacency, dtype=np.int8)
    for g in grids[1:]:
        n_old, n_new = len(pts), len(g.points)
        pts = np.concatenate(
            [np.repeat(pts, n_new, axis=0), np.tile(g.points, (n_old, 1))], axis=1
        )
        adj = sparse.kron(adj, sparse.identity(n_new, dtype=np.int8)) + sparse.kron(
            sparse.identity(n_old, dtype=np.int8), sparse.csr_matrix(g.adjacency, dtype=np.int8)
        )
    adj = sparse.csr_matrix(adj)
    spacing = max(g.spacing for g in grids)
    return Grid(np.ascontiguousarray(pts), adj, spacing)


@dataclass
class SetSampler:
    """Seeded grid / random point source for a constraint set."""

    set: ConstraintSet
    resolution: int = 41
    seed: int = 0
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)

    def grid(self) -> Grid:
        return self.set.grid(self.resolution)

    def random(self, n: int):
        return self.set.sample(self._rng, n)


def contains(Q: ConstraintSet, x, tol=MEMBER_TOL):
    return Q.contains(x, tol)


def project(Q: ConstraintSet, x):
    return Q.project(x)


def geodesic_within(Q: ConstraintSet, segment, samples: int = 64) -> bool:
    """Sampled check that the geodesic segment stays in ``Q``.

    Only ``samples`` interior points are tested; this is evidence, not proof.
    """
    t = np.linspace(0.0, 1.0, samples + 2)[1:-1]
    return bool(np.all(Q.contains(segment(t))))


def check_weak_pole(Q: ConstraintSet, pole, n: int = 100, seed: int = 0, samples: int = 64):
    """Check on ``n`` sampled points that ``pole`` behaves as a weak pole of ``Q``.

    Returns ``(ok, witness)`` where ``witness`` is the first failing point.
    """
    M = Q.manifold
    pole = np.asarray(pole, float)
    if not bool(Q.contains(pole)):
        return False, pole
    rng = np.random.default_rng(seed)
    for x in Q.sample(rng, n):
        logs = M.log_min(pole, x)
        if logs.degenerate:
            return False, x
        if not geodesic_within(Q, M.geodesic(pole, M.log(pole, x), minimal=True), samples):
            return False, x
    return True, None
