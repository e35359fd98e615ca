import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riemep import (
    Box,
    Euclidean,
    Hyperbolic,
    Interval,
    MetricBall,
    ProductSet,
    Sphere,
    SphericalCap,
    WholeManifold,
    check_weak_pole,
    contains,
    geodesic_within,
    project,
)
from riemep.problems import example51_cap
from riemep.sets import ProjectionUnsupported, SetSampler

E1, E2, E3 = np.eye(3)
S2 = Sphere(2)


def compact_sets():
    H = Hyperbolic(2)
    return {
        "interval": Interval(-1.0, 1.0),
        "box": Box([-1.0, 0.0], [2.0, 0.5]),
        "disc": MetricBall(Euclidean(2), np.zeros(2), 1.0),
        "sphere-ball": MetricBall(S2, E3, 0.6),
        "h2-ball": MetricBall(H, H.origin, 1.5),
        "cap": example51_cap(),
        "product": ProductSet([Interval(-1.0, 1.0), example51_cap()]),
    }


EXACT = ["interval", "box", "disc", "sphere-ball", "h2-ball", "cap", "product"]


@pytest.fixture(params=sorted(compact_sets()))
def qset(request):
    return compact_sets()[request.param]


# ---------------------------------------------------------------------------
# worked examples


def test_contains_examples():
    assert contains(Interval(-1.0, 1.0), np.array([0.5]))
    assert not contains(example51_cap(closed=False), E1)
    assert contains(example51_cap(closed=True), E1)
    assert not contains(MetricBall(S2, E1, 0.3), E2)


def test_project_examples():
    np.testing.assert_allclose(project(Interval(-1.0, 1.0), np.array([2.0])), [1.0])
    B = MetricBall(S2, E1, 0.5)
    p = B.project(E2)
    assert S2.dist(E1, p) == pytest.approx(0.5, abs=1e-12)
    # on the great circle through the centre and x, between them
    assert S2.dist(E1, p) + S2.dist(p, E2) == pytest.approx(S2.dist(E1, E2), abs=1e-12)
    np.testing.assert_allclose(p, [math.cos(0.5), math.sin(0.5), 0.0], atol=1e-15)


def test_project_members_unchanged(qset, rng):
    x = qset.sample(rng, 50)
    np.testing.assert_allclose(qset.project(x), x, atol=1e-10)


def test_geodesic_within_examples():
    I = Interval(-1.0, 1.0)
    M = I.manifold
    assert geodesic_within(I, M.minimal_geodesic(np.array([-1.0]), np.array([1.0])))
    cap = example51_cap()
    assert geodesic_within(cap, S2.minimal_geodesic(E1, E3))
    B = MetricBall(S2, E3, 0.6)
    a = S2.exp(E3, np.array([0.6, 0.0, 0.0]))
    b = S2.exp(E3, np.array([0.0, 0.6, 0.0]))
    assert geodesic_within(B, S2.minimal_geodesic(a, b))


def test_geodesic_within_detects_exit():
    Q_band = SphericalCap([[0.0, 1.0, 0.0, -0.2]], E2, extent=math.pi / 2)
    a = S2.exp(E2, np.array([0.9, 0.0, 0.0]))
    b = S2.exp(E2, np.array([-0.9, 0.0, 0.0]))
    assert geodesic_within(Q_band, S2.minimal_geodesic(a, b))
    Q_narrow = SphericalCap([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, -1.0, -0.05]], E1)
    p = np.array([1.0, 0.0, 0.05])
    q = np.array([0.0, 1.0, 0.05])
    p, q = p / np.linalg.norm(p), q / np.linalg.norm(q)
    # the great-circle arc from p to q bulges towards the pole (z grows)
    assert Q_narrow.contains(p) and Q_narrow.contains(q)
    assert not geodesic_within(Q_narrow, S2.minimal_geodesic(p, q))


def test_ball_radius_must_be_below_convexity_radius():
    with pytest.raises(ValueError):
        MetricBall(S2, E1, math.pi / 2)
    MetricBall(S2, E1, math.pi / 2 - 1e-6)
    MetricBall(Euclidean(2), np.zeros(2), 1e6)


def test_declared_weak_pole_must_be_member():
    with pytest.raises(ValueError):
        Interval(0.0, 1.0, weak_pole=np.array([2.0]))
    with pytest.raises(ValueError):
        SphericalCap.cap(E3, 0.5, weak_pole=E1)


def test_whole_manifold():
    H = Hyperbolic(2)
    Q = WholeManifold(H)
    assert not Q.compact
    with pytest.raises(ValueError):
        Q.grid(11)
    x = Q.sample(np.random.default_rng(0), 10)
    assert np.all(Q.contains(x))
    np.testing.assert_allclose(Q.project(x), x)


def test_product_set_membership_is_componentwise(rng):
    Q = ProductSet([Interval(-1.0, 1.0), example51_cap()])
    inside = Q.sample(rng, 20)
    assert np.all(Q.contains(inside))
    bad_first = inside.copy()
    bad_first[:, 0] = 1.5
    assert not np.any(Q.contains(bad_first))
    bad_second = inside.copy()
    bad_second[:, 1:] = -E1
    assert not np.any(Q.contains(bad_second))


def test_projection_unsupported():
    from riemep.sets import ConstraintSet

    class Weird(ConstraintSet):
        manifold = Euclidean(1)

        def contains(self, x, tol=1e-10):
            return np.ones(np.shape(x)[:-1], bool)

    with pytest.raises(ProjectionUnsupported):
        Weird().project(np.zeros(1))


# ---------------------------------------------------------------------------
# properties


def test_sampler_points_are_members(qset):
    s = SetSampler(qset, resolution=21, seed=3)
    assert np.all(qset.contains(s.random(500), tol=1e-10))
    g = s.grid()
    assert len(g) > 0
    assert np.all(qset.contains(g.points, tol=1e-10))


def test_sampler_is_seeded(qset):
    a = SetSampler(qset, seed=5).random(20)
    b = SetSampler(qset, seed=5).random(20)
    np.testing.assert_array_equal(a, b)


def test_grid_spacing_bounds_neighbour_distance(qset):
    g = qset.grid(15)
    rows, cols = g.adjacency.nonzero()
    d = qset.manifold.dist(g.points[rows], g.points[cols])
    assert np.max(d) == pytest.approx(g.spacing)


@settings(max_examples=40, deadline=None)
@given(name=st.sampled_from(sorted(compact_sets())), seed=st.integers(0, 2**32 - 1))
def test_project_idempotent(name, seed):
    Q = compact_sets()[name]
    M = Q.manifold
    rng = np.random.default_rng(seed)
    x = Q.sample(rng, 1)[0]
    # push the point out of the set
    v = M.random_tangent(rng, x, scale=2.0)
    y = M.exp(x, v)
    p = Q.project(y)
    assert Q.contains(p)
    np.testing.assert_allclose(Q.project(p), p, atol=1e-10)


@pytest.mark.parametrize("name", EXACT)
def test_projection_beats_samples(name):
    Q = compact_sets()[name]
    M = Q.manifold
    rng = np.random.default_rng(11)
    base = Q.sample(rng, 30)
    x = M.exp(base, M.random_tangent(rng, base, scale=1.5))
    p = Q.project(x)
    q = Q.sample(rng, 200)
    d_p = M.dist(x, p)
    d_q = M.dist(x[:, None, :], q[None, :, :])
    assert np.all(d_p[:, None] <= d_q + 1e-10)


@pytest.mark.parametrize("name", sorted(compact_sets()))
def test_weak_pole(name):
    Q = compact_sets()[name]
    ok, witness = check_weak_pole(Q, Q.weak_pole, n=100)
    assert ok, witness


def test_cap_open_versus_closed():
    Q = example51_cap(closed=False)
    assert Q.closure().closed
    # strictly interior point is in both
    x = np.array([1.0, 0.0, 1.0]) / math.sqrt(2)
    assert Q.contains(x) and Q.closure().contains(x)
    # boundary point t3 = 0 only in the closure
    y = np.array([math.cos(0.2), math.sin(0.2), 0.0])
    assert not Q.contains(y) and Q.closure().contains(y)
