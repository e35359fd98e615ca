import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riemep import (
    Bifunction,
    Euclidean,
    Hyperbolic,
    Interval,
    MetricBall,
    Sphere,
    VectorField,
    WholeManifold,
    check_monotone,
    check_pointwise_weak_convexity,
    gv,
    gz,
    lipschitz_estimate,
    optimization,
    regularize,
    subgradient_AF,
    zero,
)
from riemep.applications import MVIProblem, build_mvip_bifunction
from riemep.bifunctions import (
    affine_vip,
    check_field_monotone,
    eval_GV,
    eval_Gz,
    ext_sub,
    finite_difference_gradient,
    subgradient_inequality_test,
)

E1, E2, E3 = np.eye(3)
R1, R2 = Euclidean(1), Euclidean(2)
S2 = Sphere(2)
H2 = Hyperbolic(2)


def half_square(M):
    return optimization(M, lambda x: 0.5 * np.sum(np.asarray(x) ** 2, axis=-1), name="half-square")


# ---------------------------------------------------------------------------
# G_V and G_z


def test_eval_gv_examples():
    V = VectorField(R2, lambda x: np.broadcast_to([1.0, 0.0], np.shape(x)))
    assert eval_GV(V, np.zeros(2), np.array([2.0, 3.0])) == pytest.approx(2.0)
    assert eval_GV(V, np.array([0.3, 0.1]), np.array([0.3, 0.1])) == 0.0


def test_eval_gv_antipodal_against_circle_sampling():
    V = VectorField(S2, lambda x: np.array([0.0, 1.0, 0.0]))
    val = eval_GV(V, E1, -E1)
    assert val == pytest.approx(math.pi, abs=1e-12)
    theta = np.linspace(0, 2 * math.pi, 100_001)
    w = math.pi * (np.cos(theta)[:, None] * E2 + np.sin(theta)[:, None] * E3)
    sampled = np.max(w @ np.array([0.0, 1.0, 0.0]))
    assert val >= sampled - 1e-12
    assert val == pytest.approx(sampled, abs=1e-8)
    # the vectorised bifunction uses the same analytic supremum
    assert float(gv(V)(E1, -E1)) == pytest.approx(math.pi, abs=1e-12)


def test_eval_gv_set_valued_takes_sup():
    V = VectorField(R2, lambda x: np.array([[1.0, 0.0], [0.0, -1.0]]), single_valued=False)
    assert eval_GV(V, np.zeros(2), np.array([1.0, -3.0])) == pytest.approx(3.0)
    F = gv(V)
    assert float(F(np.zeros(2), np.array([1.0, -3.0]))) == pytest.approx(3.0)


def test_eval_gz_examples():
    z = np.array([1.0, 0.0])
    x = np.zeros(2)
    assert eval_Gz(R2, z, x, x) == 0.0
    assert eval_Gz(R2, z, x, np.array([0.0, 1.0])) == pytest.approx(0.0)
    assert eval_Gz(R2, z, x, np.array([2.0, 0.0])) == pytest.approx(-2.0)
    assert float(gz(R2, z)(x, np.array([2.0, 0.0]))) == pytest.approx(-2.0)


def test_eval_gz_antipodal_circle():
    # z antipodal to x: -u sweeps the circle of radius pi, so sup = pi * |v|
    y = S2.exp(E1, np.array([0.0, 0.3, 0.4]))
    assert eval_Gz(S2, -E1, E1, y) == pytest.approx(math.pi * 0.5, abs=1e-12)
    assert float(gz(S2, -E1)(E1, y)) == pytest.approx(math.pi * 0.5, abs=1e-12)


def test_regularize_examples():
    z = np.array([0.4, -1.0])
    F = regularize(zero(R2), 2.0, z)
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(2, 10, 2))
    np.testing.assert_allclose(F(x, y), -np.sum((z - x) * (y - x), axis=-1), atol=1e-14)
    F1 = regularize(half_square(R1), 1.0, np.array([0.0]))
    assert float(F1(np.array([1.0]), np.array([0.0]))) == pytest.approx(-1.5)
    G = half_square(R2)
    Fl = regularize(G, 0.7, z)
    np.testing.assert_allclose(Fl(x, x), 0.7 * G(x, x))
    with pytest.raises(ValueError):
        regularize(G, 0.0, z)


# ---------------------------------------------------------------------------
# A_F


def test_subgradient_af_examples():
    x = np.array([0.3, -1.2])
    F = half_square(R2)
    np.testing.assert_allclose(subgradient_AF(F, x)[0], x, atol=1e-8)
    A = np.array([[1.0, 2.0], [0.0, 1.0]])
    V = VectorField(R2, lambda p: p @ A.T)
    np.testing.assert_allclose(subgradient_AF(gv(V), x), (A @ x)[None], atol=1e-14)
    p = MVIProblem(V, lambda q: np.sum(np.asarray(q) ** 2, axis=-1), MetricBall(R2, np.zeros(2), 2.0))
    np.testing.assert_allclose(subgradient_AF(build_mvip_bifunction(p), x)[0], A @ x + 2 * x, atol=1e-8)


def test_subgradient_af_needs_oracle_or_smooth():
    F = Bifunction(R1, lambda x, y: np.abs(y[..., 0]) - np.abs(x[..., 0]))
    with pytest.raises(ValueError):
        subgradient_AF(F, np.array([0.0]))


@pytest.mark.parametrize(
    "M,x",
    [
        (R2, np.array([0.5, -0.2])),
        (S2, np.array([0.6, 0.0, 0.8])),
        (H2, H2.exp(H2.origin, np.array([0.0, 0.4, -0.7]))),
    ],
)
def test_finite_difference_matches_oracle(M, x):
    p = M.proj_point(np.eye(M.ambient_dim)[0] if not isinstance(M, Euclidean) else np.array([1.0, 2.0]))
    f = lambda q: 0.5 * M.dist(np.asarray(q), np.broadcast_to(p, np.shape(q))) ** 2
    F = optimization(M, f, grad=lambda q: -M.log(q, p))
    fd = finite_difference_gradient(F, x)
    oracle = subgradient_AF(F, x)[0]
    assert np.linalg.norm(fd - oracle) <= 1e-5 * max(1.0, np.linalg.norm(oracle))


# ---------------------------------------------------------------------------
# monotonicity and convexity checks


def test_check_monotone_examples():
    Q = MetricBall(R2, np.zeros(2), 1.0)
    rep = check_monotone(half_square(R2), Q, 500)
    assert rep.monotone and rep.strict
    assert abs(rep.worst_value) <= 1e-15
    F = Bifunction(R2, lambda x, y: np.sum(x * (y - x), axis=-1))
    rep = check_monotone(F, Q, 500)
    assert rep.monotone
    x, y = rep.witness
    assert float(F(x, y) + F(y, x)) == pytest.approx(-np.sum((x - y) ** 2))
    F = Bifunction(R2, lambda x, y: np.sum(x * (x - y), axis=-1))
    rep = check_monotone(F, Q, 500)
    assert not rep.monotone
    x, y = rep.witness
    assert float(F(x, y) + F(y, x)) == pytest.approx(rep.worst_value)
    assert rep.worst_value > 0


def test_check_monotone_strictness_needs_zero_diagonal():
    Q = Interval(-1.0, 1.0)
    strict = Bifunction(R1, lambda x, y: -np.sum((x - y) ** 2, axis=-1))
    rep = check_monotone(strict, Q, 50)
    assert rep.monotone and rep.strict
    shifted = Bifunction(R1, lambda x, y: -np.sum((x - y) ** 2, axis=-1) - 0.1)
    rep = check_monotone(shifted, Q, 50)
    assert rep.monotone and not rep.strict
    assert rep.diagonal_max == pytest.approx(0.1)


def test_check_convexity_examples():
    Q = MetricBall(S2, E3, 0.6)
    V = VectorField(S2, lambda x: np.cross(E3, x) - S2.log(x, np.broadcast_to(E3, np.shape(x))))
    assert check_pointwise_weak_convexity(gv(V), Q).passed
    assert check_pointwise_weak_convexity(half_square(R2), MetricBall(R2, np.zeros(2), 1.0)).passed
    F = Bifunction(R1, lambda x, y: -np.sum((x - y) ** 2, axis=-1))
    rep = check_pointwise_weak_convexity(F, Interval(-1.0, 1.0))
    assert not rep.passed
    x, y, t, excess = rep.violations[0]
    assert excess > 0


def test_subgradient_inequality_examples():
    F = half_square(R2)
    x = np.array([0.4, -0.3])
    assert subgradient_inequality_test(F, x, subgradient_AF(F, x)[0], samples=50, radius=5.0)
    assert subgradient_inequality_test(F, np.zeros(2), np.zeros(2), samples=50, radius=5.0)
    assert not subgradient_inequality_test(F, x, 10 * subgradient_AF(F, x)[0], samples=50, radius=5.0)


def test_lipschitz_examples():
    c = np.array([3.0, -4.0])
    F = Bifunction(R2, lambda x, y: np.sum(c * (y - x), axis=-1))
    est = lipschitz_estimate(F, np.array([0.2, 0.1]), 0.5)
    assert est.estimate <= 5.0 + 1e-12
    assert est.estimate == pytest.approx(5.0, rel=1e-3)
    for r in (1e-1, 1e-2, 1e-3):
        assert lipschitz_estimate(half_square(R2), np.zeros(2), r).estimate == pytest.approx(r / 2)
    assert lipschitz_estimate(zero(R2), np.zeros(2), 0.1).estimate == 0.0
    with pytest.raises(ValueError):
        lipschitz_estimate(zero(S2), E1, 2.0)


def test_ext_sub_convention():
    assert ext_sub(1.0, math.inf) == math.inf
    assert ext_sub(math.inf, math.inf) == math.inf
    assert ext_sub(math.inf, 2.0) == math.inf
    assert ext_sub(3.0, 1.0) == 2.0


# ---------------------------------------------------------------------------
# properties


def _sphere_field():
    p = S2.proj_point(np.array([0.2, 0.1, 1.0]))
    return VectorField(S2, lambda x: -S2.log(x, np.broadcast_to(p, np.shape(x))) + 0.5 * np.cross(p, x))


def _h2_field():
    o = H2.origin
    return VectorField(
        H2,
        lambda x: -H2.log(x, np.broadcast_to(o, np.shape(x)))
        + 0.5 * np.stack([np.zeros(np.shape(x)[:-1]), -x[..., 2], x[..., 1]], axis=-1),
    )


FIELDS = {
    "euclidean": (lambda: VectorField(R2, lambda x: x @ np.array([[1.0, 2.0], [-2.0, 1.0]]).T), lambda: MetricBall(R2, np.zeros(2), 2.0)),
    "sphere": (_sphere_field, lambda: MetricBall(S2, E3, 0.6)),
    "hyperbolic": (_h2_field, lambda: MetricBall(H2, H2.origin, 2.0)),
}


@settings(max_examples=50, deadline=None)
@given(name=st.sampled_from(sorted(FIELDS)), seed=st.integers(0, 2**32 - 1), t=st.floats(0.0, 1.0))
def test_gv_ray_scaling(name, seed, t):
    make_v, make_q = FIELDS[name]
    V, Q = make_v(), make_q()
    M = Q.manifold
    rng = np.random.default_rng(seed)
    x, y = Q.sample(rng, 2)
    F = gv(V)
    yt = M.exp(x, t * M.log(x, y))
    assert float(F(x, x)) == 0.0
    assert float(F(x, yt)) <= t * float(F(x, y)) + 1e-8


@pytest.mark.parametrize("name", sorted(FIELDS))
def test_monotone_gv_propagates_to_field(name):
    make_v, make_q = FIELDS[name]
    V, Q = make_v(), make_q()
    F = gv(V)
    assert check_monotone(F, Q, 500).monotone
    rep = check_field_monotone(V, Q, 500)
    assert rep.n_pairs == 500
    assert rep.holds(1e-8)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), lam=st.floats(0.05, 5.0))
def test_regularized_strict_monotonicity_h2(seed, lam):
    V, Q = _h2_field(), MetricBall(H2, H2.origin, 2.0)
    rng = np.random.default_rng(seed)
    x, y, z = Q.sample(rng, 3)
    F = regularize(gv(V), lam, z)
    assert float(F(x, y) + F(y, x)) <= -float(H2.dist(x, y)) ** 2 + 1e-8


def test_affine_vip_bifunction():
    F = affine_vip([[1.0, 2.0], [-2.0, 1.0]], [0.5, -0.3])
    x = np.array([0.1, 0.2])
    y = np.array([-0.4, 0.9])
    Ax = np.array([0.1 + 0.4 + 0.5, -0.2 + 0.2 - 0.3])
    assert float(F(x, y)) == pytest.approx(Ax @ (y - x))
    assert check_monotone(F, MetricBall(R2, np.zeros(2), 1.0)).monotone


def test_nonvectorized_bifunction_matches():
    f = lambda x, y: float(np.sum(x * (y - x)))
    F = Bifunction(R2, f, vectorized=False)
    G = Bifunction(R2, lambda x, y: np.sum(x * (y - x), axis=-1))
    rng = np.random.default_rng(1)
    X, Y = rng.normal(size=(2, 7, 2))
    np.testing.assert_allclose(F(X[:, None], Y[None]), G(X[:, None], Y[None]))


def test_whole_manifold_sampling_for_checks():
    H = Hyperbolic(2)
    F = gv(_h2_field())
    assert check_monotone(F, WholeManifold(H, sample_radius=2.0), 200).monotone
