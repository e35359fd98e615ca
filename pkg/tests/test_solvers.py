import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riemep import (
    Bifunction,
    Box,
    Euclidean,
    Interval,
    LambdaSchedule,
    MetricBall,
    ResolventProblem,
    Sphere,
    SolverConfig,
    VectorField,
    algorithm_p,
    brute_force_ep,
    ep_residual,
    gv,
    optimization,
    resolvent,
    verify_inclusion_vip_ep,
    vip_residual,
    zero,
)
from riemep.problems import get_problem
from riemep.solvers import (
    CSV_COLUMNS,
    StepConditionError,
    brute_force_vip,
    cluster_diameter,
    solve_resolvent,
    verify_proximity,
)

R1, R2 = Euclidean(1), Euclidean(2)
UNIT_DISC = MetricBall(R2, np.zeros(2), 1.0)


def half_square(M):
    return optimization(M, lambda x: 0.5 * np.sum(np.asarray(x) ** 2, axis=-1), grad=lambda x: np.asarray(x))


def shifted_square():
    return optimization(R1, lambda x: (np.asarray(x)[..., 0] - 0.3) ** 2)


def identity_vip():
    return gv(VectorField(R2, lambda x: np.asarray(x)))


# ---------------------------------------------------------------------------
# configuration


def test_schedules():
    assert LambdaSchedule("constant", 2.0)(7) == 2.0
    assert LambdaSchedule("harmonic", 2.0)(3) == pytest.approx(1.0)
    assert LambdaSchedule("power", 1.0, power=0.25)(15) == pytest.approx(0.5)
    s = LambdaSchedule("list", values=(1.0, 0.5))
    assert [s(k) for k in range(4)] == [1.0, 0.5, 0.5, 0.5]


@pytest.mark.parametrize(
    "schedule",
    [
        LambdaSchedule("constant", 0.0),
        LambdaSchedule("harmonic", -1.0),
        LambdaSchedule("power", 1.0, power=0.6),
        LambdaSchedule("list", values=()),
        LambdaSchedule("list", values=(1.0, 0.0)),
        LambdaSchedule("geometric", 1.0),
    ],
)
def test_schedule_validation_rejects(schedule):
    with pytest.raises(ValueError):
        schedule.validate()


def test_solver_config_validation():
    SolverConfig().validate()
    with pytest.raises(ValueError):
        SolverConfig(inner_tol=0.0).validate()
    with pytest.raises(ValueError):
        SolverConfig(inner="newton").validate()
    with pytest.raises(ValueError):
        SolverConfig(max_outer_iters=0).validate()


# ---------------------------------------------------------------------------
# oracles and residuals


def test_brute_force_ep_examples():
    ep = brute_force_ep(shifted_square(), Interval(-1.0, 1.0), 2001)
    assert len(ep) >= 1
    assert np.all(np.abs(ep.points[:, 0] - 0.3) <= 3 * ep.spacing)
    everything = brute_force_ep(zero(R1), Interval(-1.0, 1.0), 101)
    assert len(everything) == 101
    ep = brute_force_ep(identity_vip(), UNIT_DISC, 81)
    assert len(ep) >= 1
    assert np.all(np.linalg.norm(ep.points, axis=1) <= 3 * ep.spacing)


def test_brute_force_ep_needs_compact_set():
    from riemep import WholeManifold

    with pytest.raises(ValueError):
        brute_force_ep(zero(R1), WholeManifold(R1), 11)


def test_ep_residual_examples():
    Q = Interval(-1.0, 1.0)
    assert ep_residual(half_square(R1), Q, np.array([0.5]), 201) == pytest.approx(-0.125)
    assert ep_residual(half_square(R1), Q, np.array([0.0]), 201) >= 0
    assert ep_residual(zero(R1), Q, np.array([0.7]), 201) == 0.0


def test_vip_residual_examples():
    F = identity_vip()
    assert vip_residual(F, UNIT_DISC, np.zeros(2), 201) == pytest.approx(0.0)
    # min over y in the disc of <x, y - x> is attained at y = -x/|x|
    assert vip_residual(F, UNIT_DISC, np.array([0.5, 0.0]), 201) == pytest.approx(-0.75)
    const = gv(VectorField(R1, lambda x: np.ones_like(x)))
    assert vip_residual(const, Interval(-1.0, 1.0), np.array([-1.0]), 201) == pytest.approx(0.0)


@pytest.mark.parametrize(
    "F,Q,grid,expect",
    [
        (shifted_square(), Interval(-1.0, 1.0), 2001, 0.3),
        (identity_vip(), UNIT_DISC, 81, 0.0),
    ],
)
def test_inclusion_vip_ep_singletons(F, Q, grid, expect):
    rep = verify_inclusion_vip_ep(F, Q, grid)
    assert rep.inclusion and rep.equality and rep.diagonal_zero
    pts = rep.ep.points
    assert np.all(np.abs(pts[:, 0] - expect) <= rep.tolerance)


def test_inclusion_vip_ep_zero_bifunction():
    rep = verify_inclusion_vip_ep(zero(R2), UNIT_DISC, 41)
    assert rep.equality
    assert rep.ep.mask.all() and rep.vip.mask.all()


def test_brute_force_vip_constant_field():
    const = gv(VectorField(R1, lambda x: np.ones_like(x)))
    res = brute_force_vip(const, Interval(-1.0, 1.0), 201)
    assert res.points[:, 0].max() <= -1.0 + 3 * res.spacing


# ---------------------------------------------------------------------------
# resolvent


def test_resolvent_examples():
    Q = Box([-100.0], [100.0])
    x = resolvent(ResolventProblem(half_square(R1), Q, 1.0, np.array([2.0])))
    assert x[0] == pytest.approx(1.0, abs=1e-10)
    x = resolvent(ResolventProblem(zero(R1), Interval(-1.0, 1.0), 1.0, np.array([2.0])))
    assert x[0] == pytest.approx(1.0, abs=1e-10)
    x = resolvent(ResolventProblem(half_square(R1), Q, 3.0, np.array([0.0])))
    assert x[0] == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(lam=st.floats(0.05, 20.0), z=st.floats(-50.0, 50.0))
def test_resolvent_quadratic_closed_form(lam, z):
    x = resolvent(ResolventProblem(half_square(R1), Box([-100.0], [100.0]), lam, np.array([z])))
    assert abs(x[0] - z / (1 + lam)) < 1e-8


def test_resolvent_step_condition():
    P = get_problem("sphere-distance")
    with pytest.raises(StepConditionError):
        solve_resolvent(ResolventProblem(P.F, P.Q, 50.0, P.x0))


def test_resolvent_inner_solvers_agree():
    P = get_problem("sphere-distance")
    z = P.x0
    eg = solve_resolvent(ResolventProblem(P.F, P.Q, 0.5, z), SolverConfig(inner="extragradient"))
    cfg = SolverConfig(inner="oracle-grid", grid_resolution=21)
    og = solve_resolvent(ResolventProblem(P.F, P.Q, 0.5, z), cfg)
    spacing = P.Q.grid(cfg.grid_resolution).spacing
    assert float(P.manifold.dist(eg.point, og.point)) < 3 * spacing
    # the regularised EP is solved at z's prox point
    assert bool(P.Q.contains(eg.point))


def test_cluster_diameter():
    assert cluster_diameter(R2, np.zeros((1, 2))) == 0.0
    assert cluster_diameter(R2, np.array([[0.0, 0.0], [3.0, 4.0], [1.0, 1.0]])) == pytest.approx(5.0)


# ---------------------------------------------------------------------------
# Algorithm P


def test_algorithm_p_halving():
    P = get_problem("prox-quadratic")
    trace = algorithm_p(P.F, P.Q, P.x0, P.config)
    assert trace.status == "converged"
    k = np.arange(len(trace.points))
    np.testing.assert_allclose(trace.points[:, 0], 8.0 / 2.0**k, atol=1e-10, rtol=0)


def test_algorithm_p_constant_at_solution():
    P = get_problem("prox-quadratic")
    trace = algorithm_p(P.F, P.Q, np.array([0.0]), P.config)
    assert trace.status == "converged"
    assert trace.iterations == 1
    np.testing.assert_array_equal(trace.points, 0.0)


@pytest.mark.parametrize("name", ["h2-distance", "h2-field", "sphere-distance", "sphere-field", "affine-vip"])
def test_algorithm_p_fejer_and_ball(name):
    P = get_problem(name)
    trace = algorithm_p(P.F, P.Q, P.x0, P.config)
    assert trace.status == "converged"
    M = P.manifold
    d = M.dist(trace.points, np.broadcast_to(P.solution, trace.points.shape))
    assert np.all(np.diff(d) <= 1e-8)
    assert d[-1] < 1e-6
    assert all(r.ball_slack > 0 for r in trace.records)
    assert trace.final_residual >= -1e-6


def test_algorithm_p_step_condition_and_auto_shrink():
    P = get_problem("sphere-distance")
    cfg = SolverConfig(schedule=LambdaSchedule("constant", 50.0))
    trace = algorithm_p(P.F, P.Q, P.x0, cfg)
    assert trace.status == "step-condition-violated"
    assert trace.records[-1].status == "step-condition-violated"
    cfg = SolverConfig(schedule=LambdaSchedule("constant", 50.0), auto_shrink=True)
    trace = algorithm_p(P.F, P.Q, P.x0, cfg)
    assert trace.status == "converged"
    # far from the solution lambda is halved; near it L_hat is small and 50 is admissible
    assert trace.records[0].lam < 50.0


def test_algorithm_p_budget():
    P = get_problem("prox-quadratic")
    cfg = SolverConfig(schedule=LambdaSchedule("constant", 1.0), max_outer_iters=3)
    trace = algorithm_p(P.F, P.Q, P.x0, cfg)
    assert trace.status == "max-iters"
    assert trace.iterations == 3


def test_algorithm_p_rejects_infeasible_start():
    with pytest.raises(ValueError):
        algorithm_p(half_square(R1), Interval(-1.0, 1.0), np.array([3.0]))


def test_algorithm_p_logs_residual_decrease():
    # a non-monotone bifunction whose iterates move away from the solution set
    F = Bifunction(R1, lambda x, y: np.sum(x * (x - y), axis=-1), smooth=True)
    cfg = SolverConfig(schedule=LambdaSchedule("constant", 0.2), max_outer_iters=5)
    trace = algorithm_p(F, Interval(-1.0, 1.0), np.array([0.1]), cfg)
    assert any("residual decreased" in w for w in trace.warnings)


def test_trace_export(tmp_path):
    P = get_problem("prox-quadratic")
    a = algorithm_p(P.F, P.Q, P.x0, P.config)
    b = algorithm_p(P.F, P.Q, P.x0, P.config)
    assert a.csv_text() == b.csv_text()
    lines = a.csv_text().splitlines()
    assert lines[0].split(",") == CSV_COLUMNS
    assert len(lines) == a.iterations + 1
    a.to_csv(tmp_path / "t.csv")
    a.to_json(tmp_path / "s.json")
    assert (tmp_path / "t.csv").read_text() == a.csv_text()
    summary = json.loads((tmp_path / "s.json").read_text())
    assert set(summary) == {"status", "iterations", "final_point", "final_residual"}
    assert summary["status"] == "converged"
    assert summary["final_point"][0] == pytest.approx(0.0, abs=1e-8)


def test_verify_proximity():
    P = get_problem("sphere-distance")
    trace = algorithm_p(P.F, P.Q, P.x0, P.config)
    assert verify_proximity(trace, P.F, P.Q, 41)
    assert trace.proximity_verified
    # a start about 0.8 away from the solution is beyond D/8 = pi/8
    far = P.manifold.exp(P.Q.centre, np.array([-0.55, -0.2, 0.0]))
    assert float(P.manifold.dist(far, P.solution)) > math.pi / 8 + 0.1
    short = SolverConfig(schedule=LambdaSchedule("constant", 0.5), max_outer_iters=1)
    trace = algorithm_p(P.F, P.Q, far, short)
    assert not verify_proximity(trace, P.F, P.Q, 41)
    assert trace.proximity_verified is False
