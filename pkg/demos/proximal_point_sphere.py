"""Proximal point iterations on a spherical ball.

Minimises d(x, p)^2 / 2 over a geodesic ball of radius 0.6 on the unit
sphere.  Each step solves a regularised equilibrium problem inside
B(x_k, pi/4) and the run prints the distance to p, the step length and
the slack left to the ball constraint.  A second run with lambda = 50
shows the step condition lambda * L_hat < pi/4 stopping the solver, and
a third shows ``auto_shrink`` recovering from it.

Run with ``python demos/proximal_point_sphere.py``.
"""

import numpy as np

from riemep import LambdaSchedule, SolverConfig, algorithm_p
from riemep.problems import get_problem
from riemep.solvers import verify_proximity


def main():
    P = get_problem("sphere-distance")
    M = P.manifold
    trace = algorithm_p(P.F, P.Q, P.x0, P.config)
    d = M.dist(trace.points, np.broadcast_to(P.solution, trace.points.shape))
    print(f"{P.name}: {trace.status} after {trace.iterations} iterations")
    print(" k   d(x_k, p)     step        L_hat     ball slack")
    for r, dk in zip(trace.records[:8], d[1:]):
        print(f"{r.k:2d}  {dk:.3e}  {r.step:.3e}  {r.L_hat:.3e}  {r.ball_slack:.3f}")
    print("...")
    print(f"final distance to p: {d[-1]:.2e}, residual {trace.final_residual:.2e}")
    print(f"start within D_kappa/8 of the oracle solution set: {verify_proximity(trace, P.F, P.Q, 41)}")

    big = SolverConfig(schedule=LambdaSchedule("constant", 50.0))
    trace = algorithm_p(P.F, P.Q, P.x0, big)
    r = trace.records[-1]
    print(f"\nlambda = 50: {trace.status} (lambda * L_hat = {r.lam * r.L_hat:.2f} >= pi/4)")

    big.auto_shrink = True
    trace = algorithm_p(P.F, P.Q, P.x0, big)
    print(f"lambda = 50 with auto_shrink: {trace.status} in {trace.iterations} iterations, first lambda {trace.records[0].lam:g}")


if __name__ == "__main__":
    main()
