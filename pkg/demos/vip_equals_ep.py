"""Equilibrium problems versus their variational inequalities.

For a monotone bifunction F the solutions of EP(F, Q) coincide with
those of the VIP for the field A_F(x), the subdifferential of F(x, .) at
x.  The script builds F(x, y) = <A x + b, y - x> on a square and the
mixed problem <V(x), y - x> + f(y) - f(x) with f = |x|^2 / 2, then
compares the brute-force solution sets of both formulations on a grid.

Run with ``python demos/vip_equals_ep.py``.
"""

import numpy as np

from riemep import brute_force_ep, check_monotone, subgradient_AF, verify_inclusion_vip_ep
from riemep.applications import mvip_direct_test
from riemep.problems import get_problem
from riemep.solvers import hausdorff


def main():
    P = get_problem("affine-vip")
    mono = check_monotone(P.F, P.Q, n_pairs=500)
    print(f"affine-vip: worst F(x,y) + F(y,x) over 500 pairs = {mono.worst_value:.2e}")
    rep = verify_inclusion_vip_ep(P.F, P.Q, 101)
    print(f"  EP set {len(rep.ep)} points, VIP set {len(rep.vip)} points, "
          f"Hausdorff {rep.hausdorff / rep.ep.spacing:.1f} spacings, equal: {rep.equality}")
    print(f"  known solution {np.round(P.solution, 4).tolist()}, oracle points {np.round(rep.ep.points, 3).tolist()}")

    P = get_problem("mvip-linear")
    direct = mvip_direct_test(P.mvip, 61)
    ep = brute_force_ep(P.F, P.Q, direct.grid)
    h = hausdorff(P.manifold, direct.grid, direct.mask, ep.mask) / direct.spacing
    print(f"mvip-linear: direct inequality test {len(direct)} points, EP {len(ep)} points, Hausdorff {h:.1f} spacings")
    x = np.array([0.5, -0.4])
    print(f"  A_F({x.tolist()}) = {np.round(subgradient_AF(P.F, x)[0], 6).tolist()}, "
          f"V(x) + grad f(x) = {np.round(P.mvip.V(x) + x, 6).tolist()}")


if __name__ == "__main__":
    main()
