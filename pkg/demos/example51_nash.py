"""The two-player game on R x S^2 and its equilibrium.

Player 1 picks x_1 in [-1, 1] with loss (x_1 - t_3)^2, player 2 picks
x_2 = (t_1, t_2, t_3) in a closed spherical cap with loss arccos t_1.
Player 2's best response is t = (1, 0, 0) whatever player 1 does, so
t_3 = 0 and player 1 answers x_1 = 0.  The script computes the
equilibrium two ways on the same grid, with the best-response oracle
and with the brute-force EP oracle on the Nash bifunction, and shows
that the profile (1, (1, 0, 0)) is not an equilibrium.

Run with ``python demos/example51_nash.py`` (about 15 s).
"""

import numpy as np

from riemep import brute_force_ep
from riemep.applications import best_response_oracle, build_nep_bifunction
from riemep.problems import EX51_COMPUTED, EX51_STATED, example51_game
from riemep.solvers import hausdorff, set_distance


def main():
    game = example51_game()
    M = game.manifold
    F = build_nep_bifunction(game)
    br = best_response_oracle(game, [41, 41])
    ep = brute_force_ep(F, game.Q, br.grid)
    h = br.spacing
    print(f"grid: {len(br.grid)} profiles, spacing {h:.3f}")
    print(f"best-response set: {len(br)} points, EP set: {len(ep)} points")
    print(f"Hausdorff distance between them: {hausdorff(M, br.grid, br.mask, ep.mask) / h:.2f} spacings")
    print(f"EP point with the largest residual: {np.round(ep.points[np.argmax(ep.values[ep.mask])], 4).tolist()}")
    print(f"distance from (0, (1,0,0)) to the EP set: {set_distance(M, EX51_COMPUTED[None], ep.points) / h:.2f} spacings")
    print(f"distance from (1, (1,0,0)) to the EP set: {set_distance(M, EX51_STATED[None], ep.points) / h:.2f} spacings")
    print(f"F((1,(1,0,0)), (0,(1,0,0))) = {float(F(EX51_STATED, EX51_COMPUTED)):+.3f}: player 1 gains by moving to 0")


if __name__ == "__main__":
    main()
