"""Error of truncated surrogates against a fine reference surrogate."""
import numpy as np

from fgpc import Distribution, FgpcProblem, Guess, convergence_map, duffing_system, hb_guess, solve_fgpc

system = duffing_system()
dist = Distribution.beta4(5, 5, 0.8, 1.2)
guesses = {}


def solve_fn(H, N):
    P = FgpcProblem.build(system, dist, H, N)
    if H not in guesses:
        guesses[H] = hb_guess(system, P.grid, 1.0)
    return solve_fgpc(P, Guess(P.lift(guesses[H].unknowns)))


emap = convergence_map(solve_fn, [1, 2, 3, 4, 5], [0, 2, 4, 6, 8, 11], (5, 11), dist, 500)
print("rows H = 1..5, columns N =", emap.N_list)
with np.printoptions(precision=2):
    print(emap.errors)
# Even harmonics vanish, so adding one only repeats the previous odd H
print("eps(2, N) / eps(1, N):", np.round(emap.errors[1] / emap.errors[0], 6))
