"""Surrogate against Monte-Carlo harmonic balance on the same samples."""
import time

import numpy as np
from scipy import stats

from fgpc import (
    Distribution,
    FgpcProblem,
    compare_summaries,
    duffing_system,
    initial_guess,
    mc_oracle,
    sample,
    solve_fgpc,
    summary_from_paths,
    surrogate_paths,
)

dist = Distribution.beta4(5, 5, 0.8, 1.2)
problem = FgpcProblem.build(duffing_system(), dist, H=5, N=12)
surrogate = solve_fgpc(problem, initial_guess(problem))

thetas = np.sort(sample(dist, 2000, seed=0))
mc = mc_oracle(duffing_system(), thetas, H=5)
print(f"oracle: {len(thetas)} deterministic solves in {mc.wall_time:.2f} s, {len(mc.failures)} failures")
print("iterations per sample after the first:", np.bincount(mc.iterations[1:]))

times = np.linspace(0, surrogate.period, 128)
t0 = time.perf_counter()
paths = surrogate_paths(surrogate, thetas, times)
t_sur = time.perf_counter() - t0
print(f"surrogate evaluation: {t_sur:.4f} s, speedup {mc.wall_time / t_sur:.0f}x")

diff = compare_summaries(summary_from_paths(times, paths, thetas), summary_from_paths(times, mc.paths(times), thetas))
print("max |mean difference|:", diff.max_abs_mean)
a = surrogate_paths(surrogate, thetas, np.array([2.0]))[:, 0, 0]
b = mc.paths(np.array([2.0]))[:, 0, 0]
print("KS distance of the t = 2 marginals:", stats.ks_2samp(a, b, method="asymp").statistic)
