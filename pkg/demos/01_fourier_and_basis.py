"""Building blocks: the AFT transform pair and orthonormal gPC bases."""
import numpy as np

from fgpc import Distribution, FourierGrid, build_basis, evaluate_basis, forward_transform, gauss_rule, inverse_transform

# A grid for H = 5 harmonics and a cubic nonlinearity.  The number of time
# samples is picked so that products up to degree 3 do not alias.
grid = FourierGrid(5, d_nl=3)
print("time samples:", grid.n_time)

t = grid.t_nodes
x = 0.3 + np.cos(t) - 0.5 * np.sin(3 * t)
c = forward_transform(x, grid)
print("cosine coefficients:", np.round(c.a[0], 12))
print("sine coefficients:  ", np.round(c.b[0], 12))
print("round trip error:", np.max(np.abs(inverse_transform(c, grid)[:, 0] - x)))

# The cube of an H-band signal is computed exactly on this grid
cube = forward_transform(x**3, grid)
print("|x^3| harmonics:", np.round(cube.magnitudes()[0], 6))

# Orthonormal polynomials for a scaled beta density on [0.8, 1.2]
dist = Distribution.beta4(5, 5, 0.8, 1.2)
basis = build_basis(dist, 6)
rule = gauss_rule(basis, 12)
phi = evaluate_basis(basis, rule.nodes)
gram = np.einsum("z,zm,zn->mn", rule.weights, phi, phi)
print("Gram matrix deviation from identity:", np.max(np.abs(gram - np.eye(7))))
print("Gauss nodes:", np.round(rule.nodes, 4))
print("mean by quadrature:", rule.integrate(rule.nodes), "exact:", dist.mean)
