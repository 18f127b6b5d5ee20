"""Eigenpairs of the restricted fractional Laplacian on (-1, 1).

Builds the P1 stiffness matrix for a few fractional orders, looks at the first
eigenvalues, compares them with the Weyl-type asymptotics and shows how the
nonlocal normal derivative of the first mode behaves outside the interval.
"""
import numpy as np

from fracwave.nonlocal_ops import ExteriorProfile, check_flux_identity, mode_fluxes
from fracwave.spectral_core import Grid1D, assemble, eigenpairs

grid = Grid1D(a=-1.0, b=1.0, n_interior=256, n_exterior=512)

# lambda_n grows like (n pi / |Omega|)^{2s} up to a shift
for s in (0.25, 0.5, 0.75):
    system = assemble(grid, s)
    basis = eigenpairs(system, 8)
    weyl = (np.arange(1, 9) * np.pi / 2 - (1 - s) * np.pi / 4) ** (2 * s)
    print(f"s = {s}")
    print("  lambda_n      ", np.array2string(basis.lambdas, precision=4))
    print("  asymptotic    ", np.array2string(weyl, precision=4))

# exterior flux of phi_1: negative everywhere, decaying like |y|^{-1-2s}
system = assemble(grid, 0.5)
basis = eigenpairs(system, 8)
y = np.array([1.05, 1.5, 2.0, 4.0, 8.0])
flux = mode_fluxes(basis, system, y)[:, 0]
for yi, f in zip(y, flux):
    print(f"N_s phi_1({yi:4.2f}) = {f: .4e}")

# the flux pairing of a smooth exterior bump against phi_n equals -lambda_n (phi_n, U_g)
bump = ExteriorProfile.bump(grid, 1.2, 1.7)
res = [check_flux_identity(bump, basis, system, n) for n in range(1, 9)]
print("flux identity residuals:", " ".join(f"{r:.1e}" for r in res))
