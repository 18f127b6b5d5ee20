"""Numerical rank of the exterior fluxes.

Unique continuation says that no nonzero combination of eigenfunctions has a
vanishing nonlocal normal derivative on an open exterior set.  The fluxes are
analytic away from the interval, though, so their Gram matrix on a short window
is numerically singular long before ten modes: independence holds, but is
invisible in double precision.
"""
import numpy as np

from fracwave.control_analysis import unique_continuation_test
from fracwave.nonlocal_ops import mode_fluxes
from fracwave.spectral_core import Grid1D, assemble, eigenpairs

grid = Grid1D(n_interior=256, n_exterior=1024)
system = assemble(grid, 0.5)
basis = eigenpairs(system, 10)
x = grid.exterior_nodes
table = mode_fluxes(basis, system)

for lo, hi in ((1.0, 1.25), (1.0, 1.5), (1.0, 5.0)):
    mask = (x > lo) & (x < hi)
    w = np.full(mask.sum(), grid.h_ext)
    print(f"window [{lo}, {hi}]")
    for M in (2, 4, 6, 8, 10):
        rep = unique_continuation_test(x[mask], table[mask], w, M)
        print(f"  M = {M:2d}: sigma_min / mean diagonal = {rep.sigma_min / (rep.trace / M):.1e}")
