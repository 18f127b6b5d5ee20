"""Why strong damping destroys null controllability.

For delta > 0 the slow exponents of the overdamped modes accumulate at -1/delta.
The moment equations then ask one control to separate nearly equal exponentials,
and the smallest singular value of the moment matrix collapses.  Without damping
the exponents stay separated and the moment matrix stays well conditioned.
"""
import numpy as np

from fracwave.control_analysis import ControlAnsatz, bump_family, spectral_control_diagnostic
from fracwave.spectral_core import Grid1D, assemble, eigenpairs

grid = Grid1D(n_interior=256, n_exterior=512)
system = assemble(grid, 0.5)
basis = eigenpairs(system, 24)
T = 60.0
ansatz = ControlAnsatz.on_interval(grid, 1.2, 1.7, 1, bump_family(T, 200), T)

diag = spectral_control_diagnostic(1.0, T, 20, ansatz, basis, system)
print(" k   sigma_min(delta=1)   sigma_min(delta=0)")
for k, a, b in zip(diag.k, diag.sigma_min, diag.contrast.sigma_min):
    print(f"{k:2d}   {a:18.3e}   {b:18.3e}")
print(f"decay from k=5 to k=20: {diag.decay_orders(5, 20):.1f} orders (damped), "
      f"{diag.contrast.decay_orders(5, 20):.1f} orders (undamped)")
