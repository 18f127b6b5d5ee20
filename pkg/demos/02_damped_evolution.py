"""Free evolution of the strongly damped fractional wave equation.

With damping delta the modes split into an oscillatory block (delta^2 lambda < 4)
and an overdamped tail.  In the tail the slow root tends to -1/delta, so every
high mode decays at essentially the same rate.
"""
import numpy as np

from fracwave.evolution import energy, solve_homogeneous
from fracwave.modal_dynamics import Overdamped, classify
from fracwave.spectral_core import Grid1D, assemble, eigenpairs

grid = Grid1D(n_interior=256, n_exterior=512)
basis = eigenpairs(assemble(grid, 0.5), 24)

for delta in (0.0, 0.5, 1.0):
    spectrum = classify(delta, basis.lambdas)
    slow = [r.lambda_plus for r in spectrum.regimes if isinstance(r, Overdamped)]
    print(f"delta = {delta}: {spectrum.n0} oscillatory modes, {len(slow)} overdamped")
    if slow:
        print(f"  slow roots of the last modes {np.array2string(np.array(slow[-3:]), precision=4)}"
              f"  (limit -1/delta = {-1 / delta:.4f})")

# energy of a random state under three damping levels
rng = np.random.default_rng(0)
u0 = rng.standard_normal(24) / np.arange(1, 25)
u1 = np.zeros(24)
t = np.linspace(0.0, 6.0, 7)
for delta in (0.0, 0.5, 1.0):
    spectrum = classify(delta, basis.lambdas)
    e = [energy(solve_homogeneous(u0, u1, spectrum, ti), basis.lambdas) for ti in t]
    print(f"delta = {delta}: energy", " ".join(f"{v:.4f}" for v in e))
