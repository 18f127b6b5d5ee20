"""Steering the first mode with an exterior control.

The control acts on [1.2, 1.7], outside the interval, through its pairing with the
nonlocal normal derivatives of the modes.  Nested families of temporal bumps give
smaller and smaller steering errors, the numerical face of approximate
controllability.
"""
import numpy as np

from fracwave.control_analysis import ControlAnsatz, approximate_control, bump_family, reachability_map
from fracwave.evolution import StatePair, solve_full
from fracwave.modal_dynamics import classify
from fracwave.spectral_core import Grid1D, assemble, eigenpairs

grid = Grid1D(n_interior=256, n_exterior=512)
system = assemble(grid, 0.5)
basis = eigenpairs(system, 12)
spectrum = classify(0.1, basis.lambdas)
T = 4.0
target = StatePair(np.eye(12)[0], np.zeros(12), T)

profiles = []
for J in (4, 8, 16, 32):
    profiles = profiles + bump_family(T, J)
    ansatz = ControlAnsatz.on_interval(grid, 1.2, 1.7, 4, profiles, T)
    R = reachability_map(ansatz, basis, system, spectrum)
    errs = [approximate_control(target, ansatz, basis, system, spectrum, eps, R)[1] for eps in (1e-8, 1e-11, 1e-14)]
    print(f"{ansatz.size:4d} controls: error at eps_reg 1e-8, 1e-11, 1e-14 =", " ".join(f"{e:.2e}" for e in errs))

# replay the last control through the forward solver
solved, err = approximate_control(target, ansatz, basis, system, spectrum, 1e-14, R)
final = solve_full(np.zeros(12), np.zeros(12), solved.to_control(), basis, system, spectrum, T)
print("u(T) modal coefficients:", np.array2string(final.u_coeffs, precision=4, suppress_small=True))
