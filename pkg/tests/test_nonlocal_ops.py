import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from fracwave.errors import DomainError
from fracwave.nonlocal_ops import (
    ExteriorProfile,
    cell_kernel_mass,
    check_flux_identity,
    check_integration_by_parts,
    dirichlet_lift,
    export_flux_table,
    flux_matrix,
    kernel_mass,
    mode_fluxes,
    nonlocal_normal_derivative,
)
from fracwave.spectral_core import Grid1D, assemble, c_ns, eigenpairs


def test_kernel_mass_closed_form():
    g = Grid1D()
    for s in (0.25, 0.5, 0.8):
        for y in (-1.3, 1.01, 4.0):
            ref = quad(lambda x: abs(x - y) ** (-1 - 2 * s), g.a, g.b, epsabs=0, epsrel=1e-13)[0]
            assert kernel_mass(np.array([y]), g, s)[0] == pytest.approx(ref, rel=1e-12)


def test_cell_kernel_mass_matches_quadrature():
    g = Grid1D(n_interior=16, n_exterior=8)
    left, right = g.exterior_edges
    cm = cell_kernel_mass(g, 0.3)
    edges = list(zip(left[:-1], left[1:])) + list(zip(right[:-1], right[1:]))
    for j in (0, 7, 8, 15):
        lo, hi = edges[j]
        ref = quad(lambda y: kernel_mass(np.array([y]), g, 0.3)[0], lo, hi, epsrel=1e-12)[0]
        assert cm[j] == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("y", [1.0 + 1e-3, 1.05, -1.5, 3.0])
def test_flux_matrix_against_direct_quadrature(small, y):
    g, sy, _ = small
    F = flux_matrix(sy, np.array([y]))[0]
    x = g.nodes
    for i in (0, 1, g.n_interior // 2, g.n_interior - 1):
        lo, hi = x[i] - g.h, x[i] + g.h

        def hat(t):
            return max(0.0, 1.0 - abs(t - x[i]) / g.h) * abs(t - y) ** (-1 - 2 * sy.s)

        ref = -sy.c_ns * quad(hat, lo, hi, points=[x[i]], epsabs=0, epsrel=1e-12, limit=200)[0]
        assert F[i] == pytest.approx(ref, rel=1e-8, abs=1e-14 * abs(F).max())


def test_first_mode_flux_is_negative(small):
    _, sy, b = small
    tab = mode_fluxes(b, sy)
    assert np.all(tab[:, 0] < 0)


def test_flux_decays_like_kernel(small):
    _, sy, b = small
    y = np.array([10.0, 20.0, 40.0])
    f = np.abs(flux_matrix(sy, y) @ b.modes[:, 0])
    slope = np.diff(np.log(f)) / np.diff(np.log(y))
    assert np.allclose(slope, -1 - 2 * sy.s, atol=0.05)


def test_lift_of_constant_approaches_one():
    centre = []
    for n in (64, 256):
        g = Grid1D(n_interior=n, n_exterior=2 * n)
        sy = assemble(g, 0.5)
        u = dirichlet_lift(ExteriorProfile(np.ones(g.n_cells), g, (1.0, 1.0)), sy)
        centre.append(abs(u[n // 2] - 1))
    assert centre[1] < centre[0] < 0.06


def test_flux_identity_refines():
    res = []
    for n in (128, 256):
        g = Grid1D(n_interior=n, n_exterior=2 * n)
        sy = assemble(g, 0.5)
        b = eigenpairs(sy, 8)
        bump = ExteriorProfile.bump(g, 1.2, 1.7)
        res.append(max(check_flux_identity(bump, b, sy, k) for k in range(1, 9)))
    assert res[1] <= res[0] <= 5e-2


def test_integration_by_parts_defect_is_small(small):
    g, sy, b = small
    bump = ExteriorProfile.bump(g, 1.2, 1.7)
    U = dirichlet_lift(bump, sy)
    assert check_integration_by_parts(b.modes[:, 0], (U, bump), sy) < 1e-3
    # both functions vanish outside: the identity is purely algebraic
    assert check_integration_by_parts(b.modes[:, 0], b.modes[:, 1], sy) < 1e-12


@given(st.floats(-3, 3, allow_nan=False), st.floats(-3, 3, allow_nan=False))
@settings(max_examples=25, deadline=None)
def test_lift_and_flux_are_linear(small, alpha, beta):
    g, sy, b = small
    p = ExteriorProfile.bump(g, 1.2, 1.7)
    q = ExteriorProfile.bump(g, -2.0, -1.3, "poly6")
    comb = ExteriorProfile(alpha * p.values + beta * q.values, g)
    lhs = dirichlet_lift(comb, sy)
    rhs = alpha * dirichlet_lift(p, sy) + beta * dirichlet_lift(q, sy)
    assert np.allclose(lhs, rhs, atol=1e-12 * (1 + abs(alpha) + abs(beta)))
    u = b.modes[:, 0]
    f = nonlocal_normal_derivative((alpha * u, comb), sy).values
    f1 = nonlocal_normal_derivative((u, p), sy).values
    f2 = nonlocal_normal_derivative((np.zeros_like(u), q), sy).values
    assert np.allclose(f, alpha * f1 + beta * f2, atol=1e-10 * (1 + np.abs(f1).max() + np.abs(f2).max()))


def test_profile_validation(small):
    g, _, _ = small
    with pytest.raises(DomainError):
        ExteriorProfile(np.zeros(3), g)
    with pytest.raises(DomainError):
        ExteriorProfile.bump(g, 0.5, 1.5)
    with pytest.raises(DomainError):
        ExteriorProfile(np.full(g.n_cells, np.nan), g)
    with pytest.raises(DomainError):
        flux_matrix(assemble(g, 0.5), np.array([0.0]))
    p = ExteriorProfile.bump(g, 1.2, 1.7)
    with pytest.raises(ValueError):
        p.values[0] = 1.0


def test_profile_evaluation(small):
    g, _, _ = small
    p = ExteriorProfile.from_function(g, lambda x: x, tails=(-7.0, 7.0))
    assert p(np.array([-100.0, 100.0])).tolist() == [-7.0, 7.0]
    x = g.exterior_nodes[[3, -3]]
    assert np.allclose(p(x), x)


def test_export_flux_table(tmp_path, small):
    g, sy, b = small
    x = g.exterior_nodes[:5]
    export_flux_table(tmp_path / "f.csv", mode_fluxes(b, sy, x)[:, :2], x)
    rows = list(csv.reader(open(tmp_path / "f.csv")))
    assert rows[0] == ["x", "mode", "value"]
    assert len(rows) == 11
    assert float(rows[1][0]) == x[0]
