"""Exterior data: harmonic Dirichlet lift, nonlocal normal derivative and their identities.

Exterior data are piecewise constant on the exterior cells of a :class:`Grid1D`, with
optional constant values on the two semi-infinite tails.  The nonlocal normal
derivative of a function ``u`` is

    N_s u(y) = C_{1,s} int_Omega (u(y) - u(x)) |x - y|^{-1-2s} dx,   y outside Omega,

evaluated with the interval quadrature built during assembly.  Pairings
``int g N_s phi`` are midpoint sums over the exterior cells.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import DomainError, NumericalError
from .spectral_core import Grid1D

__all__ = [
    "ExteriorProfile",
    "FluxVector",
    "dirichlet_lift",
    "kernel_mass",
    "flux_matrix",
    "mode_fluxes",
    "nonlocal_normal_derivative",
    "exterior_pairing",
    "cell_kernel_mass",
    "check_integration_by_parts",
    "check_flux_identity",
    "export_flux_table",
]


@dataclass(frozen=True, eq=False)
class ExteriorProfile:
    """Piecewise-constant exterior datum.

    Parameters
    ----------
    values : ndarray, shape (2 * n_exterior,)
        Cell values, left collar then right collar, ascending in x.
    grid : Grid1D
    tails : tuple of float
        Values on ``(-inf, a - halo)`` and ``(b + halo, inf)``.
    """

    values: np.ndarray
    grid: Grid1D
    tails: tuple = (0.0, 0.0)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_cells,):
            raise DomainError(f"expected {self.grid.n_cells} exterior values, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or not np.all(np.isfinite(self.tails)):
            raise DomainError("exterior values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "tails", (float(self.tails[0]), float(self.tails[1])))

    @classmethod
    def zeros(cls, grid):
        return cls(np.zeros(grid.n_cells), grid)

    @classmethod
    def from_function(cls, grid, f, tails=(0.0, 0.0)):
        """Sample ``f`` at the cell midpoints."""
        return cls(np.asarray(f(grid.exterior_nodes), dtype=float), grid, tails)

    @classmethod
    def bump(cls, grid, lo, hi, kind="poly4"):
        """Smooth bump ``(1 - z^2)^k`` supported on ``[lo, hi]`` outside the interval."""
        if hi <= lo:
            raise DomainError("bump needs lo < hi")
        if lo < grid.b and hi > grid.a:
            raise DomainError("bump support must lie outside the interval")
        k = {"poly4": 4, "poly6": 6}[kind]
        c, r = 0.5 * (lo + hi), 0.5 * (hi - lo)

        def f(x):
            z = (x - c) / r
            return np.where(np.abs(z) < 1.0, (1.0 - z * z) ** k, 0.0)

        return cls.from_function(grid, f)

    @property
    def weights(self):
        """Cell widths (midpoint-rule weights)."""
        return np.full(self.grid.n_cells, self.grid.h_ext)

    def __call__(self, x):
        """Evaluate at exterior points."""
        idx = self.grid.cell_index(x)
        out = np.where(idx < 0, self.tails[0], self.tails[1]).astype(float)
        inside = (idx >= 0) & (idx < self.grid.n_cells)
        out[inside] = self.values[idx[inside]]
        return out

    def scaled(self, alpha):
        return ExteriorProfile(alpha * self.values, self.grid, (alpha * self.tails[0], alpha * self.tails[1]))


@dataclass(frozen=True, eq=False)
class FluxVector:
    """Values of ``N_s u`` at exterior points ``x``."""

    values: np.ndarray
    x: np.ndarray
    source_mode: int | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise NumericalError("non-finite nonlocal normal derivative")


def _check_profile(g, system):
    if g.grid != system.grid:
        raise DomainError("exterior profile and system live on different grids")


def dirichlet_lift(g, system):
    """Interior nodal values of the discrete s-harmonic extension of ``g``.

    Solves ``K u = -(K_coupling g + K_tail tails)``.
    """
    _check_profile(g, system)
    rhs = -(system.K_coupling @ g.values + system.K_tail @ np.asarray(g.tails))
    try:
        cf = la.cho_factor(system.K)
        u = la.cho_solve(cf, rhs)
    except la.LinAlgError as exc:
        raise NumericalError(f"stiffness matrix is not positive definite: {exc}") from exc
    if not np.all(np.isfinite(u)):
        raise NumericalError("Dirichlet lift produced non-finite values")
    return u


def kernel_mass(y, grid, s):
    """``int_Omega |x - y|^{-1-2s} dx`` for exterior points y (closed form)."""
    y = np.asarray(y, dtype=float)
    if np.any((y >= grid.a) & (y <= grid.b)):
        raise DomainError("exterior node inside the closure of the interval")
    left = y < grid.a
    near = np.where(left, grid.a - y, y - grid.b)
    far = np.where(left, grid.b - y, y - grid.a)
    return (near ** (-2.0 * s) - far ** (-2.0 * s)) / (2.0 * s)


def flux_matrix(system, y):
    """Matrix ``F[j, i] = N_s phi_i(y_j)`` for the interior hats.

    Since hats vanish outside the interval, ``N_s u = F @ u_int`` for any ``u``
    vanishing outside; exterior values add ``C u(y) kernel_mass(y)``.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    g = system.grid
    if np.any((y >= g.a) & (y <= g.b)):
        raise DomainError("exterior node inside the closure of the interval")
    rule = system.quad
    s = system.s
    out = np.empty((y.size, g.n_interior))
    for start in range(0, y.size, 256):
        yy = y[start : start + 256]
        kern = rule.distance(yy) ** (-1.0 - 2.0 * s)
        out[start : start + 256] = -system.c_ns * (rule.phi @ (rule.w[:, None] * kern)).T
    return out


def mode_fluxes(basis, system, x_ext=None):
    """Table ``T[j, n] = N_s phi_n(x_j)``; defaults to all exterior cell midpoints."""
    x = system.grid.exterior_nodes if x_ext is None else np.asarray(x_ext, dtype=float)
    return flux_matrix(system, x) @ basis.modes


def _split_full(u_full, system):
    g = system.grid
    if isinstance(u_full, tuple):
        u_int, ext = u_full
        if not isinstance(ext, ExteriorProfile):
            ext = ExteriorProfile(np.asarray(ext, dtype=float), g)
        return np.asarray(u_int, dtype=float), ext
    u = np.asarray(u_full, dtype=float)
    n = g.n_interior
    if u.shape == (n,):
        return u, ExteriorProfile.zeros(g)
    if u.shape != (n + g.n_cells,):
        raise DomainError(f"u_full must have length {n} or {n + g.n_cells}")
    return u[:n], ExteriorProfile(u[n:], g)


def nonlocal_normal_derivative(u_full, system, x_ext=None):
    """Nonlocal normal derivative of ``u`` at exterior points.

    Parameters
    ----------
    u_full : ndarray or tuple
        Interior nodal values (length ``n_interior``), interior followed by exterior
        cell values, or a pair ``(u_int, ExteriorProfile)``.
    system : StiffnessSystem
    x_ext : array_like, optional
        Exterior evaluation points; defaults to the cell midpoints.

    Returns
    -------
    FluxVector
    """
    u_int, ext = _split_full(u_full, system)
    x = system.grid.exterior_nodes if x_ext is None else np.atleast_1d(np.asarray(x_ext, dtype=float))
    vals = flux_matrix(system, x) @ u_int
    vals = vals + system.c_ns * ext(x) * kernel_mass(x, system.grid, system.s)
    return FluxVector(values=vals, x=x)


def exterior_pairing(v_ext, flux):
    """Midpoint-rule pairing ``int_{ext} v N_s u`` over the exterior cells."""
    grid = v_ext.grid
    if flux.x.shape != grid.exterior_nodes.shape or not np.array_equal(flux.x, grid.exterior_nodes):
        raise DomainError("flux must be sampled at the exterior cell midpoints")
    return float(np.sum(v_ext.values * flux.values) * grid.h_ext)


def _power_integral(lo, hi, s):
    """``int_lo^hi r^{-2s} dr`` elementwise; infinite when ``lo = 0`` and ``s >= 1/2``."""
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    if abs(2.0 * s - 1.0) < 1e-14:
        with np.errstate(divide="ignore"):
            return np.log(hi) - np.log(lo)
    q = 1.0 - 2.0 * s
    with np.errstate(divide="ignore"):
        return (hi**q - lo**q) / q


def cell_kernel_mass(grid, s):
    """``int_cell kernel_mass(y) dy`` for every exterior cell (closed form)."""
    left, right = grid.exterior_edges
    a, b = grid.a, grid.b
    near = np.concatenate([_power_integral(a - left[1:], a - left[:-1], s),
                           _power_integral(right[:-1] - b, right[1:] - b, s)])
    far = np.concatenate([_power_integral(b - left[1:], b - left[:-1], s),
                          _power_integral(right[:-1] - a, right[1:] - a, s)])
    return (near - far) / (2.0 * s)


def check_integration_by_parts(u, v, system):
    """Relative defect of the nonlocal integration-by-parts formula.

    ``u`` and ``v`` are pairs ``(u_int, ExteriorProfile)`` or interior vectors.  The
    form side is the bilinear form on the discrete space, with cell integrals of the
    exterior-exterior interaction done in closed form.  The volume term is
    ``int_Omega v (-Delta)^s u`` tested with the interior hats, and the flux term is
    the midpoint pairing of the exterior part of ``v`` against ``N_s u``.  The
    remaining defect is the midpoint-rule error of the flux pairing.
    """
    u_int, u_ext = _split_full(u, system)
    v_int, v_ext = _split_full(v, system)
    lap_u = system.K @ u_int + system.K_coupling @ u_ext.values + system.K_tail @ np.asarray(u_ext.tails)
    volume = v_int @ lap_u
    form = volume + u_int @ (system.K_coupling @ v_ext.values + system.K_tail @ np.asarray(v_ext.tails))
    both = (u_ext.values != 0.0) & (v_ext.values != 0.0)
    if np.any(both):
        cm = cell_kernel_mass(system.grid, system.s)
        form += system.c_ns * np.sum(u_ext.values[both] * v_ext.values[both] * cm[both])
    flux = exterior_pairing(v_ext, nonlocal_normal_derivative((u_int, u_ext), system))
    return abs(form - (volume + flux)) / max(1.0, abs(form))


def check_flux_identity(g, basis, system, n):
    """Relative defect of ``int g N_s phi_n = -lambda_n (phi_n, U_g)``; ``n`` is 1-based."""
    if not 1 <= n <= basis.m:
        raise DomainError(f"mode index must lie in 1..{basis.m}")
    phi = basis.modes[:, n - 1]
    lam = basis.lambdas[n - 1]
    lhs = exterior_pairing(g, nonlocal_normal_derivative(phi, system))
    proj = phi @ (system.M @ dirichlet_lift(g, system))
    return abs(lhs + lam * proj) / (1.0 + lam * abs(proj))


def export_flux_table(path, table, x, modes=None):
    """Write ``N_s phi_n`` samples as CSV with columns x, mode, value."""
    table = np.asarray(table)
    modes = range(1, table.shape[1] + 1) if modes is None else modes
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "mode", "value"])
        for j, n in enumerate(modes):
            for xi, val in zip(x, table[:, j]):
                w.writerow([f"{xi:.17g}", n, f"{val:.17g}"])
