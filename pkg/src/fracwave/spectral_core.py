"""Piecewise-linear Galerkin discretization of the restricted fractional Laplacian on an interval.

The interval ``(a, b)`` carries a uniform grid of ``n_interior`` hat functions.  The
complement is truncated to a collar of length ``exterior_halo`` on each side, split
into ``n_exterior`` uniform cells per side, plus two semi-infinite tail cells.
Exterior data are piecewise constant on those cells.

Because the grid is uniform and the bilinear form is translation invariant on the
whole line, the stiffness matrix is Toeplitz.  Each entry reduces to a single
integral over the separation variable of a piecewise cubic (the autocorrelation of
two hats) against ``|r|^{-1-2s}``; the singular unit interval is integrated exactly
and the remaining unit intervals by a fixed Gauss-Legendre rule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.special import gamma

from .errors import AssemblyError, DomainError, NumericalError

__all__ = [
    "Grid1D",
    "StiffnessSystem",
    "SpectralBasis",
    "c_ns",
    "assemble",
    "eigenpairs",
    "norm",
    "mass_matrix",
    "export_basis",
    "import_basis",
]


def c_ns(s):
    """Normalization constant ``C_{1,s}`` of the one-dimensional fractional Laplacian.

    Parameters
    ----------
    s : float
        Fractional order, ``0 < s < 1``.

    Returns
    -------
    float
        ``s 2^{2s} Gamma((2s+1)/2) / (sqrt(pi) Gamma(1-s))``.
    """
    s = float(s)
    if not 0.0 < s < 1.0:
        raise DomainError(f"fractional order s must lie in (0, 1), got {s!r}")
    return s * 4.0**s * gamma(s + 0.5) / (math.sqrt(math.pi) * gamma(1.0 - s))


@dataclass(frozen=True)
class Grid1D:
    """Uniform interior grid on ``(a, b)`` plus a truncated exterior collar.

    Parameters
    ----------
    a, b : float
        Interval endpoints, ``b > a``.
    n_interior : int
        Number of interior nodes (hat functions).
    exterior_halo : float, optional
        Length of the exterior collar on each side; defaults to ``4 (b - a)``.
    n_exterior : int
        Number of exterior cells per side.
    """

    a: float = -1.0
    b: float = 1.0
    n_interior: int = 128
    exterior_halo: float | None = None
    n_exterior: int = 256

    def __post_init__(self):
        if not self.b > self.a:
            raise DomainError(f"need b > a, got a={self.a}, b={self.b}")
        if int(self.n_interior) < 1 or int(self.n_exterior) < 1:
            raise DomainError("n_interior and n_exterior must be positive")
        if self.exterior_halo is None:
            object.__setattr__(self, "exterior_halo", 4.0 * (self.b - self.a))
        if not self.exterior_halo > 0:
            raise DomainError("exterior_halo must be positive")
        object.__setattr__(self, "n_interior", int(self.n_interior))
        object.__setattr__(self, "n_exterior", int(self.n_exterior))

    @property
    def h(self):
        return (self.b - self.a) / (self.n_interior + 1)

    @property
    def h_ext(self):
        return self.exterior_halo / self.n_exterior

    @property
    def nodes(self):
        """Interior node coordinates, ascending."""
        return self.a + self.h * np.arange(1, self.n_interior + 1)

    @property
    def exterior_edges(self):
        """Cell edges as two ascending arrays ``(left, right)`` of length ``n_exterior + 1``."""
        k = np.arange(self.n_exterior + 1)
        left = self.a - self.exterior_halo + k * self.h_ext
        left[-1] = self.a
        right = self.b + k * self.h_ext
        right[0] = self.b
        return left, right

    @property
    def exterior_nodes(self):
        """Exterior cell midpoints (left collar then right collar), ascending."""
        left, right = self.exterior_edges
        return np.concatenate([0.5 * (left[1:] + left[:-1]), 0.5 * (right[1:] + right[:-1])])

    @property
    def n_cells(self):
        return 2 * self.n_exterior

    def cell_index(self, x):
        """Index of the exterior cell containing each point; -1 / n_cells mark the tails."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any((x >= self.a) & (x <= self.b)):
            raise DomainError("exterior points must lie outside the closed interval [a, b]")
        left, right = self.exterior_edges
        idx = np.empty(x.shape, dtype=int)
        lm = x < self.a
        idx[lm] = np.searchsorted(left, x[lm], side="right") - 1
        rm = ~lm
        idx[rm] = self.n_exterior + np.searchsorted(right, x[rm], side="right") - 1
        idx[lm & (x < left[0])] = -1
        idx[rm & (x >= right[-1])] = self.n_cells
        return idx


@dataclass(frozen=True, eq=False)
class StiffnessSystem:
    """Assembled Galerkin matrices.

    ``K`` is the interior stiffness, ``M`` the P1 mass matrix, ``K_coupling`` the form
    evaluated between interior hats and exterior cell indicators, and ``K_tail`` the
    same for the two semi-infinite tails (left, right).
    """

    K: np.ndarray
    M: np.ndarray
    K_coupling: np.ndarray
    K_tail: np.ndarray
    s: float
    c_ns: float
    grid: Grid1D
    quad: QuadRule | None = field(repr=False, default=None)


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Eigenpairs of the discrete operator; ``modes`` holds nodal values column-wise."""

    lambdas: np.ndarray
    modes: np.ndarray
    grid: Grid1D
    s: float

    @property
    def m(self):
        return len(self.lambdas)

    @property
    def mass(self):
        return mass_matrix(self.grid)

    def project(self, nodal):
        """L2 coefficients ``(u, phi_n)`` of interior nodal vector(s)."""
        return self.modes.T @ (self.mass @ np.asarray(nodal, dtype=float))

    def synthesize(self, coeffs):
        """Interior nodal values of ``sum_n c_n phi_n``."""
        c = np.asarray(coeffs, dtype=float)
        return self.modes[:, : c.shape[0]] @ c


def mass_matrix(grid):
    n, h = grid.n_interior, grid.h
    M = np.zeros((n, n))
    i = np.arange(n)
    M[i, i] = 4.0 * h / 6.0
    M[i[:-1], i[:-1] + 1] = h / 6.0
    M[i[:-1] + 1, i[:-1]] = h / 6.0
    return M


def _hat_autocorr(r):
    """Autocorrelation of the unit hat (support [-1, 1]); a cubic B-spline."""
    r = np.abs(r)
    out = np.zeros_like(r, dtype=float)
    near = r < 1.0
    mid = (r >= 1.0) & (r < 2.0)
    out[near] = 2.0 / 3.0 - r[near] ** 2 + 0.5 * r[near] ** 3
    out[mid] = (2.0 - r[mid]) ** 3 / 6.0
    return out


def _bracket(d, rho):
    return 2.0 * _hat_autocorr(np.asarray(d, dtype=float)) - _hat_autocorr(rho + d) - _hat_autocorr(rho - d)


def _toeplitz_column(n, s, n_gauss=16, rtol=1e-10):
    """Dimensionless integrals ``int_0^inf rho^{-1-2s} beta_d(rho) d rho`` for d = 0..n-1."""
    xg, wg = np.polynomial.legendre.leggauss(n_gauss)
    xh, wh = np.polynomial.legendre.leggauss(n_gauss // 2)
    xg, xh = 0.5 * (xg + 1.0), 0.5 * (xh + 1.0)
    wg, wh = 0.5 * wg, 0.5 * wh
    p = -1.0 - 2.0 * s
    col = np.zeros(n)

    def smooth(d, lo, hi):
        # unit intervals [m, m+1] with m >= 1; returns (high, low) order estimates
        m = np.arange(lo, hi, dtype=float)[:, None]
        rho_g, rho_h = m + xg, m + xh
        fg = (rho_g**p * _bracket(d, rho_g)) @ wg
        fh = (rho_h**p * _bracket(d, rho_h)) @ wh
        return fg.sum(), fh.sum()

    for d in range(min(n, 3)):
        # [0, 1]: bracket = rho^2 (c0 + c1 rho) exactly
        b1 = _bracket(d, np.array([1.0]))[0]
        bh = _bracket(d, np.array([0.5]))[0]
        c1 = 2.0 * (b1 - 4.0 * bh)
        c0 = b1 - c1
        val = c0 / (2.0 - 2.0 * s) + c1 / (3.0 - 2.0 * s)
        hi, lo = smooth(d, 1, d + 2)
        tail = 2.0 * _hat_autocorr(np.array([float(d)]))[0] * (d + 2.0) ** (-2.0 * s) / (2.0 * s)
        col[d] = val + hi + tail
        _check(d, hi, lo, col[0] if d else val + hi + tail, rtol)
    if n > 3:
        d = np.arange(3, n, dtype=float)[:, None, None]
        k = np.arange(4, dtype=float)[None, :, None]
        rho_g = d - 2.0 + k + xg[None, None, :]
        rho_h = d - 2.0 + k + xh[None, None, :]
        # only b(rho - d) survives for d >= 3
        fg = -(rho_g**p * _hat_autocorr(rho_g - d)) @ wg
        fh = -(rho_h**p * _hat_autocorr(rho_h - d)) @ wh
        hi, lo = fg.sum(axis=1), fh.sum(axis=1)
        col[3:] = hi
        bad = np.abs(hi - lo) > rtol * abs(col[0])
        if np.any(bad):
            j = int(np.argmax(bad)) + 3
            raise AssemblyError(f"stiffness quadrature did not converge for element offset d={j}")
    return col


def _check(d, hi, lo, scale, rtol):
    if abs(hi - lo) > rtol * max(abs(scale), 1e-300):
        raise AssemblyError(f"stiffness quadrature did not converge for element offset d={d}")


def _omega_rule(grid, n_gauss=16, sigma=0.5, s=0.5):
    """Quadrature over (a, b) resolving endpoint singularities of exterior kernels.

    Interior elements use ``n_gauss``-point Gauss-Legendre; the two boundary elements
    use a geometric mesh graded toward the endpoint with 8 points per panel.  Returns
    points, weights and a sparse ``(n_interior, Q)`` matrix of hat values.
    """
    n, h, a, b = grid.n_interior, grid.h, grid.a, grid.b
    xg, wg = np.polynomial.legendre.leggauss(n_gauss)
    xg, wg = 0.5 * (xg + 1.0), 0.5 * wg
    levels = int(min(1500, math.ceil(16.0 / ((2.0 - 2.0 * s) * math.log10(1.0 / sigma)))))
    brk = sigma ** np.arange(levels + 1)[::-1]
    brk = np.concatenate([[0.0], brk])  # panels of [0, 1] graded toward 0
    x8, w8 = np.polynomial.legendre.leggauss(8)
    x8, w8 = 0.5 * (x8 + 1.0), 0.5 * w8
    lo, hi = brk[:-1, None], brk[1:, None]
    tg = (lo + (hi - lo) * x8).ravel()
    wgr = ((hi - lo) * w8).ravel()

    anc, off, wts, elem = [], [], [], []
    # left boundary element [a, a+h], graded toward a
    anc.append(np.full(tg.size, a))
    off.append(h * tg)
    wts.append(h * wgr)
    elem.append(np.zeros(tg.size, dtype=int))
    if n >= 1:
        e = np.arange(1, n)
        anc.append(np.repeat(a + e * h, n_gauss))
        off.append(np.tile(h * xg, n - 1))
        wts.append(np.tile(h * wg, n - 1))
        elem.append(np.repeat(e, n_gauss))
    # right boundary element [b-h, b], graded toward b
    anc.append(np.full(tg.size, b))
    off.append(-h * tg)
    wts.append(h * wgr)
    elem.append(np.full(tg.size, n, dtype=int))
    anchor = np.concatenate(anc)
    offset = np.concatenate(off)
    w = np.concatenate(wts)
    el = np.concatenate(elem)
    x = anchor + offset
    # position inside the element, measured from the nearer exact endpoint
    t_loc = np.where(el == n, 1.0 + offset / h, offset / h)
    t_loc[el == 0] = offset[el == 0] / h
    rows, cols, vals = [], [], []
    q = np.arange(x.size)
    has_left = el >= 1  # node el-1 is the left node of element el
    rows.append(el[has_left] - 1)
    cols.append(q[has_left])
    vals.append(1.0 - t_loc[has_left])
    has_right = el <= n - 1
    rows.append(el[has_right])
    cols.append(q[has_right])
    vals.append(t_loc[has_right])
    phi = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, x.size)
    )
    return QuadRule(x, w, phi, anchor, offset)


@dataclass(frozen=True, eq=False)
class QuadRule:
    """Quadrature over (a, b); ``x = anchor + offset`` with exact endpoint anchors."""

    x: np.ndarray
    w: np.ndarray
    phi: sp.csr_matrix
    anchor: np.ndarray
    offset: np.ndarray

    def distance(self, y):
        """``|x_q - y_j|`` as a (Q, J) array, free of cancellation at the endpoints."""
        y = np.asarray(y, dtype=float)
        return np.abs((self.anchor[:, None] - y[None, :]) + self.offset[:, None])


def _edge_potential(rule, edges, s):
    """``|x - e|^{-2s} / (2s)`` for quadrature points x (Q,) and edges (E,)."""
    return rule.distance(edges) ** (-2.0 * s) / (2.0 * s)


def _coupling(grid, s, cns, rule, chunk=512):
    w, phi = rule.w, rule.phi
    left, right = grid.exterior_edges
    ne = grid.n_exterior
    Kc = np.empty((grid.n_interior, 2 * ne))
    for side, edges in ((0, left), (1, right)):
        for start in range(0, ne, chunk):
            stop = min(ne, start + chunk)
            P = _edge_potential(rule, edges[start : stop + 1], s)
            # int_cell |x-y|^{-1-2s} dy for x on the far side of the cell
            G = (P[:, 1:] - P[:, :-1]) if side == 0 else (P[:, :-1] - P[:, 1:])
            Kc[:, side * ne + start : side * ne + stop] = -cns * (phi @ (w[:, None] * G))
    Pt = _edge_potential(rule, np.array([left[0], right[-1]]), s)
    Kt = -cns * (phi @ (w[:, None] * Pt))
    return Kc, Kt


def assemble(grid, s, n_gauss=16, rtol=1e-8):
    """Assemble stiffness, mass and exterior coupling matrices.

    Parameters
    ----------
    grid : Grid1D
    s : float
        Fractional order in (0, 1).
    n_gauss : int
        Gauss-Legendre order on regular intervals.  Convergence is checked against
        a rule of half the order; disagreement above ``rtol`` raises
        :class:`AssemblyError`.

    Returns
    -------
    StiffnessSystem
    """
    cns = c_ns(s)
    n, h = grid.n_interior, grid.h
    col = cns * h ** (1.0 - 2.0 * s) * _toeplitz_column(n, s, n_gauss)
    K = la.toeplitz(col)
    M = mass_matrix(grid)
    rule = _omega_rule(grid, n_gauss, s=s)
    Kc, Kt = _coupling(grid, s, cns, rule)
    coarse = _omega_rule(grid, n_gauss // 2, sigma=0.5, s=s)
    Kc2, _ = _coupling(grid, s, cns, coarse)
    err = np.abs(Kc - Kc2)
    tol = rtol * max(np.abs(Kc).max(), 1e-300)
    if err.max() > tol:
        i, c = np.unravel_index(np.argmax(err), err.shape)
        raise AssemblyError(
            f"coupling quadrature did not converge for interior node {i} / exterior cell {c}"
            f" (estimated error {err[i, c]:.3e})"
        )
    return StiffnessSystem(K=K, M=M, K_coupling=Kc, K_tail=Kt, s=float(s), c_ns=cns, grid=grid,
                           quad=rule)


def _first_extremum_sign(v):
    dv = np.diff(v)
    scale = np.abs(v).max()
    for i in range(len(dv) - 1):
        if dv[i] * dv[i + 1] <= 0 and abs(v[i + 1]) > 1e-8 * scale:
            return 1.0 if v[i + 1] > 0 else -1.0
    k = int(np.argmax(np.abs(v)))
    return 1.0 if v[k] > 0 else -1.0


def eigenpairs(system, m, rtol=1e-8):
    """Smallest ``m`` eigenpairs of ``K x = lambda M x`` with M-orthonormal modes.

    The sign of each mode is fixed so that its first extremum from the left endpoint
    is positive.
    """
    n = system.K.shape[0]
    m = int(m)
    if not 1 <= m <= n:
        raise DomainError(f"need 1 <= m <= n_interior={n}, got m={m}")
    try:
        lam, V = la.eigh(system.K, system.M, subset_by_index=[0, m - 1])
    except la.LinAlgError as exc:
        raise NumericalError(f"generalized eigensolver failed: {exc}") from exc
    V = V * np.array([_first_extremum_sign(V[:, j]) for j in range(m)])
    # eigh returns M-orthonormal vectors; clusters are re-orthonormalized for safety
    gaps = np.diff(lam) <= 1e-10 * np.abs(lam[1:])
    if np.any(gaps):
        V = _reorthonormalize_clusters(V, lam, system.M, gaps)
    res = system.K @ V - system.M @ V * lam
    rel = np.linalg.norm(res, axis=0) / np.linalg.norm(system.M @ V * lam, axis=0)
    if np.any(rel > rtol) or np.any(lam <= 0):
        raise NumericalError(f"eigenpairs not converged; residuals {rel}")
    return SpectralBasis(lambdas=lam, modes=V, grid=system.grid, s=system.s)


def _reorthonormalize_clusters(V, lam, M, gaps):
    V = V.copy()
    start = 0
    for j in range(1, len(lam) + 1):
        if j == len(lam) or not gaps[j - 1]:
            if j - start > 1:
                block = V[:, start:j]
                G = block.T @ M @ block
                L = np.linalg.cholesky(G)
                V[:, start:j] = np.linalg.solve(L, block.T).T
            start = j
    return V


def norm(coeffs, basis, order):
    """Modal norm of order ``-s``, ``0`` or ``+s``.

    ``order`` may be given numerically (``-basis.s``, ``0``, ``basis.s``) or as one of
    the strings ``"-s"``, ``"0"``, ``"+s"``.
    """
    c = np.asarray(coeffs, dtype=float)
    if c.shape[0] > basis.m:
        raise DomainError("more coefficients than retained modes")
    if isinstance(order, str):
        power = {"-s": -1.0, "0": 0.0, "+s": 1.0, "s": 1.0}[order.strip()]
    else:
        power = float(order) / basis.s
        if min(abs(power - p) for p in (-1.0, 0.0, 1.0)) > 1e-12:
            raise DomainError(f"order must be one of -s, 0, +s; got {order}")
        power = round(power)
    lam = basis.lambdas[: c.shape[0]]
    return float(np.sqrt(np.sum(lam**power * c**2)))


def export_basis(basis, path):
    """Write ``basis`` as a text table with 17 significant digits."""
    g = basis.grid
    lines = [" ".join(f"{v:.17g}" for v in (g.a, g.b, g.h, basis.s, basis.m))]
    for lam, mode in zip(basis.lambdas, basis.modes.T):
        lines.append(" ".join(f"{v:.17g}" for v in (lam, *mode)))
    Path(path).write_text("\n".join(lines) + "\n")


def import_basis(path, exterior_halo=None, n_exterior=256):
    """Read a table written by :func:`export_basis`."""
    rows = Path(path).read_text().split("\n")
    a, b, h, s, m = (float(v) for v in rows[0].split())
    n = int(round((b - a) / h)) - 1
    data = np.array([[float(v) for v in r.split()] for r in rows[1 : 1 + int(m)]])
    grid = Grid1D(a=a, b=b, n_interior=n, exterior_halo=exterior_halo, n_exterior=n_exterior)
    return SpectralBasis(lambdas=data[:, 0].copy(), modes=data[:, 1:].T.copy(), grid=grid, s=s)
