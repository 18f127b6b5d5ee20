"""Controllability experiments: duality, approximate control, moments, unique continuation.

All experiments work in modal coordinates.  A control ansatz is a finite family of
separable exterior controls ``1_{cells}(x) q_j(t)``; its image under the
input-to-final-state map is assembled column by column from the Duhamel solver.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.integrate import quad_vec

from .errors import DomainError, RegularizationRequiredError
from .evolution import (
    ExteriorControl,
    StatePair,
    TimeProfile,
    _convolution,
    control_pairings,
    solve_dual,
    solve_full,
)
from .modal_dynamics import Critical, Oscillatory, Overdamped, coeff_table
from .nonlocal_ops import ExteriorProfile, dirichlet_lift

__all__ = [
    "ControlAnsatz",
    "bump_family",
    "MomentSystem",
    "duality_residual",
    "reachability_map",
    "metric_weights",
    "approximate_control",
    "moment_matrix",
    "F_transform",
    "SpectralDiagnostic",
    "spectral_control_diagnostic",
    "DualExponentials",
    "dual_exponential_coeffs",
    "dual_from_exponentials",
    "UCReport",
    "unique_continuation_test",
    "write_report",
    "export_sigma_min",
    "export_control_error",
]


def bump_family(T, count, kind="poly6", overlap=3.0):
    """``count`` overlapping bumps with centres evenly spaced in ``(0, T)``.

    Each bump spans ``overlap`` centre spacings and is clipped to
    ``[1e-3 T, (1 - 1e-3) T]`` so that its support stays strictly inside ``(0, T)``.
    """
    if count < 1 or not T > 0:
        raise DomainError("bump_family needs count >= 1 and T > 0")
    c = np.linspace(0.0, T, count + 2)[1:-1]
    w = overlap * (c[1] - c[0]) if count > 1 else 0.5 * T
    return [TimeProfile(kind, max(ci - 0.5 * w, 1e-3 * T), min(ci + 0.5 * w, T * (1 - 1e-3))) for ci in c]


@dataclass(frozen=True, eq=False)
class ControlAnsatz:
    """Finite control family ``{1_{B_i}(x) q_j(t)}`` with blocks ``B_i`` of exterior cells.

    Parameters
    ----------
    spatial_cells : tuple of ndarray
        Each entry lists the exterior cell indices of one spatial block.
    temporal_basis : tuple of TimeProfile
    grid : Grid1D
    T : float
    coefficients : ndarray, optional
        Amplitudes, shape ``(len(spatial_cells), len(temporal_basis))``.
    """

    spatial_cells: tuple
    temporal_basis: tuple
    grid: object
    T: float
    coefficients: np.ndarray | None = None

    def __post_init__(self):
        cells = tuple(np.asarray(c, dtype=int) for c in self.spatial_cells)
        object.__setattr__(self, "spatial_cells", cells)
        object.__setattr__(self, "temporal_basis", tuple(self.temporal_basis))
        for c in cells:
            if c.size == 0 or c.min() < 0 or c.max() >= self.grid.n_cells:
                raise DomainError("spatial block must list valid exterior cells")
        if cells:
            # validates the temporal support against the horizon
            ExteriorControl(tuple((self.profile(0), q) for q in self.temporal_basis), self.T)

    @classmethod
    def on_interval(cls, grid, lo, hi, n_blocks, temporal_basis, T):
        """Split the exterior cells with midpoints in ``[lo, hi]`` into ``n_blocks`` blocks."""
        x = grid.exterior_nodes
        idx = np.flatnonzero((x >= lo) & (x <= hi))
        if idx.size < n_blocks:
            raise DomainError("observation interval holds fewer cells than requested blocks")
        blocks = tuple(b for b in np.array_split(idx, n_blocks))
        return cls(blocks, tuple(temporal_basis), grid, T)

    @property
    def size(self):
        return len(self.spatial_cells) * len(self.temporal_basis)

    def profile(self, i):
        v = np.zeros(self.grid.n_cells)
        v[self.spatial_cells[i]] = 1.0
        return ExteriorProfile(v, self.grid)

    def elements(self):
        """Column order: spatial block major, temporal profile minor."""
        return [(i, j) for i in range(len(self.spatial_cells)) for j in range(len(self.temporal_basis))]

    def with_coefficients(self, coeffs):
        c = np.asarray(coeffs, dtype=float).reshape(len(self.spatial_cells), len(self.temporal_basis))
        return ControlAnsatz(self.spatial_cells, self.temporal_basis, self.grid, self.T, c)

    def to_control(self):
        """Expand into an :class:`ExteriorControl` (requires coefficients)."""
        if self.coefficients is None:
            raise DomainError("ansatz has no coefficients")
        terms = []
        for i, j in self.elements():
            a = self.coefficients[i, j]
            if a != 0.0:
                q = self.temporal_basis[j]
                terms.append((self.profile(i), TimeProfile(q.kind, q.t0, q.t1, q.amplitude * a)))
        return ExteriorControl(tuple(terms), self.T)


def duality_residual(u0, u1, control, psi0, psi1, basis, system, spectrum, L=None):
    """Relative gap in the forward/dual identity over ``[0, T]``.

    Left side: ``sum_n [-u_t psi + u psi_t - delta lam u psi]`` evaluated between 0 and
    T from the forward and dual solvers.  Right side: ``int_0^T sum_n (p_n + delta p_n')
    psi_n dt`` with ``p_n = -lam_n sum_k L_kn q_k``; ``q + delta q'`` is analytic.
    """
    T = control.T
    lam = spectrum.lambdas
    delta = spectrum.delta
    L = control_pairings(control, basis, system) if L is None else L

    def bracket(t):
        u = solve_full(u0, u1, control, basis, system, spectrum, t, L)
        psi = solve_dual(psi0, psi1, spectrum, t, T)
        return np.sum(-u.ut_coeffs * psi.u_coeffs + u.u_coeffs * psi.ut_coeffs
                      - delta * lam * u.u_coeffs * psi.u_coeffs)

    lhs = bracket(T) - bracket(0.0)
    rhs = 0.0
    psi0, psi1 = np.asarray(psi0, dtype=float), np.asarray(psi1, dtype=float)
    for k, (_, q) in enumerate(control.terms):
        # psi_n(tau) = A_n(T - tau) psi0_n - B_n(T - tau) psi1_n
        ia = _convolution(q, spectrum, T, 0, "A") + delta * _convolution(q, spectrum, T, 1, "A")
        ib = _convolution(q, spectrum, T, 0, "B") + delta * _convolution(q, spectrum, T, 1, "B")
        rhs += np.sum(-lam * L[k] * (ia * psi0 - ib * psi1))
    scale = max(abs(lhs), abs(rhs))
    return 0.0 if scale == 0.0 else float(abs(lhs - rhs) / scale)


def metric_weights(lambdas):
    """Row weights realizing ``L2 x W^{-s,2}``: ones for u-rows, ``lam^{-1/2}`` for u_t-rows."""
    lam = np.asarray(lambdas, dtype=float)
    return np.concatenate([np.ones_like(lam), lam**-0.5])


def reachability_map(ansatz, basis, system, spectrum, weighted=True):
    """Matrix whose columns are ``(u_n(T), u_n'(T))`` for each ansatz element.

    Rows are weighted for the ``L2 x W^{-s,2}`` metric unless ``weighted=False``.
    """
    m = len(spectrum)
    if ansatz.size == 0:
        return np.zeros((2 * m, 0))
    T = ansatz.T
    lifts = np.column_stack([dirichlet_lift(ansatz.profile(i), system) for i in range(len(ansatz.spatial_cells))])
    L = (basis.modes[:, :m].T @ (system.M @ lifts)).T
    cols = []
    for i, j in ansatz.elements():
        q = ansatz.temporal_basis[j]
        u = L[i] * (float(q(T)) - _convolution(q, spectrum, T, 2))
        ut = L[i] * (float(q(T, 1)) - _convolution(q, spectrum, T, 3))
        cols.append(np.concatenate([u, ut]))
    R = np.column_stack(cols)
    return R * metric_weights(spectrum.lambdas)[:, None] if weighted else R


def approximate_control(target, ansatz, basis, system, spectrum, eps_reg, R=None):
    """Tikhonov-regularized least-squares steering to ``target`` at time T.

    Minimizes ``||R c - b||^2 + eps_reg ||c||^2`` in the weighted metric through an
    orthogonal factorization of the augmented matrix ``[R; sqrt(eps_reg) I]``.

    Returns
    -------
    (ControlAnsatz, float)
        Ansatz with solved coefficients and the achieved error
        ``||u(T) - u0~||_0 + ||u_t(T) - u1~||_{-s}``.
    """
    if eps_reg < 0:
        raise DomainError("eps_reg must be nonnegative")
    if ansatz.size == 0:
        raise DomainError("ansatz is empty")
    R = reachability_map(ansatz, basis, system, spectrum) if R is None else R
    m = len(spectrum)
    w = metric_weights(spectrum.lambdas)
    b = np.concatenate([target.u_coeffs[:m], target.ut_coeffs[:m]]) * w
    if not np.all(np.isfinite(b)):
        raise DomainError("target must be finite")
    ncol = R.shape[1]
    if eps_reg == 0.0:
        if np.linalg.matrix_rank(R) < ncol:
            raise RegularizationRequiredError("reachability matrix is rank deficient; set eps_reg > 0")
        A, rhs = R, b
    else:
        A = np.vstack([R, np.sqrt(eps_reg) * np.eye(ncol)])
        rhs = np.concatenate([b, np.zeros(ncol)])
    c, *_ = la.lstsq(A, rhs, lapack_driver="gelsd")
    r = R @ c - b
    err = float(np.linalg.norm(r[:m]) + np.linalg.norm(r[m:]))
    return ansatz.with_coefficients(c), err


@dataclass(frozen=True, eq=False)
class MomentSystem:
    """Moment equations in real form.

    Row ``2k`` and ``2k+1`` belong to the k-th exponent pair: real and imaginary parts
    of the complex exponent for oscillatory modes, the two real exponents for
    overdamped modes, or the root and its confluent partner for critical modes.
    Entries are scaled by ``exp(mu T)`` (i.e. the dual trajectory
    ``e^{mu (T - t)} phi_n``); ``log_scale`` holds ``Re(mu) T`` per row to recover the
    unscaled form.
    """

    exponents: np.ndarray
    observation_rows: np.ndarray
    rhs: np.ndarray
    log_scale: np.ndarray
    modes: np.ndarray

    def equilibrated(self, k=None):
        """Rows of the first ``k`` pairs scaled to unit Euclidean norm."""
        rows = self.observation_rows if k is None else self.observation_rows[: 2 * k]
        nrm = np.linalg.norm(rows, axis=1)
        nrm[nrm == 0] = 1.0
        return rows / nrm[:, None]


def _time_moments(profiles, mus, T, delta, confluent):
    """``int (q + delta q') w(t) dt`` with ``w = e^{mu (T-t)}`` (or ``(T-t) e^{mu (T-t)}``)."""
    mus = np.asarray(mus, dtype=complex)
    conf = np.asarray(confluent, dtype=bool)
    out = np.empty((mus.size, len(profiles)), dtype=complex)
    for j, q in enumerate(profiles):
        def f(t, q=q):
            w = np.exp(mus * (T - t))
            w = np.where(conf, (T - t) * w, w)
            v = (float(q(t)) + delta * float(q(t, 1))) * w
            return np.concatenate([v.real, v.imag])

        val, _ = quad_vec(f, q.t0, q.t1, epsabs=1e-14, epsrel=1e-12, norm="max", limit=2000)
        out[:, j] = val[: mus.size] + 1j * val[mus.size :]
    return out


def moment_matrix(spectrum, pairings, temporal_basis, T, M_modes, u0=None, u1=None):
    """Moment system for the first ``M_modes`` modes.

    Parameters
    ----------
    spectrum : DampingSpectrum
    pairings : ndarray, shape (B, m)
        Exterior flux pairings ``int S_b N_s phi_n`` of the spatial blocks.
    temporal_basis : sequence of TimeProfile
    T : float
    M_modes : int
    u0, u1 : array_like, optional
        Initial data for the right-hand side (zero by default).

    Returns
    -------
    MomentSystem
        Columns follow the ansatz order (block major, profile minor).
    """
    M_modes = int(M_modes)
    if not 1 <= M_modes <= len(spectrum):
        raise DomainError(f"M_modes must lie in 1..{len(spectrum)}")
    P = np.atleast_2d(np.asarray(pairings, dtype=float))
    delta = spectrum.delta
    u0 = np.zeros(M_modes) if u0 is None else np.asarray(u0, dtype=float)[:M_modes]
    u1 = np.zeros(M_modes) if u1 is None else np.asarray(u1, dtype=float)[:M_modes]
    mus, conf, modes = [], [], []
    for n, r in enumerate(spectrum.regimes[:M_modes]):
        if isinstance(r, Oscillatory):
            mus += [complex(r.alpha, r.beta)]
            conf += [False]
        elif isinstance(r, Overdamped):
            mus += [r.lambda_plus, r.lambda_minus]
            conf += [False, False]
        else:
            mus += [r.root, r.root]
            conf += [False, True]
        modes.append(n)
    mus = np.asarray(mus, dtype=complex)
    E = _time_moments(temporal_basis, mus, T, delta, conf)
    rows, rhs, logs, exps = [], [], [], []
    pos = 0
    lam = spectrum.lambdas
    for n, r in zip(modes, spectrum.regimes[:M_modes]):
        spatial = P[:, n]
        osc = isinstance(r, Oscillatory)
        count = 1 if osc else 2
        for c in range(count):
            mu, cf = mus[pos], conf[pos]
            row = np.kron(spatial, E[pos])
            if cf:
                # dual trajectory (T - t) e^{mu (T - t)}: psi(0) = T e^{mu T}, psi_t(0) = -(1 + mu T) e^{mu T}
                val = np.exp(mu * T) * (T * u1[n] + (1.0 + mu * T) * u0[n] + delta * lam[n] * T * u0[n])
            else:
                val = np.exp(mu * T) * (u1[n] + mu * u0[n] + delta * lam[n] * u0[n])
            if osc:
                rows += [row.real, row.imag]
                rhs += [val.real, val.imag]
                logs += [mu.real * T] * 2
                exps += [mu, np.conj(mu)]
            else:
                rows.append(row.real)
                rhs.append(val.real)
                logs.append(mu.real * T)
                exps.append(mu)
            pos += 1
    return MomentSystem(
        exponents=np.asarray(exps),
        observation_rows=np.asarray(rows),
        rhs=np.asarray(rhs),
        log_scale=np.asarray(logs),
        modes=np.repeat(np.asarray(modes), 2),
    )


def F_transform(z, q, pairing, delta, T):
    """``F(z) = int_0^T pairing (q + delta q') e^{i z t} dt`` by adaptive quadrature."""
    z = complex(z)

    def f(t):
        v = pairing * (float(q(t)) + delta * float(q(t, 1))) * np.exp(1j * z * t)
        return np.array([v.real, v.imag])

    val, _ = quad_vec(f, q.t0, q.t1, epsabs=1e-15, epsrel=1e-13, norm="max", limit=2000)
    return complex(val[0], val[1])


@dataclass(frozen=True, eq=False)
class SpectralDiagnostic:
    delta: float
    T: float
    k: np.ndarray
    sigma_min: np.ndarray
    contrast: "SpectralDiagnostic | None" = None

    def decay_orders(self, k_lo, k_hi):
        """``log10(sigma_min(k_lo) / sigma_min(k_hi))``."""
        s = dict(zip(self.k.tolist(), self.sigma_min))
        return float(np.log10(s[k_lo] / s[k_hi]))


def spectral_control_diagnostic(delta, T, M_modes, ansatz, basis, system, contrast=True, tol=1e-12):
    """Smallest singular values of the row-equilibrated moment matrix for k = 1..M_modes pairs.

    With ``contrast=True`` the same computation is repeated at ``delta = 0``.
    """
    from .modal_dynamics import classify

    spectrum = classify(delta, basis.lambdas, tol)
    lifts = np.column_stack([dirichlet_lift(ansatz.profile(i), system) for i in range(len(ansatz.spatial_cells))])
    P = -(basis.lambdas[None, :] * (basis.modes.T @ (system.M @ lifts)).T)
    ms = moment_matrix(spectrum, P, ansatz.temporal_basis, T, M_modes)
    ks, sig = [], []
    for k in range(1, M_modes + 1):
        rows = ms.equilibrated(k)
        sig.append(la.svdvals(rows).min() if rows.shape[0] <= rows.shape[1] else 0.0)
        ks.append(k)
    other = None
    if contrast and delta != 0.0:
        other = spectral_control_diagnostic(0.0, T, M_modes, ansatz, basis, system, contrast=False, tol=tol)
    return SpectralDiagnostic(float(delta), float(T), np.asarray(ks), np.asarray(sig), other)


@dataclass(frozen=True, eq=False)
class DualExponentials:
    """Exponential representation ``psi_n(t) = c_plus e^{mu_plus (T-t)} + c_minus e^{mu_minus (T-t)}``.

    Critical modes use ``(c_plus + c_minus (T - t)) e^{mu (T - t)}`` and are listed in
    ``confluent``.
    """

    c_plus: np.ndarray
    c_minus: np.ndarray
    mu_plus: np.ndarray
    mu_minus: np.ndarray
    confluent: np.ndarray


def dual_exponential_coeffs(psi0, psi1, spectrum):
    """Per-mode coefficients of the dual state on the exponentials of each mode.

    Oscillatory modes use ``a~ = (1 - i alpha/beta) psi0 / 2 - i psi1 / (2 beta)`` on
    ``e^{(alpha - i beta)(T-t)}`` and its conjugate ``b~`` on ``e^{(alpha + i beta)(T-t)}``;
    overdamped modes use ``a = (lam^- psi0 + psi1) / (lam^- - lam^+)`` on ``e^{lam^+ (T-t)}``
    and ``b = -(lam^+ psi0 + psi1) / (lam^- - lam^+)`` on ``e^{lam^- (T-t)}``.
    """
    psi0, psi1 = np.asarray(psi0, dtype=float), np.asarray(psi1, dtype=float)
    m = len(spectrum)
    cp, cm = np.zeros(m, dtype=complex), np.zeros(m, dtype=complex)
    mp, mm = np.zeros(m, dtype=complex), np.zeros(m, dtype=complex)
    conf = np.zeros(m, dtype=bool)
    for n, r in enumerate(spectrum.regimes):
        p0, p1 = psi0[n], psi1[n]
        if isinstance(r, Oscillatory):
            ratio = r.alpha / r.beta
            a_t = 0.5 * ((1 - 1j * ratio) * p0 - 1j / r.beta * p1)
            b_t = 0.5 * ((1 + 1j * ratio) * p0 + 1j / r.beta * p1)
            cp[n], cm[n] = b_t, a_t
            mp[n], mm[n] = complex(r.alpha, r.beta), complex(r.alpha, -r.beta)
        elif isinstance(r, Overdamped):
            gap = r.lambda_minus - r.lambda_plus
            cp[n] = (r.lambda_minus * p0 + p1) / gap
            cm[n] = -(r.lambda_plus * p0 + p1) / gap
            mp[n], mm[n] = r.lambda_plus, r.lambda_minus
        else:
            cp[n], cm[n] = p0, -r.root * p0 - p1
            mp[n] = mm[n] = r.root
            conf[n] = True
    return DualExponentials(cp, cm, mp, mm, conf)


def dual_from_exponentials(rep, t, T):
    """Evaluate the exponential representation at time ``t`` (modal coefficients)."""
    sigma = T - float(t)
    val = np.where(
        rep.confluent,
        (rep.c_plus + rep.c_minus * sigma) * np.exp(rep.mu_plus * sigma),
        rep.c_plus * np.exp(rep.mu_plus * sigma) + rep.c_minus * np.exp(rep.mu_minus * sigma),
    )
    return val.real


@dataclass(frozen=True, eq=False)
class UCReport:
    M_modes: int
    n_nodes: int
    sigma_min: float
    trace: float
    holds: bool
    eigenvalues: np.ndarray = field(repr=False, default=None)


def unique_continuation_test(x_obs, table, weights, M_modes, tol=1e-10, grid=None):
    """Gram-rank test of the exterior fluxes ``N_s phi_n`` on an observation set.

    Parameters
    ----------
    x_obs : ndarray
        Observation nodes (must lie outside the closed interval when ``grid`` given).
    table : ndarray, shape (len(x_obs), >= M_modes)
        ``N_s phi_n(x_obs)``.
    weights : ndarray
        Quadrature weights of the nodes.
    M_modes : int
    tol : float
        Verdict threshold relative to ``trace(G) / M_modes``.
    """
    x_obs = np.asarray(x_obs, dtype=float)
    if x_obs.size == 0:
        raise DomainError("observation set is empty")
    if grid is not None and np.any((x_obs >= grid.a) & (x_obs <= grid.b)):
        raise DomainError("observation set intersects the closed interval")
    F = np.asarray(table)[:, :M_modes]
    w = np.asarray(weights, dtype=float)
    # eigenvalues of G = F^T W F as squared singular values of W^{1/2} F (better accuracy)
    sv = la.svdvals(np.sqrt(w)[:, None] * F)
    ev = np.sort(np.concatenate([sv**2, np.zeros(max(0, M_modes - sv.size))]))
    smin = float(ev[0])
    tr = float(np.sum(w[:, None] * F**2))
    return UCReport(int(M_modes), int(x_obs.size), smin, tr, bool(smin > tol * tr / M_modes), ev)


def write_report(path, items):
    """Write ``key: value`` lines."""
    with open(path, "w") as fh:
        for k, v in items.items():
            fh.write(f"{k}: {_fmt(v)}\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{v:.17g}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def export_sigma_min(path, diagnostics):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "sigma_min", "delta"])
        for d in diagnostics:
            for k, s in zip(d.k, d.sigma_min):
                w.writerow([int(k), f"{s:.17g}", f"{d.delta:.17g}"])


def export_control_error(path, rows):
    """``rows`` of ``(ansatz_size, eps_reg, error)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ansatz_size", "eps_reg", "error"])
        for size, eps, err in rows:
            w.writerow([int(size), f"{eps:.17g}", f"{err:.17g}"])
