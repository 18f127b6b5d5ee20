"""Series solutions of the forward, exterior-controlled and dual problems.

All states are held in modal coordinates with respect to a :class:`SpectralBasis`.
The controlled solution is written as the harmonic lift of the exterior datum plus
a correction vanishing outside the interval; with ``L_kn = (phi_n, U_{S_k})`` for a
control ``g = sum_k S_k(x) q_k(t)`` its modal coefficients are

    v_n(t) = sum_k L_kn [ q_k(t) - int_0^t q_k''(tau) B_n(t - tau) dtau ],

which is the original kernel ``(1/lam_n) B_n''`` form after two integrations by parts
(``p_n = -lam_n L_n q`` is the flux pairing).  Time integrals use adaptive
Gauss-Kronrod quadrature over all modes at once.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad_vec

from .errors import ContractError, DomainError
from .modal_dynamics import coeff_table
from .nonlocal_ops import ExteriorProfile, FluxVector, dirichlet_lift

__all__ = [
    "TimeProfile",
    "ExteriorControl",
    "StatePair",
    "energy",
    "solve_homogeneous",
    "control_pairings",
    "solve_controlled",
    "solve_controlled_direct",
    "controlled_derivative",
    "solve_full",
    "solve_dual",
    "dual_flux",
    "DissipativityReport",
    "dissipativity_audit",
    "RegularityReport",
    "regularity_audit",
    "export_state",
    "export_modal_traces",
]

_POWERS = {"poly4": 4, "poly6": 6}


@lru_cache(maxsize=64)
def _bump_poly(kind, order):
    k = _POWERS[kind]
    return Polynomial([1.0, 0.0, -1.0]) ** k if order == 0 else _bump_poly(kind, 0).deriv(order)


@dataclass(frozen=True)
class TimeProfile:
    """Smooth temporal bump ``amplitude (1 - z^2)^k`` on ``[t0, t1]``, zero elsewhere.

    ``kind`` is ``"poly4"`` (k = 4, three continuous derivatives) or ``"poly6"``
    (k = 6, five continuous derivatives).
    """

    kind: str = "poly4"
    t0: float = 0.25
    t1: float = 0.75
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind not in _POWERS:
            raise ContractError(f"unknown time profile kind {self.kind!r}")
        if not self.t1 > self.t0:
            raise ContractError("time profile needs t0 < t1")

    def __call__(self, t, order=0):
        t = np.asarray(t, dtype=float)
        half = 0.5 * (self.t1 - self.t0)
        z = (t - 0.5 * (self.t0 + self.t1)) / half
        val = _bump_poly(self.kind, order)(z) * self.amplitude / half**order
        return np.where((t > self.t0) & (t < self.t1), val, 0.0)

    @property
    def smoothness(self):
        return _POWERS[self.kind] - 1


@dataclass(frozen=True, eq=False)
class ExteriorControl:
    """Separable exterior control ``g(x, t) = sum_k S_k(x) q_k(t)`` on ``[0, T]``."""

    terms: tuple
    T: float

    def __post_init__(self):
        terms = tuple((S, q) for S, q in self.terms)
        object.__setattr__(self, "terms", terms)
        if not self.T > 0:
            raise ContractError("horizon T must be positive")
        if len({S.grid for S, _ in terms}) > 1:
            raise ContractError("all spatial profiles must share one grid")
        for S, q in terms:
            if not isinstance(S, ExteriorProfile) or not isinstance(q, TimeProfile):
                raise ContractError("terms must be (ExteriorProfile, TimeProfile) pairs")
            if not (0.0 < q.t0 and q.t1 < self.T):
                raise ContractError(
                    f"temporal support [{q.t0}, {q.t1}] is not strictly inside (0, {self.T})"
                )
            if q.smoothness < 2:
                raise ContractError("temporal profiles must be at least C^2")

    def trace(self, t):
        """Exterior datum ``g(., t)``."""
        if not self.terms:
            return None
        vals = sum(S.values * float(q(t)) for S, q in self.terms)
        return ExteriorProfile(vals, self.terms[0][0].grid)


@dataclass(frozen=True, eq=False)
class StatePair:
    """Modal coefficients of ``u`` and ``u_t`` at time ``t``."""

    u_coeffs: np.ndarray
    ut_coeffs: np.ndarray
    t: float
    exterior_trace: ExteriorProfile | None = None

    def __post_init__(self):
        u, ut = np.asarray(self.u_coeffs, dtype=float), np.asarray(self.ut_coeffs, dtype=float)
        if u.shape != ut.shape:
            raise DomainError("u and u_t coefficient vectors differ in length")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(ut))):
            raise DomainError("state has non-finite coefficients")
        object.__setattr__(self, "u_coeffs", u)
        object.__setattr__(self, "ut_coeffs", ut)

    def __add__(self, other):
        trace = self.exterior_trace if self.exterior_trace is not None else other.exterior_trace
        return StatePair(self.u_coeffs + other.u_coeffs, self.ut_coeffs + other.ut_coeffs, self.t, trace)


def energy(state, lambdas):
    """``||u||_{+s}^2 + ||u_t||_0^2`` in modal form."""
    lam = np.asarray(lambdas)[: state.u_coeffs.shape[0]]
    return float(np.sum(lam * state.u_coeffs**2 + state.ut_coeffs**2))


def _modal(v, spectrum, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (len(spectrum),):
        raise DomainError(f"{name} must have {len(spectrum)} modal coefficients, got shape {v.shape}")
    return v


def _check_time(t, T=None):
    t = float(t)
    if t < 0 or (T is not None and t > T * (1.0 + 1e-15)):
        raise DomainError(f"time {t} outside [0, {T}]")
    return t


def solve_homogeneous(u0, u1, spectrum, t):
    """Free evolution: ``u_n = A_n u0_n + B_n u1_n``."""
    u0, u1 = _modal(u0, spectrum, "u0"), _modal(u1, spectrum, "u1")
    t = _check_time(t)
    A, B = coeff_table(spectrum, t, "A")[0], coeff_table(spectrum, t, "B")[0]
    Ap, Bp = coeff_table(spectrum, t, "A", 1)[0], coeff_table(spectrum, t, "B", 1)[0]
    return StatePair(A * u0 + B * u1, Ap * u0 + Bp * u1, t)


def control_pairings(control, basis, system):
    """Matrix ``L[k, n] = (phi_n, U_{S_k})`` of lift projections, shape ``(K, m)``."""
    if not control.terms:
        return np.zeros((0, basis.m))
    U = np.column_stack([dirichlet_lift(S, system) for S, _ in control.terms])
    return (basis.modes.T @ (system.M @ U)).T


def _stiff_points(spectrum, t, lo, hi):
    # boundary layers of width 1/|rate| next to tau = t
    rates = sorted({abs(float(np.real(e))) for r in spectrum.regimes for e in r.exponents}, reverse=True)
    pts = []
    for rate in rates[:3]:
        if rate > 0:
            for mult in (1.0, 8.0):
                p = t - mult / rate
                if lo < p < hi:
                    pts.append(p)
    return sorted(set(pts))


@lru_cache(maxsize=16384)
def _convolution(profile, spectrum, t, j, kernel="B", korder=0):
    """``int_0^t q^{(j)}(tau) K^{(korder)}(t - tau) dtau`` for all modes (K in {A, B})."""
    lo, hi = profile.t0, min(profile.t1, t)
    m = len(spectrum)
    if hi <= lo:
        return np.zeros(m)
    qmax = float(np.abs(profile(np.linspace(lo, hi, 257), j)).max()) or 1.0

    def f(tau):
        return profile(tau, j) * coeff_table(spectrum, t - tau, kernel, korder)[0]

    val, _ = quad_vec(f, lo, hi, epsabs=1e-13 * qmax, epsrel=1e-12, norm="max", limit=2000,
                      points=_stiff_points(spectrum, t, lo, hi) or None)
    return val


def controlled_derivative(control, L, spectrum, t, order=0):
    """Modal coefficients of ``d^order v / dt^order`` at ``t``."""
    t = _check_time(t, control.T)
    out = np.zeros(len(spectrum))
    for k, (_, q) in enumerate(control.terms):
        out += L[k] * (float(q(t, order)) - _convolution(q, spectrum, t, order + 2))
    return out


def solve_controlled(control, basis, system, spectrum, t, L=None):
    """State of the exterior-controlled problem with zero initial data.

    Parameters
    ----------
    control : ExteriorControl
    basis : SpectralBasis
    system : StiffnessSystem
    spectrum : DampingSpectrum
    t : float
    L : ndarray, optional
        Precomputed :func:`control_pairings`.

    Returns
    -------
    StatePair
        Modal coefficients of ``u`` (harmonic lift included) and ``u_t``; the
        exterior trace is ``g(., t)``.
    """
    L = control_pairings(control, basis, system) if L is None else L
    u = controlled_derivative(control, L, spectrum, t, 0)
    ut = controlled_derivative(control, L, spectrum, t, 1)
    return StatePair(u, ut, float(t), control.trace(t))


def solve_controlled_direct(control, L, spectrum, t):
    """Direct quadrature of ``int_0^t p_n(tau) / lam_n B_n''(t - tau) dtau``.

    Used to cross-validate :func:`solve_controlled`; ``p_n / lam_n = -L_n q``.
    """
    t = _check_time(t, control.T)
    out = np.zeros(len(spectrum))
    for k, (_, q) in enumerate(control.terms):
        out -= L[k] * _convolution(q, spectrum, t, 0, "B", 2)
    return out


def solve_full(u0, u1, control, basis, system, spectrum, t, L=None):
    """Superposition of free evolution and the controlled response."""
    free = solve_homogeneous(u0, u1, spectrum, t)
    if control is None or not control.terms:
        return free
    return free + solve_controlled(control, basis, system, spectrum, t, L)


def solve_dual(psi0, psi1, spectrum, t, T):
    """Backward dual state ``psi_n(t) = C_n(T - t) psi0_n + D_n(T - t) psi1_n``.

    The time derivative carries the inner sign: ``psi_t = -C'(T-t) psi0 - D'(T-t) psi1``,
    so that ``psi_t(T) = psi1``.
    """
    psi0, psi1 = _modal(psi0, spectrum, "psi0"), _modal(psi1, spectrum, "psi1")
    t = _check_time(t, T)
    sigma = max(T - t, 0.0)
    C, D = coeff_table(spectrum, sigma, "C")[0], coeff_table(spectrum, sigma, "D")[0]
    Cp, Dp = coeff_table(spectrum, sigma, "C", 1)[0], coeff_table(spectrum, sigma, "D", 1)[0]
    return StatePair(C * psi0 + D * psi1, -(Cp * psi0 + Dp * psi1), t)


def dual_flux(psi0, psi1, spectrum, t, T, table, x=None):
    """``N_s psi(., t)`` from a table ``T[j, n] = N_s phi_n(x_j)``."""
    state = solve_dual(psi0, psi1, spectrum, t, T)
    table = np.asarray(table)
    x = np.arange(table.shape[0], dtype=float) if x is None else np.asarray(x)
    return FluxVector(values=table[:, : len(spectrum)] @ state.u_coeffs, x=x)


@dataclass(frozen=True)
class DissipativityReport:
    delta: float
    trials: int
    max_ratio: float
    n_violations: int

    @property
    def dissipative(self):
        return self.n_violations == 0


def dissipativity_audit(system, delta, trials=1000, seed=0, tol=1e-10):
    """Check ``<B U, U>_H <= tol ||U||_H^2`` on random discrete pairs.

    ``H`` carries ``(u1, v1)_{L2} + F(u1, v1) + (u2, v2)_{L2}``, i.e. the block matrix
    ``diag(M + K, M)``, and ``B = -A - I`` with ``A = [[0, -I], [L, delta L]]``,
    ``L = M^{-1} K``.
    """
    if delta < 0:
        raise DomainError("damping must be nonnegative")
    K, M = system.K, system.M
    n = K.shape[0]
    Lop = np.linalg.solve(M, K)
    eye = np.eye(n)
    A = np.block([[np.zeros((n, n)), -eye], [Lop, delta * Lop]])
    Bop = -A - np.eye(2 * n)
    H = np.block([[M + K, np.zeros((n, n))], [np.zeros((n, n)), M]])
    HB = H @ Bop
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((2 * n, int(trials)))
    num = np.einsum("ij,ij->j", U, HB @ U)
    den = np.einsum("ij,ij->j", U, H @ U)
    ratio = num / den
    return DissipativityReport(float(delta), int(trials), float(ratio.max()), int(np.sum(ratio > tol)))


@dataclass(frozen=True, eq=False)
class RegularityReport:
    order: int
    mode_counts: tuple
    ratios: tuple
    flagged: bool


def regularity_audit(control, basis, system, spectrum, order=0, n_t=41, mode_counts=None):
    """Empirical ratio of ``||d^m v(t)||`` to the control-side norms over a t-lattice.

    The left side is the modal L2 norm of the first ``k`` modes for each ``k`` in
    ``mode_counts``; the right side is ``sup_t ||d^{m+2} g||_{L2} + ||d^m g(t)||_{L2}``
    over the exterior cells.  The report is flagged when the ratio still grows by more
    than 5% between the two largest mode counts.
    """
    if order not in (0, 1, 2):
        raise DomainError("regularity audit supports derivative orders 0..2")
    m = len(spectrum)
    counts = tuple(mode_counts or sorted({max(1, m // 4), max(1, m // 2), m}))
    t = np.linspace(0.0, control.T, int(n_t))
    if not control.terms:
        return RegularityReport(order, counts, tuple(0.0 for _ in counts), False)
    L = control_pairings(control, basis, system)
    h_ext = control.terms[0][0].grid.h_ext

    def gnorm(tt, j):
        vals = sum(S.values * float(q(tt, j)) for S, q in control.terms)
        return float(np.sqrt(h_ext * np.sum(vals**2)))

    sup_high = max(gnorm(tt, order + 2) for tt in t)
    ratios = []
    for k in counts:
        best = 0.0
        for tt in t:
            lhs = np.linalg.norm(controlled_derivative(control, L, spectrum, tt, order)[:k])
            rhs = sup_high + gnorm(tt, order)
            if rhs > 0:
                best = max(best, lhs / rhs)
        ratios.append(best)
    flagged = len(ratios) > 1 and ratios[-1] > 1.05 * ratios[-2]
    return RegularityReport(order, counts, tuple(ratios), bool(flagged))


def export_state(path, state, basis):
    """Write nodal values as CSV: t, x, u, ut."""
    x = basis.grid.nodes
    u = basis.synthesize(state.u_coeffs)
    ut = basis.synthesize(state.ut_coeffs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "u", "ut"])
        for xi, ui, vi in zip(x, u, ut):
            w.writerow([f"{state.t:.17g}", f"{xi:.17g}", f"{ui:.17g}", f"{vi:.17g}"])


def export_modal_traces(path, states):
    """Write modal coefficients of a sequence of states as CSV: t, n, u_n, ut_n."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "n", "u_n", "ut_n"])
        for st in states:
            for n, (a, b) in enumerate(zip(st.u_coeffs, st.ut_coeffs), start=1):
                w.writerow([f"{st.t:.17g}", n, f"{a:.17g}", f"{b:.17g}"])
