"""Per-mode temporal coefficients of the strongly damped fractional wave equation.

Each eigenvalue ``lam`` of the spatial operator yields the scalar equation

    w'' + lam w + delta lam w' = 0,

whose characteristic roots solve ``mu^2 + delta lam mu + lam = 0``.  The sign of the
discriminant ``D = delta^2 lam^2 - 4 lam`` splits modes into oscillatory, critical
and overdamped regimes.  ``A`` and ``B`` are the fundamental solutions with
``A(0) = 1, A'(0) = 0`` and ``B(0) = 0, B'(0) = 1``; the backward (dual) coefficients
are ``C = A`` and ``D = -B``.  Derivatives of every order are evaluated from closed
forms, never from the equation itself.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "Oscillatory",
    "Overdamped",
    "Critical",
    "DampingSpectrum",
    "BoundReport",
    "classify",
    "classify_one",
    "coeff_A",
    "coeff_B",
    "coeff_C",
    "coeff_D",
    "coeff_table",
    "dA",
    "dB",
    "d2B",
    "ode_residual",
    "case_bound",
    "bound_audit",
    "export_traces",
]


@dataclass(frozen=True)
class Oscillatory:
    """Complex pair ``alpha +- i beta`` with ``alpha = -delta lam / 2``."""

    alpha: float
    beta: float
    lam: float
    delta: float
    name = "oscillatory"

    @property
    def exponents(self):
        return (complex(self.alpha, self.beta), complex(self.alpha, -self.beta))


@dataclass(frozen=True)
class Overdamped:
    """Real roots ``lambda_minus <= lambda_plus < 0``."""

    lambda_plus: float
    lambda_minus: float
    lam: float
    delta: float
    name = "overdamped"

    @property
    def exponents(self):
        return (self.lambda_plus, self.lambda_minus)


@dataclass(frozen=True)
class Critical:
    """Double root ``-delta lam / 2``."""

    root: float
    lam: float
    delta: float
    name = "critical"

    @property
    def exponents(self):
        return (self.root, self.root)


@dataclass(frozen=True, eq=False)
class DampingSpectrum:
    """Regimes of all retained modes; ``n0`` counts the leading oscillatory block."""

    delta: float
    lambdas: np.ndarray
    regimes: tuple
    n0: int

    def __len__(self):
        return len(self.regimes)

    def __getitem__(self, i):
        return self.regimes[i]


def classify_one(delta, lam, tol=1e-12):
    """Regime of a single mode."""
    delta, lam = float(delta), float(lam)
    if delta < 0:
        raise DomainError(f"damping must be nonnegative, got {delta}")
    if not lam > 0:
        raise DomainError(f"eigenvalue must be positive, got {lam}")
    disc = delta * delta * lam * lam - 4.0 * lam
    if abs(disc) <= tol * lam * lam:
        return Critical(root=-0.5 * delta * lam, lam=lam, delta=delta)
    if disc < 0:
        return Oscillatory(alpha=-0.5 * delta * lam, beta=0.5 * math.sqrt(-disc), lam=lam, delta=delta)
    lm = -0.5 * (delta * lam + math.sqrt(disc))
    # product of the roots is lam; avoids cancellation in the small root
    return Overdamped(lambda_plus=lam / lm, lambda_minus=lm, lam=lam, delta=delta)


def classify(delta, lambdas, tol=1e-12):
    """Classify every mode by the sign of ``delta^2 lam^2 - 4 lam``.

    Parameters
    ----------
    delta : float
        Damping coefficient, ``delta >= 0``.
    lambdas : array_like
        Positive, ascending eigenvalues.
    tol : float
        Modes with ``|D| <= tol lam^2`` are treated as critical.

    Returns
    -------
    DampingSpectrum
    """
    lam = np.asarray(lambdas, dtype=float)
    if float(delta) < 0:
        raise DomainError(f"damping must be nonnegative, got {delta}")
    if np.any(lam <= 0) or np.any(np.diff(lam) < 0):
        raise DomainError("eigenvalues must be positive and ascending")
    regimes = tuple(classify_one(delta, l, tol) for l in lam)
    n0 = 0
    for r in regimes:
        if not isinstance(r, Oscillatory):
            break
        n0 += 1
    return DampingSpectrum(delta=float(delta), lambdas=lam, regimes=regimes, n0=n0)


def _osc(r, t, c, d, k):
    # e^{alpha t}(c cos + d sin), differentiated k times
    for _ in range(k):
        c, d = r.alpha * c + r.beta * d, r.alpha * d - r.beta * c
    bt = r.beta * t
    return np.exp(r.alpha * t) * (c * np.cos(bt) + d * np.sin(bt))


def _crit(r, t, c, d, k):
    # (c + d t) e^{r t}, differentiated k times
    for _ in range(k):
        c, d = r.root * c + d, r.root * d
    return (c + d * t) * np.exp(r.root * t)


def _divdiff(mm, mp, k):
    """``(mm^k - mp^k) / (mm - mp)`` without cancellation (both roots negative)."""
    return sum(mm**j * mp ** (k - 1 - j) for j in range(k))


def _od_B(r, t, k):
    mp, mm = r.lambda_plus, r.lambda_minus
    gap = mm - mp
    ep = np.exp(mp * t)
    if np.ndim(gap) == 0 and gap == 0.0:
        return _crit(Critical(mp, r.lam, r.delta), t, 0.0, 1.0, k)
    e1 = np.expm1(gap * t) / gap
    return ep * (mm**k * e1 + _divdiff(mm, mp, k))


def _od_A(r, t, k):
    mp, mm = r.lambda_plus, r.lambda_minus
    gap = mm - mp
    ep = np.exp(mp * t)
    if np.ndim(gap) == 0 and gap == 0.0:
        return _crit(Critical(mp, r.lam, r.delta), t, 1.0, -mp, k)
    e1 = np.expm1(gap * t) / gap
    if k == 0:
        return ep * (1.0 - mp * e1)
    return ep * (-mp * mm * _divdiff(mp, mm, k - 1) - mp * mm**k * e1)


def _eval(regime, t, which, k):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("coefficients are defined for t >= 0")
    if isinstance(regime, Oscillatory):
        c, d = (1.0, -regime.alpha / regime.beta) if which == "A" else (0.0, 1.0 / regime.beta)
        return _osc(regime, t, c, d, k)
    if isinstance(regime, Critical):
        c, d = (1.0, -regime.root) if which == "A" else (0.0, 1.0)
        return _crit(regime, t, c, d, k)
    return _od_A(regime, t, k) if which == "A" else _od_B(regime, t, k)


def coeff_A(regime, t, order=0):
    """``A_n`` (or its ``order``-th derivative) at times ``t >= 0``."""
    return _eval(regime, t, "A", int(order))


def coeff_B(regime, t, order=0):
    """``B_n`` (or its ``order``-th derivative) at times ``t >= 0``."""
    return _eval(regime, t, "B", int(order))


def dA(regime, t):
    return coeff_A(regime, t, 1)


def dB(regime, t):
    return coeff_B(regime, t, 1)


def d2B(regime, t):
    return coeff_B(regime, t, 2)


def coeff_C(regime, t, order=0):
    """Dual coefficient ``C_n = A_n``."""
    return coeff_A(regime, t, order)


def coeff_D(regime, t, order=0):
    """Dual coefficient ``D_n = -B_n``."""
    return -coeff_B(regime, t, order)


class _Group:
    """Array-valued stand-in for a regime, used to evaluate many modes at once."""

    def __init__(self, **kw):
        self.__dict__.update(kw)


def coeff_table(spectrum, t, which="B", order=0):
    """Values of ``which`` in {A, B, C, D} for all modes, shape ``(len(t), m)``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))[:, None]
    if np.any(t < 0):
        raise DomainError("coefficients are defined for t >= 0")
    base = "A" if which in ("A", "C") else "B"
    sign = -1.0 if which == "D" else 1.0
    out = np.empty((t.shape[0], len(spectrum)))
    groups = {Oscillatory: [], Overdamped: [], Critical: []}
    for i, r in enumerate(spectrum.regimes):
        groups[type(r)].append(i)
    k = int(order)
    if groups[Oscillatory]:
        idx = groups[Oscillatory]
        g = _Group(alpha=np.array([spectrum.regimes[i].alpha for i in idx]),
                   beta=np.array([spectrum.regimes[i].beta for i in idx]))
        c, d = (1.0, -g.alpha / g.beta) if base == "A" else (0.0, 1.0 / g.beta)
        out[:, idx] = _osc(g, t, c, d, k)
    if groups[Critical]:
        idx = groups[Critical]
        g = _Group(root=np.array([spectrum.regimes[i].root for i in idx]))
        c, d = (1.0, -g.root) if base == "A" else (0.0, 1.0)
        out[:, idx] = _crit(g, t, c, d, k)
    if groups[Overdamped]:
        idx = groups[Overdamped]
        g = _Group(lambda_plus=np.array([spectrum.regimes[i].lambda_plus for i in idx]),
                   lambda_minus=np.array([spectrum.regimes[i].lambda_minus for i in idx]))
        out[:, idx] = _od_A(g, t, k) if base == "A" else _od_B(g, t, k)
    return sign * out


_FUNCS = {"A": coeff_A, "B": coeff_B, "C": coeff_C, "D": coeff_D}


def ode_residual(regime, lam, delta, f, t_samples):
    """Normalized residual ``max |f'' + lam f + delta lam f'| / (lam max |f|)``.

    Parameters
    ----------
    regime : Oscillatory, Overdamped or Critical
    lam, delta : float
        Mode eigenvalue and damping; these are the equation's coefficients and are
        independent of the values stored in ``regime``.
    f : {"A", "B", "C", "D"}
    t_samples : array_like
    """
    fn = _FUNCS[f]
    t = np.asarray(t_samples, dtype=float)
    v0, v1, v2 = fn(regime, t, 0), fn(regime, t, 1), fn(regime, t, 2)
    res = np.abs(v2 + lam * v0 + delta * lam * v1)
    return float(res.max() / (lam * max(np.abs(v0).max(), 1e-300)))


def case_bound(spectrum, original=False):
    """Case-analysis bound on ``max_{n,t} |lam_n B_n(t)|`` (not squared).

    The oscillatory block is bounded by ``4 lam_{N0} / (4 - delta^2 lam_{N0})`` and the
    overdamped block by ``4 lam_{N0+1} / (delta^2 lam_{N0+1} - 4)`` (squared values);
    critical modes by ``2 / (delta e)``.  With ``original=True`` the overdamped
    block uses ``lam_1`` and ``delta`` in place of ``delta^2``, as in the original derivation,
    and the undamped case returns 1.  The undamped case actually gives
    ``|lam B| = lam^{1/2} |sin|``, so the corrected bound is ``lam_m^{1/2}`` and grows with m.
    """
    delta = spectrum.delta
    if delta == 0.0 and original:
        return 1.0
    sq = []
    osc = [r.lam for r in spectrum.regimes if isinstance(r, Oscillatory)]
    od = [r.lam for r in spectrum.regimes if isinstance(r, Overdamped)]
    if osc:
        l = max(osc)
        sq.append(4.0 * l / (4.0 - delta**2 * l))
    if od:
        if original:
            l = float(spectrum.lambdas[0])
            den = delta * l - 4.0
            sq.append(4.0 * l / den if den > 0 else math.inf)
        else:
            l = min(od)
            sq.append(4.0 * l / (delta**2 * l - 4.0))
    if any(isinstance(r, Critical) for r in spectrum.regimes):
        sq.append((2.0 / (delta * math.e)) ** 2)
    return math.sqrt(max(sq))


@dataclass(frozen=True, eq=False)
class BoundReport:
    """Empirical maxima over a sample lattice.

    ``families`` maps a family label to per-mode maxima over t; ``slopes`` holds the
    least-squares slope of those maxima against n for modes beyond ``n0``, and
    ``growing`` lists the families with positive slope.
    """

    delta: float
    n0: int
    lamB_max: float
    case_bound: float
    original_bound: float
    families: dict = field(default_factory=dict)
    slopes: dict = field(default_factory=dict)
    growing: tuple = ()

    @property
    def within_case_bound(self):
        return self.lamB_max <= self.case_bound * (1.0 + 1e-9)


def bound_audit(spectrum, lambdas=None, T=1.0, n_t=2001):
    """Audit the uniform coefficient bounds on the lattice ``n x linspace(0, T, n_t)``."""
    lam = spectrum.lambdas if lambdas is None else np.asarray(lambdas, dtype=float)
    t = np.linspace(0.0, T, int(n_t))
    fam = {k: np.empty(len(spectrum)) for k in
           ("|lam B|", "|C|", "|lam^1/2 C|", "|C'|", "|lam^1/2 D|", "|lam D|", "|D'|", "|lam^1/2 D'|")}
    for i, (r, l) in enumerate(zip(spectrum.regimes, lam)):
        C, Cp = coeff_C(r, t), coeff_C(r, t, 1)
        D, Dp = coeff_D(r, t), coeff_D(r, t, 1)
        rl = math.sqrt(l)
        fam["|lam B|"][i] = np.abs(l * D).max()
        fam["|C|"][i] = np.abs(C).max()
        fam["|lam^1/2 C|"][i] = rl * np.abs(C).max()
        fam["|C'|"][i] = np.abs(Cp).max()
        fam["|lam^1/2 D|"][i] = rl * np.abs(D).max()
        fam["|lam D|"][i] = l * np.abs(D).max()
        fam["|D'|"][i] = np.abs(Dp).max()
        fam["|lam^1/2 D'|"][i] = rl * np.abs(Dp).max()
    slopes = {}
    n = np.arange(1, len(spectrum) + 1)
    tail = n > spectrum.n0
    for k, v in fam.items():
        if k == "|lam B|" or tail.sum() < 2:
            continue
        slopes[k] = float(np.polyfit(n[tail], v[tail], 1)[0])
    # slopes below roundoff of the family's size count as flat
    growing = tuple(k for k, sl in slopes.items() if sl > 1e-8 * fam[k].max())
    return BoundReport(
        delta=spectrum.delta,
        n0=spectrum.n0,
        lamB_max=float(fam["|lam B|"].max()),
        case_bound=case_bound(spectrum),
        original_bound=case_bound(spectrum, original=True),
        families=fam,
        slopes=slopes,
        growing=growing,
    )


def export_traces(path, spectrum, t):
    """Write ``A, B, B', B''`` per mode as CSV: n, t, A, B, Bp, Bpp, regime."""
    t = np.asarray(t, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "t", "A", "B", "Bp", "Bpp", "regime"])
        for n, r in enumerate(spectrum.regimes, start=1):
            cols = (coeff_A(r, t), coeff_B(r, t), coeff_B(r, t, 1), coeff_B(r, t, 2))
            for j, tj in enumerate(t):
                w.writerow([n, f"{tj:.17g}", *(f"{c[j]:.17g}" for c in cols), r.name])
