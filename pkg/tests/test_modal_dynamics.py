import csv

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracwave.errors import DomainError
from fracwave.modal_dynamics import (
    Critical,
    Oscillatory,
    Overdamped,
    bound_audit,
    case_bound,
    classify,
    classify_one,
    coeff_A,
    coeff_B,
    coeff_C,
    coeff_D,
    coeff_table,
    export_traces,
    ode_residual,
)

T200 = np.linspace(0.0, 5.0, 200)


def mp_B(lam, delta, t):
    """``B`` from the characteristic roots in 50-digit arithmetic."""
    mp.mp.dps = 50
    lam, delta, t = mp.mpf(lam), mp.mpf(delta), mp.mpf(t)
    disc = mp.sqrt(mp.mpc(delta**2 * lam**2 - 4 * lam))
    r1, r2 = (-delta * lam + disc) / 2, (-delta * lam - disc) / 2
    return mp.re((mp.exp(r1 * t) - mp.exp(r2 * t)) / (r1 - r2))


def test_classification_regimes():
    assert isinstance(classify_one(1.0, 1.0), Oscillatory)
    assert isinstance(classify_one(1.0, 4.0), Critical)
    assert isinstance(classify_one(1.0, 8.0), Overdamped)
    sp = classify(1.0, [1.0, 2.0, 4.0, 9.0])
    assert sp.n0 == 2
    with pytest.raises(DomainError):
        classify(-0.1, [1.0])
    with pytest.raises(DomainError):
        classify(0.1, [2.0, 1.0])


def test_B_against_high_precision():
    r = classify_one(1.0, 8.0)
    assert float(coeff_B(r, 1.0)) == pytest.approx(float(mp_B(8, 1, 1)), rel=1e-13)
    assert float(coeff_B(r, 1.0)) == pytest.approx(0.0545880, abs=5e-8)
    for lam, delta, t in [(2.0, 0.3, 0.7), (50.0, 1.0, 0.2), (1e4, 0.5, 3.0)]:
        r = classify_one(delta, lam)
        assert float(coeff_B(r, t)) == pytest.approx(float(mp_B(lam, delta, t)), rel=1e-11)


@pytest.mark.parametrize("lam,delta", [(3.0, 0.0), (3.0, 0.5), (4.0, 1.0), (8.0, 1.0), (1e3, 1.0), (1e5, 0.5)])
@pytest.mark.parametrize("f", "ABCD")
def test_ode_residual_all_regimes(lam, delta, f):
    r = classify_one(delta, lam)
    assert ode_residual(r, lam, delta, f, T200) <= 1e-10


@pytest.mark.parametrize("lam,delta", [(3.0, 0.5), (4.0, 1.0), (8.0, 1.0)])
def test_initial_values(lam, delta):
    r = classify_one(delta, lam)
    vals = [float(fn(r, 0.0, k)) for fn in (coeff_A, coeff_B) for k in (0, 1)]
    assert vals == pytest.approx([1.0, 0.0, 0.0, 1.0], abs=1e-14)
    assert float(coeff_C(r, 0.3)) == float(coeff_A(r, 0.3))
    assert float(coeff_D(r, 0.3)) == -float(coeff_B(r, 0.3))


def test_overdamped_root_limits():
    for delta in (0.5, 1.0, 2.0):
        r = classify_one(delta, 1e9)
        assert r.lambda_plus == pytest.approx(-1.0 / delta, rel=1e-8)
        assert r.lambda_minus == pytest.approx(-delta * 1e9, rel=1e-8)


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_critical_continuity(sign):
    delta = 1.0
    # |delta^2 lam^2 - 4 lam| = 1e-6 lam^2 on either side of the critical value
    lam = 4.0 / (delta**2 - sign * 1e-6)
    near = classify_one(delta, lam, tol=1e-12)
    crit = classify_one(delta, lam, tol=1e-3)
    assert isinstance(crit, Critical) and not isinstance(near, Critical)
    t = np.linspace(0.0, 4.0, 50)
    for fn in (coeff_A, coeff_B):
        for k in (0, 1, 2):
            assert np.abs(fn(near, t, k) - fn(crit, t, k)).max() <= 1e-4


@given(st.floats(0.05, 3.0), st.floats(0.1, 1e4), st.floats(0.0, 10.0))
@settings(max_examples=100, deadline=None)
def test_table_matches_scalar(delta, lam, t):
    sp = classify(delta, [lam])
    for which in "ABCD":
        for k in (0, 1, 2):
            scalar = {"A": coeff_A, "B": coeff_B, "C": coeff_C, "D": coeff_D}[which](sp[0], t, k)
            assert coeff_table(sp, t, which, k)[0, 0] == pytest.approx(float(scalar), rel=1e-12, abs=1e-300)


@given(st.floats(0.05, 3.0), st.floats(0.1, 1e6), st.floats(0.0, 20.0))
@settings(max_examples=100, deadline=None)
def test_coefficients_decay_and_finite(delta, lam, t):
    r = classify_one(delta, lam)
    a, b = float(coeff_A(r, t)), float(coeff_B(r, t))
    assert np.isfinite(a) and np.isfinite(b)
    # energy of the homogeneous mode never exceeds its initial value
    for u0, u1 in ((1.0, 0.0), (0.0, 1.0)):
        u = u0 * a + u1 * b
        ut = u0 * float(coeff_A(r, t, 1)) + u1 * float(coeff_B(r, t, 1))
        assert lam * u * u + ut * ut <= (lam * u0 * u0 + u1 * u1) * (1 + 1e-10)


def test_lamB_bounds():
    lam = (np.arange(1, 200) * np.pi / 2) ** 1.0
    # undamped: |lam B| = lam^{1/2} |sin(lam^{1/2} t)|, unbounded in n
    rep0 = bound_audit(classify(0.0, lam), T=4.0)
    assert rep0.lamB_max == pytest.approx(np.sqrt(lam).max(), rel=1e-3)
    assert rep0.within_case_bound and rep0.original_bound == 1.0
    rep = bound_audit(classify(1.0, lam), T=4.0)
    assert rep.within_case_bound
    assert rep.case_bound == case_bound(classify(1.0, lam))


def test_growing_families_are_flagged():
    lam = np.arange(1, 100) * np.pi / 2
    rep = bound_audit(classify(1.0, lam), T=4.0, n_t=401)
    # at t = 0, lam^1/2 C = lam^1/2 and lam^1/2 D' = -lam^1/2
    assert "|lam^1/2 C|" in rep.growing and "|lam^1/2 D'|" in rep.growing
    assert "|C|" not in rep.growing


def test_negative_time_rejected():
    with pytest.raises(DomainError):
        coeff_A(classify_one(1.0, 1.0), -0.1)


def test_export_traces(tmp_path):
    sp = classify(1.0, [1.0, 4.0, 9.0])
    export_traces(tmp_path / "c.csv", sp, np.linspace(0, 1, 3))
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows[0] == ["n", "t", "A", "B", "Bp", "Bpp", "regime"]
    assert [r[-1] for r in rows[1::3]] == ["oscillatory", "critical", "overdamped"]
