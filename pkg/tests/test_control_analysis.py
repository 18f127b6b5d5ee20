import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from fracwave.control_analysis import (
    ControlAnsatz,
    F_transform,
    approximate_control,
    bump_family,
    dual_exponential_coeffs,
    dual_from_exponentials,
    duality_residual,
    export_control_error,
    export_sigma_min,
    moment_matrix,
    reachability_map,
    spectral_control_diagnostic,
    unique_continuation_test,
    write_report,
)
from fracwave.errors import DomainError, RegularizationRequiredError
from fracwave.evolution import ExteriorControl, StatePair, TimeProfile, solve_dual, solve_full
from fracwave.modal_dynamics import Oscillatory, Overdamped, classify
from fracwave.nonlocal_ops import ExteriorProfile, dirichlet_lift, mode_fluxes


@pytest.fixture(scope="module")
def ansatz(small):
    g, _, _ = small
    return ControlAnsatz.on_interval(g, 1.2, 1.7, 2, bump_family(4.0, 6), 4.0)


def test_bump_family_support():
    fam = bump_family(4.0, 8)
    assert len(fam) == 8
    assert all(0 < q.t0 < q.t1 < 4.0 for q in fam)
    with pytest.raises(DomainError):
        bump_family(4.0, 0)


def test_ansatz_layout(small, ansatz):
    g, _, _ = small
    assert ansatz.size == 12
    assert ansatz.elements()[:3] == [(0, 0), (0, 1), (0, 2)]
    cells = np.concatenate(ansatz.spatial_cells)
    assert np.all((g.exterior_nodes[cells] >= 1.2) & (g.exterior_nodes[cells] <= 1.7))
    with pytest.raises(DomainError):
        ansatz.to_control()
    ctl = ansatz.with_coefficients(np.arange(12.0)).to_control()
    assert isinstance(ctl, ExteriorControl)


@pytest.mark.parametrize("delta", [0.0, 1.0])
def test_duality_identity(small, rng, delta):
    g, sy, b = small
    sp = classify(delta, b.lambdas)
    ctl = ExteriorControl(((ExteriorProfile.bump(g, 1.2, 1.7), TimeProfile("poly4", 0.3, 2.0, 1.3)),
                           (ExteriorProfile.bump(g, -2.5, -1.1), TimeProfile("poly6", 1.0, 2.7, -0.7))), 3.0)
    u0, u1, p0, p1 = (rng.standard_normal(b.m) / np.arange(1, b.m + 1) ** 2 for _ in range(4))
    assert duality_residual(u0, u1, ctl, p0, p1, b, sy, sp) <= 1e-8


@pytest.mark.parametrize("delta", [0.0, 0.3, 1.0])
def test_dual_exponential_reconstruction(small, rng, delta):
    _, _, b = small
    sp = classify(delta, b.lambdas)
    p0, p1 = rng.standard_normal(b.m), rng.standard_normal(b.m)
    rep = dual_exponential_coeffs(p0, p1, sp)
    for t in np.linspace(0.0, 3.0, 13):
        ref = solve_dual(p0, p1, sp, t, 3.0).u_coeffs
        assert np.allclose(dual_from_exponentials(rep, t, 3.0), ref, atol=1e-10 * (1 + np.abs(ref).max()))


def test_dual_reconstruction_critical():
    sp = classify(1.0, [1.0, 4.0, 9.0])
    p0, p1 = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.7, -1.0])
    rep = dual_exponential_coeffs(p0, p1, sp)
    assert rep.confluent.tolist() == [False, True, False]
    for t in (0.0, 0.5, 2.0):
        assert np.allclose(dual_from_exponentials(rep, t, 2.0), solve_dual(p0, p1, sp, t, 2.0).u_coeffs, atol=1e-13)


@given(st.floats(-3, 3), st.floats(-2, 2), st.floats(0.0, 2.0))
@settings(max_examples=25, deadline=None)
def test_F_transform_against_quadrature(re, im, delta):
    q = TimeProfile("poly6", 0.4, 2.1, 1.7)
    z = complex(re, im)

    def part(fn):
        return quad(lambda t: fn(0.8 * (float(q(t)) + delta * float(q(t, 1))) * np.exp(1j * z * t)),
                    q.t0, q.t1, epsabs=1e-13, epsrel=1e-12, limit=200)[0]

    ref = complex(part(np.real), part(np.imag))
    assert F_transform(z, q, 0.8, delta, 3.0) == pytest.approx(ref, rel=1e-10, abs=1e-13)


@pytest.mark.parametrize("delta", [0.2, 1.0])
def test_moment_rows_encode_final_state(small, rng, ansatz, delta):
    """Moment row times coefficients equals initial-data term minus final-state term."""
    g, sy, b = small
    sp = classify(delta, b.lambdas)
    nb = len(ansatz.spatial_cells)
    lifts = np.column_stack([dirichlet_lift(ansatz.profile(i), sy) for i in range(nb)])
    P = -(b.lambdas[None, :] * (b.modes.T @ (sy.M @ lifts)).T)
    u0, u1 = rng.standard_normal(b.m), rng.standard_normal(b.m)
    ms = moment_matrix(sp, P, ansatz.temporal_basis, ansatz.T, b.m, u0, u1)
    c = rng.standard_normal(ansatz.size)
    fin = solve_full(u0, u1, ansatz.with_coefficients(c).to_control(), b, sy, sp, ansatz.T)
    expect = []
    for n, r in enumerate(sp.regimes):
        if isinstance(r, Oscillatory):
            mu = complex(r.alpha, r.beta)
            v = fin.ut_coeffs[n] + (mu + delta * b.lambdas[n]) * fin.u_coeffs[n]
            expect += [v.real, v.imag]
        elif isinstance(r, Overdamped):
            for mu in (r.lambda_plus, r.lambda_minus):
                expect.append(fin.ut_coeffs[n] + (mu + delta * b.lambdas[n]) * fin.u_coeffs[n])
    lhs = ms.observation_rows @ c
    assert np.allclose(lhs, ms.rhs - np.array(expect), rtol=1e-7, atol=1e-9 * np.abs(ms.rhs).max())


def test_approximate_control_improves_with_ansatz(small):
    g, sy, b = small
    sp = classify(0.1, b.lambdas)
    target = StatePair(np.eye(b.m)[0], np.zeros(b.m), 4.0)
    errs, prof = [], []
    for J in (4, 8, 16):
        prof = prof + bump_family(4.0, J)
        ans = ControlAnsatz.on_interval(g, 1.2, 1.7, 3, prof, 4.0)
        errs.append(approximate_control(target, ans, b, sy, sp, 1e-12)[1])
    assert errs[2] <= errs[1] <= errs[0] < 0.2


def test_approximate_control_reports_true_error(small, ansatz):
    g, sy, b = small
    sp = classify(0.1, b.lambdas)
    target = StatePair(np.eye(b.m)[0], np.zeros(b.m), 4.0)
    solved, err = approximate_control(target, ansatz, b, sy, sp, 1e-10)
    fin = solve_full(np.zeros(b.m), np.zeros(b.m), solved.to_control(), b, sy, sp, 4.0)
    direct = np.linalg.norm(fin.u_coeffs - target.u_coeffs) + np.linalg.norm(
        (fin.ut_coeffs - target.ut_coeffs) / b.lambdas**0.5)
    assert err == pytest.approx(direct, rel=1e-6)


def test_zero_regularization_needs_full_rank(small):
    g, sy, b = small
    sp = classify(0.1, b.lambdas)
    q = TimeProfile("poly6", 0.5, 3.0)
    ans = ControlAnsatz.on_interval(g, 1.2, 1.7, 1, [q, q], 4.0)
    R = reachability_map(ans, b, sy, sp)
    target = StatePair(np.eye(b.m)[0], np.zeros(b.m), 4.0)
    with pytest.raises(RegularizationRequiredError):
        approximate_control(target, ans, b, sy, sp, 0.0, R)
    with pytest.raises(DomainError):
        approximate_control(target, ans, b, sy, sp, -1.0, R)


def test_moment_conditioning_contrast(small):
    g, sy, b = small
    ans = ControlAnsatz.on_interval(g, 1.2, 1.7, 1, bump_family(30.0, 60), 30.0)
    d = spectral_control_diagnostic(1.0, 30.0, 10, ans, b, sy)
    assert d.contrast is not None and d.contrast.delta == 0.0
    assert d.decay_orders(3, 10) > 3.0 + d.contrast.decay_orders(3, 10)


def test_unique_continuation_verdicts():
    x = np.linspace(1.5, 2.0, 20)
    w = np.full(20, 0.025)
    full = np.column_stack([x**k for k in range(3)])
    rep = unique_continuation_test(x, full, w, 3)
    assert rep.holds and rep.n_nodes == 20
    dep = full.copy()
    dep[:, 2] = dep[:, 0] + dep[:, 1]
    assert not unique_continuation_test(x, dep, w, 3).holds
    with pytest.raises(DomainError):
        unique_continuation_test(np.array([]), full[:0], w[:0], 3)


def test_unique_continuation_rejects_interior(small):
    g, sy, b = small
    x = np.array([0.0, 1.5])
    with pytest.raises(DomainError):
        unique_continuation_test(x, np.ones((2, 3)), np.ones(2), 3, grid=g)


def test_uc_trace_is_gram_trace(small):
    g, sy, b = small
    x = g.exterior_nodes
    msk = (x > 1.2) & (x < 1.7)
    tab = mode_fluxes(b, sy, x[msk])
    w = np.full(msk.sum(), g.h_ext)
    rep = unique_continuation_test(x[msk], tab, w, 4)
    G = tab[:, :4].T @ (w[:, None] * tab[:, :4])
    assert rep.trace == pytest.approx(np.trace(G), rel=1e-12)
    assert rep.eigenvalues[-1] == pytest.approx(np.linalg.eigvalsh(G)[-1], rel=1e-10)


def test_report_writers(tmp_path, small):
    write_report(tmp_path / "r.txt", {"a": 0.1, "b": True})
    assert (tmp_path / "r.txt").read_text() == "a: 0.10000000000000001\nb: True\n"
    export_control_error(tmp_path / "e.csv", [(4, 1e-8, 0.5)])
    assert list(csv.reader(open(tmp_path / "e.csv")))[1] == ["4", "1e-08", "0.5"]

    class D:
        delta, k, sigma_min = 1.0, np.array([1, 2]), np.array([0.5, 0.25])

    export_sigma_min(tmp_path / "s.csv", [D()])
    assert len(list(csv.reader(open(tmp_path / "s.csv")))) == 3
