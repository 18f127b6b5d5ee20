"""Scenario-driven command line front end.

Usage::

    fracwave <experiment> --scenario FILE [--out DIR] [--seed N] [--threads N]
    fracwave run --scenario FILE

A scenario is an INI file with flat ``key = value`` entries grouped in sections::

    [domain]       a, b
    [physics]      s, delta
    [grid]         n_interior, halo, n_exterior
    [modes]        m
    [control]      T, region (``lo, hi`` pairs separated by ``;``), blocks,
                   temporal (nested bump counts), eps_reg (list), target_mode or
                   target_file (CSV with columns n, u, ut; relative to the scenario)
    [experiment]   name, seed, n_times, uc_modes
    [output]       dir

Exit status: 0 success, 1 verification failure, 2 parse error, 3 validation error,
4 numerical error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import AssemblyError, ContractError, DomainError, NumericalError

EXPERIMENTS = ("spectrum", "evolve", "dual", "control", "moments", "uc", "verify")

EXIT_OK, EXIT_VERIFY, EXIT_PARSE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3, 4

CSV_HELP = """\
output files (all floats with 17 significant digits):
  spectrum  spectrum.csv (n, lambda); basis.txt; flux.csv (x, mode, value)
  evolve    traces.csv (t, n, u_n, ut_n); state.csv (t, x, u, ut);
            energy.csv (t, energy); coefficients.csv (n, t, A, B, Bp, Bpp, regime)
  dual      dual_traces.csv (t, n, u_n, ut_n); dual_flux.csv (t, x, value)
  control   control_error.csv (ansatz_size, eps_reg, error);
            control_coefficients.csv (block, profile, t0, t1, coefficient)
  moments   sigma_min.csv (k, sigma_min, delta)
  uc        uc_gram.csv (modes, sigma_min, trace, holds); uc_report.txt
  verify    verify_report.txt (check: value status)
every run also writes manifest.txt (inputs, versions, timestamp line)."""


class ScenarioError(Exception):
    """Scenario file could not be parsed."""


@dataclass
class Scenario:
    a: float = -1.0
    b: float = 1.0
    s: float = 0.5
    delta: float = 1.0
    n_interior: int = 128
    halo: float = 8.0
    n_exterior: int = 256
    m: int = 16
    T: float = 4.0
    region: tuple = ((1.2, 1.7),)
    blocks: int = 4
    temporal: tuple = (4, 8, 16, 32)
    eps_reg: tuple = (1e-8, 1e-10, 1e-12, 1e-14)
    target_mode: int = 1
    target_file: str = ""
    experiment: str = "spectrum"
    seed: int = 0
    n_times: int = 21
    uc_modes: int = 10
    output_dir: str = "out"

    def validate(self):
        if not self.b > self.a:
            raise DomainError("domain needs a < b")
        if not 0.0 < self.s < 1.0:
            raise DomainError("s must lie in (0, 1)")
        if self.delta < 0:
            raise DomainError("delta must be nonnegative")
        if self.n_interior < 2 or self.n_exterior < 1 or self.halo <= 0:
            raise DomainError("grid sizes must be positive")
        if not 1 <= self.m <= self.n_interior:
            raise DomainError("modes m must lie in 1..n_interior")
        if self.T <= 0:
            raise DomainError("horizon T must be positive")
        for lo, hi in self.region:
            if not hi > lo:
                raise DomainError(f"control region ({lo}, {hi}) is empty")
            if lo < self.b and hi > self.a:
                raise DomainError(f"control region ({lo}, {hi}) intersects [a, b]")
            if lo < self.a - self.halo or hi > self.b + self.halo:
                raise DomainError(f"control region ({lo}, {hi}) leaves the exterior halo")
        if self.experiment not in EXPERIMENTS:
            raise DomainError(f"unknown experiment {self.experiment!r}")
        if not 1 <= self.target_mode <= self.m:
            raise DomainError("target_mode must lie in 1..m")
        if any(e < 0 for e in self.eps_reg):
            raise DomainError("eps_reg values must be nonnegative")
        return self


_KEYS = {
    ("domain", "a"): ("a", float),
    ("domain", "b"): ("b", float),
    ("physics", "s"): ("s", float),
    ("physics", "delta"): ("delta", float),
    ("grid", "n_interior"): ("n_interior", int),
    ("grid", "halo"): ("halo", float),
    ("grid", "n_exterior"): ("n_exterior", int),
    ("modes", "m"): ("m", int),
    ("control", "t"): ("T", float),
    ("control", "region"): ("region", "region"),
    ("control", "blocks"): ("blocks", int),
    ("control", "temporal"): ("temporal", "ints"),
    ("control", "eps_reg"): ("eps_reg", "floats"),
    ("control", "target_mode"): ("target_mode", int),
    ("control", "target_file"): ("target_file", str),
    ("experiment", "name"): ("experiment", str),
    ("experiment", "seed"): ("seed", int),
    ("experiment", "n_times"): ("n_times", int),
    ("experiment", "uc_modes"): ("uc_modes", int),
    ("output", "dir"): ("output_dir", str),
}


def _convert(kind, raw):
    if kind == "region":
        out = []
        for part in raw.split(";"):
            lo, hi = (float(v) for v in part.split(","))
            out.append((lo, hi))
        return tuple(out)
    if kind == "ints":
        return tuple(int(v) for v in raw.split(","))
    if kind == "floats":
        return tuple(float(v) for v in raw.split(","))
    return kind(raw)


def load_scenario(path):
    """Parse a scenario file; raises :class:`ScenarioError` with the offending field."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";;"))
    try:
        with open(path) as fh:
            text = fh.read()
        cp.read_string(text, source=str(path))
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ScenarioError(str(exc)) from exc
    values = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            entry = _KEYS.get((section.lower(), key.lower()))
            if entry is None:
                raise ScenarioError(f"unknown field [{section}] {key}")
            name, kind = entry
            try:
                values[name] = _convert(kind, raw.strip())
            except ValueError as exc:
                raise ScenarioError(f"field [{section}] {key} = {raw!r}: {exc}") from exc
    sc = Scenario(**values)
    if sc.target_file:
        sc.target_file = str((Path(path).parent / sc.target_file).resolve())
    return sc, text


def _fmt(v):
    return f"{float(v):.17g}"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


class _Context:
    """Lazily assembled objects shared by the experiments of one run."""

    def __init__(self, sc):
        from .modal_dynamics import classify
        from .spectral_core import Grid1D, assemble, eigenpairs

        self.sc = sc
        self.grid = Grid1D(sc.a, sc.b, sc.n_interior, sc.halo, sc.n_exterior)
        self.system = assemble(self.grid, sc.s)
        self.basis = eigenpairs(self.system, sc.m)
        self.spectrum = classify(sc.delta, self.basis.lambdas)
        self.rng = np.random.default_rng(sc.seed)

    def random_modal(self, decay=2.0):
        n = np.arange(1, self.sc.m + 1)
        return self.rng.standard_normal(self.sc.m) / n**decay

    def region_mask(self):
        x = self.grid.exterior_nodes
        mask = np.zeros(x.size, dtype=bool)
        for lo, hi in self.sc.region:
            mask |= (x >= lo) & (x <= hi)
        return mask


def _temporal_family(T, count):
    from .control_analysis import bump_family

    return bump_family(T, count)


def run_spectrum(ctx, out):
    from .nonlocal_ops import export_flux_table, mode_fluxes
    from .spectral_core import export_basis

    lam = ctx.basis.lambdas
    _write_csv(out / "spectrum.csv", ["n", "lambda"], [(n, l) for n, l in enumerate(lam, start=1)])
    export_basis(ctx.basis, out / "basis.txt")
    x = ctx.grid.exterior_nodes
    export_flux_table(out / "flux.csv", mode_fluxes(ctx.basis, ctx.system, x), x)
    return {"lambda_1": lam[0], "lambda_m": lam[-1]}


def run_evolve(ctx, out):
    from .evolution import energy, export_modal_traces, export_state, solve_homogeneous
    from .modal_dynamics import export_traces

    sc = ctx.sc
    u0, u1 = ctx.random_modal(), ctx.random_modal()
    t = np.linspace(0.0, sc.T, sc.n_times)
    states = [solve_homogeneous(u0, u1, ctx.spectrum, ti) for ti in t]
    export_modal_traces(out / "traces.csv", states)
    export_state(out / "state.csv", states[-1], ctx.basis)
    _write_csv(out / "energy.csv", ["t", "energy"], [(s.t, energy(s, ctx.basis.lambdas)) for s in states])
    export_traces(out / "coefficients.csv", ctx.spectrum, t)
    e = [energy(s, ctx.basis.lambdas) for s in states]
    return {"energy_0": e[0], "energy_T": e[-1], "n0": ctx.spectrum.n0}


def run_dual(ctx, out):
    from .evolution import export_modal_traces, solve_dual
    from .nonlocal_ops import mode_fluxes

    sc = ctx.sc
    p0, p1 = ctx.random_modal(), ctx.random_modal()
    t = np.linspace(0.0, sc.T, sc.n_times)
    states = [solve_dual(p0, p1, ctx.spectrum, ti, sc.T) for ti in t]
    export_modal_traces(out / "dual_traces.csv", states)
    mask = ctx.region_mask()
    x = ctx.grid.exterior_nodes[mask]
    table = mode_fluxes(ctx.basis, ctx.system, x)
    rows = []
    for st in states:
        vals = table @ st.u_coeffs
        rows += [(st.t, xi, v) for xi, v in zip(x, vals)]
    _write_csv(out / "dual_flux.csv", ["t", "x", "value"], rows)
    return {"nodes": int(x.size)}


def _nested_ansatz(ctx):
    from .control_analysis import ControlAnsatz

    sc = ctx.sc
    lo, hi = sc.region[0]
    profiles, ansatze = [], []
    for count in sc.temporal:
        profiles = profiles + _temporal_family(sc.T, count)
        ansatze.append(ControlAnsatz.on_interval(ctx.grid, lo, hi, sc.blocks, profiles, sc.T))
    return ansatze


def _load_target(sc):
    from .evolution import StatePair

    u, ut = np.zeros(sc.m), np.zeros(sc.m)
    try:
        with open(sc.target_file, newline="") as fh:
            for row in csv.DictReader(fh):
                n = int(row["n"])
                if not 1 <= n <= sc.m:
                    raise DomainError(f"target mode {n} outside 1..{sc.m}")
                u[n - 1], ut[n - 1] = float(row["u"]), float(row["ut"])
    except (OSError, KeyError, ValueError) as exc:
        raise DomainError(f"cannot read target file {sc.target_file}: {exc}") from exc
    return StatePair(u, ut, sc.T)


def run_control(ctx, out):
    from .control_analysis import approximate_control, export_control_error, reachability_map
    from .evolution import StatePair

    sc = ctx.sc
    target = _load_target(sc) if sc.target_file else StatePair(np.eye(sc.m)[sc.target_mode - 1], np.zeros(sc.m), sc.T)
    rows, best = [], None
    for ans in _nested_ansatz(ctx):
        R = reachability_map(ans, ctx.basis, ctx.system, ctx.spectrum)
        for eps in sc.eps_reg:
            solved, err = approximate_control(target, ans, ctx.basis, ctx.system, ctx.spectrum, eps, R)
            rows.append((ans.size, eps, err))
            if best is None or err < best[1]:
                best = (solved, err, eps)
    export_control_error(out / "control_error.csv", rows)
    solved = best[0]
    coef_rows = []
    for i, j in solved.elements():
        q = solved.temporal_basis[j]
        coef_rows.append((i, j, q.t0, q.t1, solved.coefficients[i, j]))
    _write_csv(out / "control_coefficients.csv", ["block", "profile", "t0", "t1", "coefficient"], coef_rows)
    return {"best_error": best[1], "best_eps_reg": best[2]}


def run_moments(ctx, out):
    from .control_analysis import ControlAnsatz, export_sigma_min, spectral_control_diagnostic

    sc = ctx.sc
    lo, hi = sc.region[0]
    count = max(sc.temporal[-1], 2 * sc.m + 2)
    ans = ControlAnsatz.on_interval(ctx.grid, lo, hi, 1, _temporal_family(sc.T, count), sc.T)
    diag = spectral_control_diagnostic(sc.delta, sc.T, sc.m, ans, ctx.basis, ctx.system)
    runs = [diag] + ([diag.contrast] if diag.contrast is not None else [])
    export_sigma_min(out / "sigma_min.csv", runs)
    return {"sigma_min_last": diag.sigma_min[-1]}


def run_uc(ctx, out):
    from .control_analysis import unique_continuation_test, write_report
    from .nonlocal_ops import mode_fluxes

    sc = ctx.sc
    mask = ctx.region_mask()
    x = ctx.grid.exterior_nodes[mask]
    table = mode_fluxes(ctx.basis, ctx.system, x)
    w = np.full(x.size, ctx.grid.h_ext)
    rows, last = [], None
    for M in range(1, min(sc.uc_modes, sc.m) + 1):
        rep = unique_continuation_test(x, table, w, M, grid=ctx.grid)
        rows.append((M, rep.sigma_min, rep.trace, int(rep.holds)))
        last = rep
    _write_csv(out / "uc_gram.csv", ["modes", "sigma_min", "trace", "holds"], rows)
    write_report(out / "uc_report.txt", {"modes": last.M_modes, "nodes": last.n_nodes,
                                          "sigma_min": last.sigma_min, "trace": last.trace,
                                          "holds": last.holds})
    return {"uc_holds": last.holds}


def run_verify(ctx, out):
    """Invariant suite; returns a dict with an ``all_pass`` entry."""
    from .control_analysis import dual_exponential_coeffs, dual_from_exponentials, duality_residual
    from .evolution import (
        ExteriorControl,
        TimeProfile,
        control_pairings,
        dissipativity_audit,
        energy,
        solve_controlled,
        solve_controlled_direct,
        solve_dual,
        solve_homogeneous,
    )
    from .modal_dynamics import bound_audit, ode_residual
    from .nonlocal_ops import ExteriorProfile, check_flux_identity

    sc, b, sysm, sp = ctx.sc, ctx.basis, ctx.system, ctx.spectrum
    checks = []

    def check(name, value, ok):
        checks.append((name, float(value), bool(ok)))

    M = sysm.M
    orth = np.abs(b.modes.T @ M @ b.modes - np.eye(b.m)).max()
    check("m_orthonormality", orth, orth <= 1e-8)
    res = np.linalg.norm(sysm.K @ b.modes - M @ b.modes * b.lambdas, axis=0) / np.linalg.norm(
        M @ b.modes * b.lambdas, axis=0)
    check("eigen_residual", res.max(), res.max() <= 1e-8)
    t = np.linspace(0.0, sc.T, 200)
    ode = max(ode_residual(r, r.lam, r.delta, f, t) for r in sp.regimes for f in "AB")
    check("modal_ode_residual", ode, ode <= 1e-10)
    rep = bound_audit(sp, T=sc.T, n_t=401)
    check("lamB_case_bound_ratio", rep.lamB_max / rep.case_bound, rep.within_case_bound)
    diss = dissipativity_audit(sysm, sc.delta, trials=200, seed=sc.seed)
    check("dissipativity_max_ratio", diss.max_ratio, diss.dissipative)
    lo, hi = sc.region[0]
    bump = ExteriorProfile.bump(ctx.grid, lo, hi)
    flux = max(check_flux_identity(bump, b, sysm, n) for n in range(1, min(8, b.m) + 1))
    check("flux_identity", flux, flux <= 5e-2)
    u0, u1 = ctx.random_modal(), ctx.random_modal()
    tt = np.linspace(0.0, sc.T, 50)
    e = np.array([energy(solve_homogeneous(u0, u1, sp, ti), b.lambdas) for ti in tt])
    if sc.delta == 0.0:
        drift = np.abs(e - e[0]).max() / e[0]
        check("energy_drift", drift, drift <= 1e-10)
    else:
        inc = np.max(np.diff(e) / e[0])
        check("energy_increase", inc, inc <= 1e-12)
    ctl = ExteriorControl(((bump, TimeProfile("poly4", 0.2 * sc.T, 0.7 * sc.T)),), sc.T)
    L = control_pairings(ctl, b, sysm)
    v = solve_controlled(ctl, b, sysm, sp, sc.T, L).u_coeffs
    vd = solve_controlled_direct(ctl, L, sp, sc.T)
    dd = np.abs(v - vd).max() / max(np.abs(v).max(), 1e-300)
    check("duhamel_vs_direct", dd, dd <= 1e-6)
    p0, p1 = ctx.random_modal(), ctx.random_modal()
    dual = duality_residual(u0, u1, ctl, p0, p1, b, sysm, sp, L)
    check("duality_residual", dual, dual <= 1e-4)
    rep_e = dual_exponential_coeffs(p0, p1, sp)
    recon = max(np.abs(dual_from_exponentials(rep_e, ti, sc.T) - solve_dual(p0, p1, sp, ti, sc.T).u_coeffs).max()
                for ti in tt)
    check("dual_reconstruction", recon, recon <= 1e-10)
    lines = [f"{n}: {_fmt(v)} {'PASS' if ok else 'FAIL'}" for n, v, ok in checks]
    # audits of the uniform coefficient bounds are findings, not implementation checks
    for fam, slope in rep.slopes.items():
        lines.append(f"audit slope {fam}: {_fmt(slope)} {'GROWING' if fam in rep.growing else 'BOUNDED'}")
    (out / "verify_report.txt").write_text("\n".join(lines) + "\n")
    return {"all_pass": all(ok for _, _, ok in checks), "checks": len(checks)}


RUNNERS = {
    "spectrum": run_spectrum,
    "evolve": run_evolve,
    "dual": run_dual,
    "control": run_control,
    "moments": run_moments,
    "uc": run_uc,
    "verify": run_verify,
}


def _write_manifest(out, sc, text, summary, wall):
    lines = ["# fracwave run manifest", f"experiment: {sc.experiment}"]
    for f in fields(sc):
        lines.append(f"input.{f.name}: {getattr(sc, f.name)}")
    lines.append(f"version.fracwave: {__version__}")
    lines.append(f"version.python: {platform.python_version()}")
    lines.append(f"version.numpy: {np.__version__}")
    lines.append(f"version.scipy: {scipy.__version__}")
    for k, v in summary.items():
        lines.append(f"result.{k}: {_fmt(v) if isinstance(v, (float, np.floating)) else v}")
    lines.append("scenario:")
    lines += ["  " + ln for ln in text.splitlines()]
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    lines.append(f"timestamp: {stamp} wall_time_s={wall:.3f}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def build_parser():
    p = argparse.ArgumentParser(
        prog="fracwave",
        description="Spectral experiments for fractional damped wave equations on an interval.",
        epilog=CSV_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run",) + EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment" if name != "run" else
                            "run the experiment named in the scenario", epilog=CSV_HELP,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("--scenario", required=True, help="scenario file (INI)")
        sp.add_argument("--out", help="output directory (overrides [output] dir)")
        sp.add_argument("--seed", type=int, help="random seed (overrides [experiment] seed)")
        sp.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        sc, text = load_scenario(args.scenario)
        if args.command != "run":
            sc.experiment = args.command
        if args.seed is not None:
            sc.seed = args.seed
        if args.out is not None:
            sc.output_dir = args.out
    except ScenarioError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        sc.validate()
    except DomainError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out = Path(sc.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=max(1, args.threads)):
            ctx = _Context(sc)
            summary = RUNNERS[sc.experiment](ctx, out)
    except (DomainError, ContractError) as exc:
        print(f"validation error in {sc.experiment}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, AssemblyError, np.linalg.LinAlgError) as exc:
        print(f"numerical error in {sc.experiment}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _write_manifest(out, sc, text, summary, time.perf_counter() - start)
    if sc.experiment == "verify" and not summary["all_pass"]:
        print("verification failed; see verify_report.txt", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
