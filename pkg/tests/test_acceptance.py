"""Acceptance checks, one printed PASS/FAIL line per check.

Run under pytest (lines are printed to the terminal even with capture on)
or directly with ``python3 tests/test_acceptance.py``.
"""

import itertools
import time

import numpy as np
import pytest

from vibroimpact import (ForcedLinearOscillator, IntegrationSettings, PenaltySettings, SystemDef,
                         analyze_conditions, bounce_map_error, choose_theta, conjugacy_check,
                         dominant_eigenvalue_asymptote, fd_shift_map_jacobian,
                         find_grazing_parameter, find_impact_orbit, fit_error_slope,
                         limiting_matrix, sample_separatrix, saltation, shift_map_jacobian,
                         simulate)
from vibroimpact.chaos import unit_shift_holds
from vibroimpact.integrator import ImpactEvent

from conftest import gravity_system, oscillator

FINE = IntegrationSettings(1e-11, 1e-11)
FINER = IntegrationSettings(1e-12, 1e-12)


@pytest.fixture
def report(capsys):
    def emit(label, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {label}: {detail}")
        assert ok, detail
    return emit


def _clock():
    t0 = time.perf_counter()
    return lambda: time.perf_counter() - t0


def test_accept_closed_form_monodromy(report):
    elapsed = _clock()
    osc = oscillator(omega=1.0)
    T = osc.period
    th = choose_theta(osc.min_time(), T)
    rep = shift_map_jacobian(osc.system(), 0.0, th, osc.periodic(-th), FINE)
    phi = osc.fundamental(T)
    rel = np.max(np.abs(rep.jacobian - phi) / np.abs(phi))
    lam_p, lam_m = osc.modes()
    eig = np.sort(rep.eigenvalues.real)
    eig_err = np.max(np.abs(eig - np.sort(np.exp([lam_p * T, lam_m * T]))) / np.abs(eig))
    sec = elapsed()
    ok = rep.n_impacts == 0 and rel <= 1e-7 and eig_err <= 1e-7 and sec < 1
    report("monodromy vs closed form", ok,
           f"entry rel err {rel:.2e}, eigenvalue rel err {eig_err:.2e}, {sec:.2f} s")


def test_accept_saltation_determinant(report):
    elapsed = _clock()
    rng = np.random.default_rng(2)
    K = rng.normal(size=(2, 4))
    coupled = SystemDef(n=2, period=2 * np.pi, restitution=0.7,
                        force=lambda t, z, mu: K @ z + np.array([-1.0, np.sin(t)]))
    salt_err = 0.0
    for _ in range(25):
        r, Y = rng.uniform(0.05, 1.0), rng.uniform(1e-3, 2.0)
        ev = ImpactEvent(rng.uniform(0, 2 * np.pi), rng.normal(size=2), Y, r * Y)
        salt_err = max(salt_err, abs(saltation(coupled, 0.0, ev, r).det - r ** 2))
    # full period: det = r^(2k) exp(-pT) with k impacts
    osc = oscillator(omega=1.0, restitution=0.8)
    s = osc.system()
    full_err, n, impacting = 0.0, 0, 0
    while n < 20:
        z0 = np.array([rng.uniform(0, 2), rng.uniform(-1, 1)])
        try:
            rep = shift_map_jacobian(s, 0.0, 0.0, z0, FINE)
        except ValueError:  # sticking inside the period
            continue
        expect = osc.restitution ** (2 * rep.n_impacts) * np.exp(-osc.p * osc.period)
        full_err = max(full_err, abs(rep.det / expect - 1))
        impacting += rep.n_impacts > 0
        n += 1
    sec = elapsed()
    ok = salt_err <= 1e-12 and full_err <= 1e-5 and impacting >= 5 and sec < 10
    report("saltation determinant", ok,
           f"|det B - r^2| max {salt_err:.1e} over 25, full-period det rel err "
           f"{full_err:.1e} over {n} ({impacting} impacting), {sec:.2f} s")


def test_accept_fd_jacobian(report):
    elapsed = _clock()
    rng = np.random.default_rng(1)
    osc = oscillator(omega=1.0, restitution=0.8)
    s = osc.system()
    errs = []
    while len(errs) < 10:
        z0 = np.array([rng.uniform(0, 2), rng.uniform(-1, 1)])
        try:
            rep = shift_map_jacobian(s, 0.0, 0.0, z0, FINER)
        except ValueError:
            continue
        if rep.n_impacts == 0 or rep.incoming_velocity < 1e-3:
            continue
        J = fd_shift_map_jacobian(s, 0.0, 0.0, z0, FINER, step=1e-6)
        errs.append(np.linalg.norm(J - rep.jacobian) / np.linalg.norm(rep.jacobian))
    sec = elapsed()
    ok = max(errs) <= 1e-4 and sec < 30
    report("finite-difference Jacobian", ok,
           f"max rel err {max(errs):.1e} over 10 impacting scenarios, {sec:.2f} s")


def test_accept_grazing_eigenvalue_law(report):
    elapsed = _clock()
    osc = oscillator(omega=1.0, restitution=1.0)
    bs = osc.grazing_value("b")
    T = osc.period
    th = choose_theta(osc.min_time(), T)
    phi0 = osc.omega ** 2 * osc.a / osc.q
    Ys = np.logspace(-4, -1, 10)
    mus = bs * (1 + Ys ** 2 / (2 * phi0) * osc.q / osc.a)
    pts = [osc.with_params(b=mu).periodic(-th) for mu in mus]
    fit = dominant_eigenvalue_asymptote(osc.system("b"), mus, th, FINE, points=pts)
    a12 = osc.fundamental(T)[0, 1]
    oracle = (osc.restitution + 1) * abs(a12) * phi0
    ratio = fit.prefactor / oracle
    span = fit.velocities.min(), fit.velocities.max()
    sec = elapsed()
    ok = abs(fit.exponent + 1) <= 0.05 and abs(ratio - 1) <= 0.10 and sec < 60
    report("grazing eigenvalue law", ok,
           f"slope {fit.exponent:.4f}, prefactor/oracle {ratio:.4f}, "
           f"Y in [{span[0]:.1e}, {span[1]:.1e}], {sec:.1f} s")


@pytest.fixture(scope="module")
def separatrix():
    t0 = time.perf_counter()
    osc = oscillator(omega=2 * np.pi, b_ratio=0.9)
    bs = osc.grazing_value("b")
    s = osc.system("b")
    th = choose_theta(osc.min_time(), osc.period)
    loc = find_grazing_parameter(s, th, (0.9 * bs, 1.1 * bs), osc.periodic(-th), FINE)
    ymax = 0.05 * loc.phi0 * osc.period
    grid = np.concatenate([-np.geomspace(ymax, ymax / 20, 6), np.geomspace(ymax / 20, ymax, 6)])
    model = sample_separatrix(s, loc.mu_star, loc, grid, FINE)
    return model, time.perf_counter() - t0


def test_accept_separatrix_slope(report, separatrix):
    model, sec = separatrix
    ok = abs(model.log_slope - 2) <= 0.1 and sec < 60
    report("separatrix log-log slope", ok,
           f"slope {model.log_slope:.4f}, fit residual {model.fit_residual:.1e}, {sec:.1f} s")


@pytest.mark.xfail(strict=True, reason="the touching boundary is x1 = y1^2/(2 phi0); "
                                       "the stated 1/phi0 curvature is off by a factor 2")
def test_accept_separatrix_coefficient(report, separatrix):
    model, sec = separatrix
    ok = abs(model.coefficient_ratio - 1) <= 0.05
    report("separatrix coefficient c = 1/phi0", ok,
           f"c*phi0 = {model.coefficient_ratio:.4f} (target 1 +- 5%)")


def test_separatrix_matches_half_inverse_force(separatrix):
    # the geometry check that does hold: c = 1/(2 phi0)
    model, _ = separatrix
    assert model.coefficient_ratio == pytest.approx(0.5, rel=0.05)


def test_accept_condition_checker(report):
    elapsed = _clock()
    grid = [(0.1, 1.0, 1.0), (0.05, 0.5, 2.0), (0.3, 2.0, 0.7), (0.2, 1.5, 3.0), (0.5, 0.8, 1.5)]
    rows = []
    for p, q, w in grid:
        osc = oscillator(p=p, q=q, omega=w, b_ratio=0.9)
        bs = osc.grazing_value("b")
        s = osc.system("b")
        th = choose_theta(osc.min_time(), osc.period)
        loc = find_grazing_parameter(s, th, (0.9 * bs, 1.1 * bs), osc.periodic(-th), FINE)
        A, _, _ = limiting_matrix(s, loc, FINE)
        rep = analyze_conditions(A)
        rows.append(rep.a12 > 0 and rep.R_a > rep.R_u > rep.R_s and rep.branch == "forward"
                    and rep.all_hold)
    sec = elapsed()
    ok = all(rows) and sec < 10
    report("condition checker", ok, f"{sum(rows)}/{len(rows)} grid points hold, {sec:.1f} s")


def test_accept_symbolic_dynamics(report, chaos_bundle):
    bundle, smap, z, sec = chaos_bundle
    hp = bundle.homoclinic
    orbits = {o.symbols: o for o in bundle.orbits}
    words = [(0,), (1,), (0, 1)]
    have = all(w in orbits for w in words)
    sep = np.inf
    shift = False
    if have:
        pts = [orbits[w].point for w in words]
        sep = min(np.linalg.norm(a - b) for a, b in itertools.combinations(pts, 2))
        shift = all(unit_shift_holds(smap, bundle.boxes, orbits[w]) for w in words)
    cov = bundle.covering
    ok = (hp.crossing_angle > 1e-3 and cov.passed and cov.n_arcs >= 50 and have
          and sep > 1e-8 and shift and sec < 180)
    report("symbolic dynamics", ok,
           f"angle {hp.crossing_angle:.3f} rad, covering {cov.n_passed}/{cov.n_arcs}, "
           f"min separation {sep:.2e}, unit shift {shift}, {sec:.0f} s")


def test_accept_soft_convergence(report):
    elapsed = _clock()
    osc = ForcedLinearOscillator(0.1, 1.0, 1.0, 0.3, 1.0, 0.5)
    s = osc.system()
    rng = np.random.default_rng(0)
    nus = [1e2, 1e3, 1e4, 1e5]
    bounds, slopes, durations = [], [], []
    for _ in range(10):
        t0 = rng.uniform(0, osc.period)
        y0 = -rng.uniform(0.1, 1.0)
        recs = [bounce_map_error(s, 0.0, PenaltySettings(nu, 0.5), t0, [], y0, FINER) for nu in nus]
        bounds.append(max(rec.scaled_error for rec in recs))
        slopes.append(fit_error_slope(recs))
        durations.extend(rec.duration * rec.nu for rec in recs)
    spread = max(bounds) / min(bounds)
    sec = elapsed()
    ok = (spread < 10 and all(abs(k + 1) <= 0.1 for k in slopes)
          and all(np.pi / 2 < d < 2 * np.pi for d in durations) and sec < 120)
    report("soft-model convergence", ok,
           f"bound spread {spread:.2f}, slopes [{min(slopes):.3f}, {max(slopes):.3f}], "
           f"duration*nu [{min(durations):.3f}, {max(durations):.3f}], {sec:.1f} s")


def test_accept_conjugacy(report):
    elapsed = _clock()
    osc = oscillator(omega=1.0, restitution=0.8)
    s = osc.system()
    th = choose_theta(osc.min_time(), osc.period)
    z_imp, _ = find_impact_orbit(s, 0.0, th, osc.min_time(), 0.3, FINE)
    table = conjugacy_check(s, 0.0, th, z_imp, [1e2, 1e3, 1e4, 1e5], FINE)
    d = table.displacements()
    sec = elapsed()
    ok = (d[-1] <= 1e-3 and table.inversions() == 0 and table.impulse_saddle
          and table.stability_preserved() and sec < 120)
    report("impulse/soft conjugacy", ok,
           "displacements " + ", ".join(f"{v:.1e}" for v in d)
           + f", saddle preserved {table.stability_preserved()}, {sec:.1f} s")


def test_accept_bouncing_ball(report):
    elapsed = _clock()
    s = gravity_system(g=1.0, r=0.5, period=1.0)
    traj = simulate(s, 0.0, 0.0, [0.0, 1.0], 10.0)
    Y = np.array([ev.incoming_velocity for ev in traj.impacts])
    law = np.max(np.abs(Y[1:16] - Y[:15] / 2))
    rest = traj.sticking_intervals[0].t_start if traj.sticking_intervals else np.nan
    series = 2 * 1.0 / (1 - 0.5)  # flight times 2 Y_k / g with Y_0 = 1
    sec = elapsed()
    ok = len(Y) >= 16 and law <= 1e-6 and abs(rest - series) <= 1e-4 and sec < 1
    report("bouncing ball", ok,
           f"{len(Y)} impacts, halving err {law:.1e}, rest at {rest:.7f} vs {series}, "
           f"{sec:.2f} s")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-rx"]))
