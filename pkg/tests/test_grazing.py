import numpy as np
import pytest

from vibroimpact import (GrazingLocation, IntegrationSettings, SystemDef, analyze_conditions,
                         choose_theta, find_grazing_parameter, find_impact_orbit,
                         find_periodic_orbit, limiting_matrix, sample_separatrix,
                         separatrix_threshold, shift_map)
from vibroimpact.grazing import BracketError

from conftest import oscillator

FINE = IntegrationSettings(1e-11, 1e-11)


def test_periodic_orbit_newton_finds_closed_form():
    osc = oscillator()
    guess = np.asarray(osc.periodic(-0.4)) + [0.05, -0.05]
    z, rep = find_periodic_orbit(osc.system(), 0.0, 0.4, guess, FINE)
    np.testing.assert_allclose(z, osc.periodic(-0.4), atol=1e-9)
    assert rep.n_impacts == 0


def test_grazing_parameter_matches_closed_form():
    osc = oscillator(p=0.2, q=1.5, omega=1.3, b_ratio=0.9)
    bs = osc.grazing_value("b")
    th = choose_theta(osc.min_time(), osc.period)
    loc = find_grazing_parameter(osc.system("b"), th, (0.9 * bs, 1.1 * bs), osc.periodic(-th), FINE)
    assert loc.mu_star == pytest.approx(bs, rel=1e-9)
    assert loc.phi0 == pytest.approx(osc.omega ** 2 * osc.a / osc.q, rel=1e-7)
    assert loc.grazing_time == pytest.approx(osc.min_time(), abs=1e-5)
    assert loc.free_side == -1.0
    A, mu, z = limiting_matrix(osc.system("b"), loc, FINE)
    assert mu < bs
    np.testing.assert_allclose(A, osc.fundamental(osc.period), rtol=1e-7)


def test_bracket_without_sign_change():
    osc = oscillator(b_ratio=0.5)
    bs = osc.grazing_value("b")
    th = choose_theta(osc.min_time(), osc.period)
    with pytest.raises(BracketError):
        find_grazing_parameter(osc.system("b"), th, (0.3 * bs, 0.6 * bs), osc.periodic(-th), FINE)


def test_conditions_hold_for_oscillator_monodromy():
    rep = analyze_conditions(oscillator(omega=1.0).fundamental(2 * np.pi))
    assert rep.hyperbolic and rep.off_wall and rep.crossing
    assert rep.branch == "forward"
    assert rep.a12 > 0 and rep.R_a > rep.R_u > rep.R_s
    assert rep.verdict == "hold"
    assert "verdict: chaos conditions hold" in rep.to_text()
    assert rep.to_csv().splitlines()[1].endswith("hold")


def test_rotation_is_not_hyperbolic():
    c, s = np.cos(0.3), np.sin(0.3)
    rep = analyze_conditions([[c, -s], [s, c]])
    assert not rep.hyperbolic
    assert rep.verdict == "fail"


def test_diagonal_saddle_is_indeterminate():
    rep = analyze_conditions(np.diag([2.0, 0.5]))
    assert rep.a12 == 0 and rep.alpha12 == 0
    assert rep.crossing is None
    # the unstable direction lies on the wall plane here
    assert not rep.off_wall


def test_condition_checker_input_validation():
    with pytest.raises(ValueError):
        analyze_conditions(np.eye(3))
    with pytest.raises(ValueError):
        analyze_conditions(np.zeros((2, 2)))


def _push_away(phi0):
    return SystemDef(n=1, period=4.0, restitution=1.0,
                     force=lambda t, z, mu: np.array([phi0]),
                     force_jacobian=lambda t, z, mu: np.zeros((1, 2)))


def test_separatrix_threshold_under_constant_force():
    # x(s) = x1 + y1 s + phi0 s^2 / 2 touches iff x1 <= y1^2 / (2 phi0)
    s = _push_away(2.0)
    for y1 in (-0.3, 0.2):
        xs = separatrix_threshold(s, 0.0, 0.0, [y1], 1.5, y1 ** 2, FINE)
        assert xs == pytest.approx(y1 ** 2 / 4.0, rel=1e-8)


def test_separatrix_sampling_fits_the_parabola():
    s = _push_away(2.0)
    loc = GrazingLocation(mu_star=0.0, grazing_time=0.0, phi0=2.0, grazing_state=np.zeros(2),
                          periodic_point=np.zeros(2), theta=2.0, free_side=-1.0)
    model = sample_separatrix(s, 0.0, loc, np.linspace(-0.2, 0.2, 9), FINE, half_window=1.5)
    assert model.coefficient_ratio == pytest.approx(0.5, rel=1e-6)
    assert model.log_slope == pytest.approx(2.0, abs=1e-6)


def test_impact_orbit_is_a_fixed_point_with_one_impact():
    osc = oscillator(restitution=0.8)
    s = osc.system()
    th = choose_theta(osc.min_time(), osc.period)
    z, rep = find_impact_orbit(s, 0.0, th, osc.min_time(), 0.3, FINE)
    assert rep.n_impacts == 1
    np.testing.assert_allclose(shift_map(s, 0.0, th, z, FINE), z, atol=1e-8)
