import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vibroimpact import (IntegrationSettings, PenaltySettings, SystemDef, bounce_map_error,
                         choose_theta, conjugacy_check, find_impact_orbit, in_wall_closed_form,
                         integrate_soft, penalty_force, shift_map, simulate, soft_shift_map)

from conftest import gravity_system, oscillator

FINER = IntegrationSettings(1e-12, 1e-12)

FREE = SystemDef(n=1, period=1.0, restitution=1.0, force=lambda t, z, mu: np.zeros(1),
                 force_jacobian=lambda t, z, mu: np.zeros((1, 2)))


def test_settings_validation_and_alpha():
    with pytest.raises(ValueError):
        PenaltySettings(0.0)
    with pytest.raises(ValueError):
        PenaltySettings(10.0, restitution=0.0)
    assert PenaltySettings(10.0, 1.0).alpha == 0.0
    assert str(PenaltySettings(10.0, 1.0).alpha) == "0.0"
    assert PenaltySettings(10.0, np.exp(-np.pi)).alpha == pytest.approx(1.0)


def test_penalty_force_active_only_inside():
    ps = PenaltySettings(100.0, 0.5)
    assert penalty_force(ps, [0.1, -1.0])[0] == 0.0
    a = penalty_force(ps, [-0.01, -1.0])[0]
    expect = -2 * ps.alpha * 100 * -1.0 - (1 + ps.alpha ** 2) * 1e4 * -0.01
    assert a == pytest.approx(expect)


@settings(max_examples=20, deadline=None)
@given(r0=st.floats(0.2, 1.0), y0=st.floats(-2.0, -0.05), nu=st.sampled_from([1e2, 1e3, 1e4]))
def test_force_free_bounce_is_exact(r0, y0, nu):
    ps = PenaltySettings(nu, r0)
    rec = bounce_map_error(FREE, 0.0, ps, 0.0, [], y0, FINER)
    # closed form: exit after exactly pi/nu with speed r0 |y0|
    assert rec.duration == pytest.approx(np.pi / nu, rel=1e-7)
    assert rec.exit_velocity == pytest.approx(-r0 * y0, rel=1e-7)
    assert rec.restitution_error <= 1e-7 * abs(y0)
    assert rec.regular


def test_closed_form_in_wall_solution():
    ps = PenaltySettings(50.0, 0.6)
    y0 = -0.8
    traj = integrate_soft(FREE, 0.0, ps, 0.0, [0.0, y0], 0.5 * np.pi / ps.nu, FINER)
    t = traj.t_end
    x, v = in_wall_closed_form(ps, y0, t)
    np.testing.assert_allclose(traj.z_end, [x, v], rtol=1e-8)


def test_forced_bounce_error_shrinks_like_one_over_nu():
    osc = oscillator(restitution=0.5, b_ratio=0.3)
    s = osc.system()
    recs = [bounce_map_error(s, 0.0, PenaltySettings(nu, 0.5), 0.3, [], -0.5, FINER)
            for nu in (1e2, 1e3, 1e4)]
    errs = np.array([r.restitution_error for r in recs])
    assert np.all(np.diff(errs) < 0)
    ratio = errs[:-1] / errs[1:]
    np.testing.assert_allclose(ratio, 10.0, rtol=0.2)
    assert all(r.regular for r in recs)


def test_bounce_requires_incoming_velocity():
    with pytest.raises(ValueError):
        bounce_map_error(FREE, 0.0, PenaltySettings(10.0), 0.0, [], 0.1)


def test_soft_ball_approaches_impulse_ball():
    hard = simulate(gravity_system(r=0.8, period=10.0), 0.0, 0.0, [1.0, 0.0], 4.0, FINER)
    soft = integrate_soft(gravity_system(r=0.8, period=10.0), 0.0, PenaltySettings(1e4, 0.8),
                          0.0, [1.0, 0.0], 4.0, FINER)
    assert len(soft.bounces) == len(hard.impacts)
    np.testing.assert_allclose(soft.z_end, hard.z_end, atol=5e-3)


def test_soft_shift_map_tracks_impulse_orbit():
    osc = oscillator(restitution=0.8)
    s = osc.system()
    th = choose_theta(osc.min_time(), osc.period)
    z, _ = find_impact_orbit(s, 0.0, th, osc.min_time(), 0.3, FINER)
    d_hard = np.linalg.norm(shift_map(s, 0.0, th, z, FINER) - z)
    d_soft = [np.linalg.norm(soft_shift_map(s, 0.0, PenaltySettings(nu, 0.8), th, z, FINER) - z)
              for nu in (1e3, 1e4, 1e5)]
    assert d_hard < 1e-8
    assert d_soft[0] > d_soft[1] > d_soft[2]
    assert d_soft[2] < 1e-3


def test_conjugacy_keeps_saddle_type():
    osc = oscillator(restitution=0.8)
    s = osc.system()
    th = choose_theta(osc.min_time(), osc.period)
    z, _ = find_impact_orbit(s, 0.0, th, osc.min_time(), 0.3, FINER)
    table = conjugacy_check(s, 0.0, th, z, [1e3, 1e4], FINER)
    assert table.impulse_saddle
    assert table.inversions() == 0
    assert table.stability_preserved()
