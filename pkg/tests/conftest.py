import time

import numpy as np
import pytest

from vibroimpact import ForcedLinearOscillator, IntegrationSettings, SystemDef, choose_theta
from vibroimpact.chaos import ShiftMap, run_pipeline


def oscillator(p=0.1, q=1.0, a=1.0, omega=1.0, restitution=1.0, b_ratio=0.5):
    osc = ForcedLinearOscillator(p, q, a, 0.0, omega, restitution)
    return osc.with_params(b=b_ratio * osc.grazing_value("b"))


def gravity_system(g=1.0, r=0.5, period=1.0):
    return SystemDef(n=1, period=period, force=lambda t, z, mu: np.array([-g]),
                     restitution=r, force_jacobian=lambda t, z, mu: np.zeros((1, 2)),
                     name="ball")


def chaos_map():
    """Stroboscopic map of the chaos example and its free saddle point."""
    osc = oscillator(omega=2 * np.pi, b_ratio=0.8)
    theta = choose_theta(osc.min_time(), osc.period)
    smap = ShiftMap(osc.system("b"), osc.b, theta, IntegrationSettings(1e-11, 1e-11))
    return osc, smap, np.asarray(osc.periodic(-theta), dtype=float)


CHAOS_GROWTH = dict(unstable_options=dict(generations=20, chord_tol=2e-3, max_length=1.0),
                    stable_options=dict(generations=20, chord_tol=2e-3, max_length=0.3))


@pytest.fixture(scope="session")
def chaos_bundle():
    """Full symbolic-dynamics pipeline on the oscillator; returns (bundle, smap, z, seconds)."""
    t0 = time.perf_counter()
    osc, smap, z = chaos_map()
    bundle = run_pipeline(smap, z, 0.05, n_arcs=50, seed=0, **CHAOS_GROWTH)
    return bundle, smap, z, time.perf_counter() - t0
