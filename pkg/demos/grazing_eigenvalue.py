"""Stability of the forced oscillator near a grazing impact.

The linear oscillator y' = q x - p y - a - b sin(w t) above a wall at x = 0
has a periodic orbit that touches the wall when b reaches b*.  On the free
side the period map is linear with monodromy exp(M T); just past b* the
orbit picks up one slow impact and the dominant multiplier blows up like
1/Y, where Y is the impact speed.  The script prints both regimes and the
chaos-condition report for the limiting matrix.
"""

import numpy as np

from vibroimpact import (ForcedLinearOscillator, IntegrationSettings, analyze_conditions,
                         choose_theta, dominant_eigenvalue_asymptote, find_grazing_parameter,
                         limiting_matrix)

st = IntegrationSettings(1e-11, 1e-11)
osc = ForcedLinearOscillator(p=0.1, q=1.0, a=1.0, b=0.0, omega=1.0, restitution=1.0)
bs = osc.grazing_value("b")
T = osc.period
th = choose_theta(osc.min_time(), T)
phi0 = osc.omega ** 2 * osc.a / osc.q
s = osc.system("b")
print(f"closed-form grazing amplitude b* = {bs:.12f}")

loc = find_grazing_parameter(s, th, (0.9 * bs, 1.1 * bs), osc.periodic(-th), st)
print(f"numerical grazing amplitude    = {loc.mu_star:.12f}, normal force {loc.phi0:.6f}")

A, mu, z = limiting_matrix(s, loc, st)
print("\nmonodromy on the free side vs exp(M T):")
print(A)
print(osc.fundamental(T))
print()
print(analyze_conditions(A).to_text())

# impacting side: track the closed-form periodic point just beyond b*
Ys = np.logspace(-4, -1, 10)
mus = bs * (1 + Ys ** 2 / (2 * phi0) * osc.q / osc.a)
pts = [osc.with_params(b=m).periodic(-th) for m in mus]
fit = dominant_eigenvalue_asymptote(s, mus, th, st, points=pts)
a12 = osc.fundamental(T)[0, 1]
print("impact speed   |dominant multiplier|")
for y, lam in zip(fit.velocities, fit.eigenvalues):
    print(f"{y:.3e}      {lam:.6e}")
print(f"\nfit |lambda| = C Y^k: k = {fit.exponent:.4f}, C = {fit.prefactor:.5f}")
print(f"(r + 1) |a12| phi0 = {(osc.restitution + 1) * abs(a12) * phi0:.5f}")
