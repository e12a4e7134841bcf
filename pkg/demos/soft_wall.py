"""Replacing the rigid wall by a stiff damped spring.

Inside the wall the penalty model adds x'' = -2 alpha nu x' - (1 + alpha^2) nu^2 x,
with alpha = -log(r)/pi chosen so that a force-free bounce leaves with
exactly r times the entry speed after pi/nu.  With forcing the bounce is
only approximately an impact; the error decays like 1/nu.  The second part
tracks a one-impact periodic orbit of the rigid model into the soft model.
"""

import numpy as np

from vibroimpact import (ForcedLinearOscillator, IntegrationSettings, PenaltySettings,
                         bounce_map_error, choose_theta, conjugacy_check, find_impact_orbit,
                         fit_error_slope)

st = IntegrationSettings(1e-12, 1e-12)
osc = ForcedLinearOscillator(0.1, 1.0, 1.0, 0.3, 1.0, restitution=0.5)
s = osc.system()
nus = [1e2, 1e3, 1e4, 1e5]
rng = np.random.default_rng(0)

print("entry speed  slope    max err*nu   duration*nu")
for _ in range(5):
    t0, y0 = rng.uniform(0, osc.period), -rng.uniform(0.1, 1.0)
    recs = [bounce_map_error(s, 0.0, PenaltySettings(nu, 0.5), t0, [], y0, st) for nu in nus]
    print(f"{-y0:.4f}       {fit_error_slope(recs):+.4f}  {max(r.scaled_error for r in recs):.4e}"
          f"   {min(r.duration * r.nu for r in recs):.4f}")

print("\none-impact orbit of the rigid model, tracked into the soft model")
osc = ForcedLinearOscillator(0.1, 1.0, 1.0, 0.0, 1.0, restitution=0.8)
osc = osc.with_params(b=0.5 * osc.grazing_value("b"))
s = osc.system()
th = choose_theta(osc.min_time(), osc.period)
z_imp, rep = find_impact_orbit(s, 0.0, th, osc.min_time(), 0.3, IntegrationSettings(1e-11, 1e-11))
print(f"rigid orbit point {z_imp}, multipliers {np.abs(rep.eigenvalues)}")
table = conjugacy_check(s, 0.0, th, z_imp, nus, IntegrationSettings(1e-11, 1e-11))
for row in table.rows:
    print(f"nu = {row.nu:8.0e}  displacement {row.displacement:.3e}  saddle {row.saddle}")
