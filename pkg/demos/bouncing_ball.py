"""A ball dropped on a rigid floor under constant gravity.

Each impact halves the rebound speed (r = 0.5), so the flight times form a
geometric series and the ball comes to rest at a finite time after
infinitely many impacts.  The integrator follows the impacts until the
rebound speed falls below the chatter threshold and then switches to
sticking on the floor.
"""

import numpy as np

from vibroimpact import IntegrationSettings, SystemDef, simulate

g, r = 1.0, 0.5
ball = SystemDef(n=1, period=1.0, restitution=r, name="ball",
                 force=lambda t, z, mu: np.array([-g]),
                 force_jacobian=lambda t, z, mu: np.zeros((1, 2)))

traj = simulate(ball, 0.0, 0.0, [0.0, 1.0], 10.0, IntegrationSettings(chatter_velocity=1e-6))

print("impact   time          speed in      ratio")
prev = None
for k, ev in enumerate(traj.impacts):
    ratio = "" if prev is None else f"{ev.incoming_velocity / prev:.12f}"
    print(f"{k:6d}   {ev.time:.10f}  {ev.incoming_velocity:.6e}  {ratio}")
    prev = ev.incoming_velocity

stick = traj.sticking_intervals[0]
# launch speed 1 gives flight times 2, 1, 1/2, ... summing to 2 / (1 - r)
print(f"\nsticking from t = {stick.t_start:.8f}; geometric series gives {2 / (1 - r):.8f}")
print(f"final state {traj.z_end}")
