"""Simulate the affine two-field example and look at its state space.

Two fields on [0, 1] pull towards 0 and towards 1.  Holding times are
uniform on [0, 2], so a stay can never be longer than 2 and the age tau
is bounded by how far the path has travelled since the last switch.
"""

import numpy as np

from semiswitch import HybridState, in_K, load_scenario, simulate
from semiswitch.process import jump_count, state_at

sc = load_scenario("km-example")
system = sc.system
z0 = HybridState([0.3], 0.0, 0)

traj = simulate(system, z0, 50.0, 0)
print(f"{traj.n_jumps} switches before t = 50")
print("first marks (T_k, X_k, I_k):")
for t, x, i in list(zip(traj.times, traj.xs[:, 0], traj.states))[:6]:
    print(f"  {t:8.4f}  {x:.4f}  {i}")

# the state at any time is the mark before it, flowed forward
for t in (1.0, 7.5, 42.0):
    z = state_at(traj, t)
    print(f"t={t:5.1f}: x={z.x[0]:.4f} tau={z.s:.4f} i={z.i} "
          f"(jumps so far {jump_count(traj, t)}, in K: {in_K(system, z)})")

# K_M boundary: x in [0, 1], tau <= -ln|i - x|, capped by the law support
x = np.linspace(0.01, 0.99, 5)
print("tau boundary for i = 0:", np.round(np.minimum(-np.log(x), 2.0), 4))
