"""Occupation measures from opposite starts in the inflation model.

The two fields push V towards -asinh(1/m) and +asinh(1/m).  Starting at
either end, the long-run time averages should agree; total variation
between the two histograms shrinks as the horizon grows.
"""

import numpy as np

from semiswitch import HybridState, load_scenario, occupation_measure, tv_distance

sc = load_scenario("inflation")
vmax = np.arcsinh(1.0)
za = HybridState([-vmax], 0.0, 0)
zb = HybridState([vmax], 0.0, 1)

for T in (10.0, 100.0, 1000.0):
    ha = occupation_measure(sc.system, za, T, seed=11)
    hb = occupation_measure(sc.system, zb, T, seed=12)
    print(f"T={T:7.0f}: TV = {tv_distance(ha, hb):.3f}, mass in state 0: "
          f"{ha.marginal(2)[0]:.3f} / {hb.marginal(2)[0]:.3f}")
