"""Lie bracket rank and a submersion certificate in the plane.

A rotation about the origin and a sink towards (1, 0).  At a generic
point the two fields already span R^2; the strong family (differences
of fields) needs one bracket to reach full rank.
"""

import numpy as np

from semiswitch import (Ball, ControlSequence, Exponential, HybridState, JumpMatrix,
                        RateFunction, SwitchedSystem, VectorField, bracket_rank,
                        lie_bracket, submersion_certificate)

rot = VectorField(lambda x: np.stack([-x[..., 1], x[..., 0]], axis=-1), dim=2, name="rot")
sink = VectorField(lambda x: np.array([1.0, 0.0]) - x, dim=2, name="sink")
x = np.array([0.6, -0.2])

print("[rot, sink](x) =", np.round(lie_bracket(rot, sink, x), 8))
for mode in ("weak", "strong"):
    rep = bracket_rank([rot, sink], x, mode=mode, depth=3)
    print(f"{mode:6s} rank {rep.rank} of {rep.dim}, generators: {rep.labels[:4]}")

system = SwitchedSystem([rot, sink], [RateFunction.const(1.0)] * 2, [Exponential(1.0)] * 2,
                        JumpMatrix([[0.0, 1.0], [1.0, 0.0]]), Ball(np.zeros(2), 2.0))
# m = 2 legs carry the Jacobian, one more leg closes the window T, one trails
cs = ControlSequence((0.4, 0.5, 0.6, 0.3), (0, 1, 0, 1))
cert = submersion_certificate(system, HybridState(x, 0.0, 0), cs, T=1.5)
print("certificate:", cert.to_dict())
