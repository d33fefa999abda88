"""Approximate an arbitrary control sequence by an admissible one.

The target asks for legs of fixed length with a free choice of fields.
The walker takes small steps whose lengths lie in the support of the
holding laws and joins them with short detours, ending within eps of
the target endpoint.
"""

import numpy as np

from semiswitch import (Box, ControlSequence, Exponential, HybridState, JumpMatrix,
                        RateFunction, SwitchedSystem, VectorField, approximate_admissible,
                        composite_flow, is_admissible)

A = [np.array([[-1.0]]), np.array([[-0.5]]), np.array([[0.3]])]
b = [np.array([0.0]), np.array([0.5]), np.array([0.1])]
fields = [VectorField((lambda Ak, bk: lambda x: x @ Ak.T + bk)(Ak, bk), dim=1, name=f"F{k}")
          for k, (Ak, bk) in enumerate(zip(A, b))]
Q = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
system = SwitchedSystem(fields, [RateFunction.const(1.0)] * 3, [Exponential(1.0)] * 3,
                        JumpMatrix(Q), Box([-2.0], [2.0]))

x0 = np.array([0.2])
target = ControlSequence((0.6, 0.3, 0.8), (0, 2, 1))
print("target endpoint:", composite_flow(fields, target, x0))

for eps in (1e-1, 1e-2):
    plan = approximate_admissible(system, x0, target, eps, rng=np.random.default_rng(0))
    rep = is_admissible(system, HybridState(x0, 0.0, 0), plan.sequence)
    print(f"eps={eps:g}: {len(plan.sequence)} legs, h={plan.h:.2e}, error={plan.error:.2e}, "
          f"admissible={bool(rep)}")
