"""Switched systems driven by semi-Markov switching.

Piecewise deterministic processes Z_t = (X_t, tau_t, I_t) whose active
vector field changes after holding times with arbitrary laws.  The
package simulates them exactly, checks bracket and accessibility
conditions, evaluates Lyapunov and semigroup quantities, and estimates
occupation measures, total-variation decay and invasion rates.
"""

from .accessibility import (AccessPlan, approximate_admissible, fixed_point_1d, is_admissible,
                            one_d_accessible_point, reach_endpoint)
from .config import load_scenario, validate_scenario
from .dynamics import (Ball, Box, ControlSequence, VectorField, bracket_rank, composite_flow,
                       flow, lie_bracket)
from .ergodicity import (LyapunovParams, drift_check, lyapunov_f, semigroup_iterate,
                         submersion_certificate)
from .estimators import (Histogram, LVParams, convergence_diagnostic, dwell_threshold,
                         excursion_bound, invasion_rate, occupation_measure, tv_distance)
from .experiments import run_scenario
from .integrate import FlowConfig
from .laws import (AtomMixture, Dirac, Exponential, PiecewiseLinear, ShiftedExponential,
                   SurvivalLaw, Table, Uniform, UniformMixture, law_from_dict)
from .process import (TrajectoryRecord, expected_jump_bound, sample_states, simulate,
                      simulate_many)
from .switching import (HybridState, JumpMatrix, RateFunction, SwitchedSystem, in_K,
                        sample_holding, survival)

delta1 = dwell_threshold

__version__ = "0.1.0"
