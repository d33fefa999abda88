import numpy as np
import pytest

from semiswitch.dynamics import Box, VectorField
from semiswitch.laws import AtomMixture, Exponential, Uniform
from semiswitch.switching import JumpMatrix, RateFunction, SwitchedSystem


def affine_fields():
    """F^0 = -x and F^1 = 1 - x with flows i + (x - i) e^{-t}."""
    def make(i):
        return VectorField(lambda x, i=i: i - x, 1,
                           jac=lambda x: np.array([[-1.0]]),
                           flow=lambda t, x, i=i: i + (x - i) * np.exp(-np.asarray(t))[..., None],
                           name=f"to{i}")
    return [make(0), make(1)]


def constant_fields(a=1.0, b=-1.0):
    def make(c):
        return VectorField(lambda x, c=c: np.full_like(np.asarray(x, float), c), 1,
                           jac=lambda x: np.zeros((1, 1)),
                           flow=lambda t, x, c=c: x + c * np.asarray(t)[..., None])
    return [make(a), make(b)]


def two_state(fields, laws, rates=(1.0, 1.0), compact=None):
    return SwitchedSystem(list(fields), [RateFunction.const(r) for r in rates], list(laws),
                          JumpMatrix([[0.0, 1.0], [1.0, 0.0]]), compact)


@pytest.fixture
def exp_system():
    return two_state(affine_fields(), [Exponential(1.0), Exponential(1.0)], compact=Box([0], [1]))


@pytest.fixture
def uniform_system():
    return two_state(affine_fields(), [Uniform(0, 2), Uniform(0, 2)], compact=Box([0], [1]))


@pytest.fixture
def dirac_mix_system():
    law = AtomMixture([1.0, 2.0], [0.5, 0.5])
    return two_state(affine_fields(), [law, law], compact=Box([0], [1]))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
