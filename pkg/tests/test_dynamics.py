import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import affine_fields, constant_fields
from semiswitch.dynamics import (Ball, Box, ControlSequence, VectorField, bracket_rank,
                                 composite_flow, flow, jacobian, leg_endpoints, lie_bracket,
                                 lipschitz_constants, numerical_rank, submersion_jacobian)
from semiswitch.errors import BackwardHorizonExceeded, DepthBudgetExceeded, DomainViolation
from semiswitch.estimators import logistic_field
from semiswitch.integrate import FlowConfig


def linear(A):
    A = np.asarray(A, float)
    return VectorField(lambda x: x @ A.T, A.shape[0])


def bump_field():
    def rhs(x):
        x = np.asarray(x, float)
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(x < 0, 1 + np.exp(-1 / x ** 2), 1.0)
    return VectorField(rhs, 1)


def test_closed_form_flow_decay():
    F = affine_fields()[0]
    assert flow(F, np.log(2), np.array([1.0]))[0] == pytest.approx(0.5, abs=1e-15)


def test_flow_zero_time_is_identity():
    F = bump_field()
    np.testing.assert_array_equal(flow(F, 0.0, np.array([-0.3])), [-0.3])


def test_logistic_flow():
    F = logistic_field(1.0, 0.5)
    assert flow(F, np.log(3), np.array([1.0]))[0] == pytest.approx(1.5, abs=1e-12)


def test_numeric_flow_matches_closed_form():
    F = affine_fields()[1]
    G = VectorField(F.rhs, 1)
    for t in (0.3, 1.7, -0.8):
        a = flow(F, t, np.array([0.2]))
        b = flow(G, t, np.array([0.2]))
        assert abs(a[0] - b[0]) <= 1e-6 * abs(a[0])


def test_backward_horizon():
    F = logistic_field(1.0, 1.0)
    # above the carrying capacity the backward flow blows up after ln(3/2)
    assert F.horizon(np.array([3.0])) == pytest.approx(np.log(1.5))
    with pytest.raises(BackwardHorizonExceeded):
        flow(F, -1.0, np.array([3.0]))
    assert F.horizon(np.array([0.5])) == np.inf


def test_composite_flow_cancellation():
    cs = ControlSequence((1.0, 1.0), (0, 1))
    assert composite_flow(constant_fields(), cs, np.array([0.0]))[0] == pytest.approx(0.0, abs=1e-15)


def test_composite_flow_affine():
    cs = ControlSequence((np.log(2), np.log(2)), (1, 0))
    assert composite_flow(affine_fields(), cs, np.array([1.0]))[0] == pytest.approx(0.5)
    pts = leg_endpoints(affine_fields(), cs, np.array([1.0]))
    assert len(pts) == 3 and pts[1][0] == pytest.approx(1.0)


def test_single_leg_equals_flow():
    F = affine_fields()
    cs = ControlSequence((0.7,), (1,))
    assert composite_flow(F, cs, np.array([0.2]))[0] == pytest.approx(flow(F[1], 0.7, np.array([0.2]))[0])


def test_jacobian_linear():
    A = [[0.0, 1.0], [-2.0, 0.5]]
    np.testing.assert_allclose(jacobian(linear(A), np.array([0.3, -1.2])), A, atol=1e-8)


def test_jacobian_hand_derivative():
    F = VectorField(lambda x: np.stack([-x[..., 0] ** 2, x[..., 1]], axis=-1), 2)
    np.testing.assert_allclose(jacobian(F, np.array([1.5, 2.0])), np.diag([-3.0, 1.0]), atol=1e-7)


def test_jacobian_non_analytic_bump():
    # d/dx (1 + e^{-1/x^2}) = 2 x^{-3} e^{-1/x^2}; at -1/2 this is -16 e^{-4}
    J = jacobian(bump_field(), np.array([-0.5]))
    assert J[0, 0] == pytest.approx(-16 * np.exp(-4), rel=1e-6)


def test_fd_jacobian_vs_analytic():
    F = affine_fields()[0]
    G = VectorField(F.rhs, 1)
    D = jacobian(F, np.array([0.4]))
    assert np.max(np.abs(jacobian(G, np.array([0.4])) - D)) <= 1e-5 * (1 + np.abs(D).max())


def test_lie_bracket_commutator():
    A = linear([[0, 1], [0, 0]])
    B = linear([[0, 0], [1, 0]])
    np.testing.assert_allclose(lie_bracket(A, B, np.array([1.0, 1.0])), [-1.0, 1.0], atol=1e-8)


def test_lie_bracket_trivial_cases():
    C = constant_fields()
    assert np.allclose(lie_bracket(C[0], C[1], np.array([0.3])), 0.0)
    F = bump_field()
    assert np.allclose(lie_bracket(F, F, np.array([-0.4])), 0.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_bracket_antisymmetry(a, b):
    F = VectorField(lambda x: np.stack([np.sin(x[..., 1]), x[..., 0] * x[..., 1]], axis=-1), 2)
    G = VectorField(lambda x: np.stack([x[..., 0] ** 2, np.cos(x[..., 0])], axis=-1), 2)
    x = np.array([a, b])
    assert np.max(np.abs(lie_bracket(F, G, x) + lie_bracket(G, F, x))) <= 1e-5


def test_strong_rank_non_analytic():
    fields = [VectorField(lambda x: np.ones_like(np.asarray(x, float)), 1), bump_field()]
    assert bracket_rank(fields, np.array([-0.5]), "strong").rank == 1
    assert bracket_rank(fields, np.array([0.5]), "strong").rank == 0


def test_identical_fields_rank_zero():
    F = affine_fields()[0]
    assert bracket_rank([F, F], np.array([0.3]), "strong").rank == 0


def test_weak_rank_linear_pair():
    A = linear([[0, 1], [0, 0]])
    B = linear([[0, 0], [1, 0]])
    assert bracket_rank([A, B], np.array([1.0, 0.0]), "weak").rank == 2


def test_depth_budget():
    # fields tangent to a plane never reach rank 3, so the family keeps growing
    mats = []
    for k in range(4):
        A = np.random.default_rng(k).standard_normal((3, 3))
        A[2, :] = 0.0
        mats.append(A)
    with pytest.raises(DepthBudgetExceeded):
        bracket_rank([linear(A) for A in mats], np.array([1.0, 0.5, 0.0]), "weak", depth=6, budget=200)


def test_numerical_rank():
    assert numerical_rank(np.eye(3)) == 3
    assert numerical_rank(np.array([[1.0, 2.0], [2.0, 4.0]])) == 1
    assert numerical_rank(np.zeros((2, 2))) == 0


def test_submersion_jacobian_constant_fields():
    # Psi(v) = x + v - (T - v) = x + 2 v - T
    J = submersion_jacobian(constant_fields(), np.array([0.0]), [0.4], [0, 1], 1.0)
    assert J.shape == (1, 1) and J[0, 0] == pytest.approx(2.0, abs=1e-6)
    F = affine_fields()[0]
    J0 = submersion_jacobian([F, F], np.array([0.3]), [0.4], [0, 1], 1.0)
    assert numerical_rank(J0, atol=1e-6) == 0


def test_submersion_domain():
    with pytest.raises(DomainViolation):
        submersion_jacobian(constant_fields(), np.array([0.0]), [1.5], [0, 1], 1.0)


def test_compact_sets():
    B = Box([0, 0], [1, 2])
    assert B.contains(np.array([0.5, 2.0])) and not B.contains(np.array([1.1, 0.0]))
    ball = Ball([0.0, 0.0], 1.0)
    pts = ball.sample(200, np.random.default_rng(0))
    assert np.all(ball.contains(pts))


def test_composite_flow_lipschitz_bound():
    fields = affine_fields()
    T = 2.0
    C, L = lipschitz_constants(fields, Box([0], [1]), T)
    rng = np.random.default_rng(1)
    idx = (0, 1, 0)
    for _ in range(50):
        x, y = rng.random(1), rng.random(1)
        u = rng.dirichlet(np.ones(3)) * T * rng.random()
        v = rng.dirichlet(np.ones(3)) * T * rng.random()
        a = composite_flow(fields, ControlSequence(tuple(u), idx), x)
        b = composite_flow(fields, ControlSequence(tuple(v), idx), y)
        assert np.linalg.norm(a - b) <= C * np.exp(L * T) * (np.abs(u - v).sum() + np.linalg.norm(x - y)) + 1e-12
