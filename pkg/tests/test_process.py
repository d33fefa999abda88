import numpy as np
import pytest
from scipy import stats

from conftest import affine_fields, constant_fields, two_state
from semiswitch.dynamics import Box
from semiswitch.errors import JumpBudgetExceeded, NotInK, OutOfRange
from semiswitch.laws import Dirac, Exponential, Uniform
from semiswitch.process import (expected_jump_bound, in_K_M, jump_count, sample_states,
                                simulate, simulate_many, state_at, states_on_grid,
                                trajectory_rows)
from semiswitch.switching import HybridState, in_K


def test_in_K_M_example(uniform_system):
    assert in_K_M(uniform_system, HybridState([0.5], 0.6, 0))
    assert not in_K_M(uniform_system, HybridState([0.5], 0.7, 0))
    assert in_K_M(uniform_system, HybridState([0.9], 0.0, 1))
    assert not in_K_M(uniform_system, HybridState([1.2], 0.0, 1))


def test_marks_structure(uniform_system):
    rec = simulate(uniform_system, HybridState([0.3], 0.5, 0), 20.0, seed := 3)
    assert rec.times[0] == 0.0 and np.all(np.diff(rec.times) > 0)
    assert rec.taus[0] == 0.5 and np.all(rec.taus[1:] == 0)
    assert np.all(rec.states[1:] != rec.states[:-1])
    assert rec.seed == seed
    assert jump_count(rec, rec.t_end) == rec.n_jumps


def test_path_stays_in_K_M(uniform_system):
    for r in range(20):
        rec = simulate(uniform_system, HybridState([0.3], 0.2, 0), 15.0, 11, replica=r,
                       grid=np.linspace(0, 15, 301))
        g = rec.grid
        for x, s, i in zip(g["x"], g["tau"], g["i"]):
            assert in_K_M(uniform_system, HybridState(x, s, i), tol=1e-12)


def test_continuity_at_jumps(uniform_system):
    rec = simulate(uniform_system, HybridState([0.3], 0.0, 0), 10.0, 5)
    for k in range(1, rec.n_jumps + 1):
        left = uniform_system.flow(rec.states[k - 1], rec.times[k] - rec.times[k - 1], rec.xs[k - 1])
        assert np.allclose(left, rec.xs[k], atol=1e-12)


def test_tau_dynamics(uniform_system):
    rec = simulate(uniform_system, HybridState([0.3], 0.4, 0), 10.0, 2)
    grid = np.linspace(0, 10, 101)
    g = states_on_grid(rec, grid)
    k = np.searchsorted(rec.times, grid, side="right") - 1
    expect = np.where(k == 0, 0.4 + grid, grid - rec.times[k])
    np.testing.assert_allclose(g["tau"], expect, atol=1e-12)


def test_state_at(uniform_system):
    z0 = HybridState([0.3], 0.1, 1)
    rec = simulate(uniform_system, z0, 5.0, 0)
    z = state_at(rec, 0.0)
    assert np.allclose(z.x, z0.x) and z.s == z0.s and z.i == z0.i
    if rec.n_jumps:
        z1 = state_at(rec, rec.times[1])
        assert np.allclose(z1.x, rec.xs[1]) and z1.s == 0.0 and z1.i == rec.states[1]
    with pytest.raises(OutOfRange):
        state_at(rec, 6.0)


def test_jump_count_edges(uniform_system):
    rec = simulate(uniform_system, HybridState([0.3], 0.0, 0), 20.0, 8)
    assert jump_count(rec, 0.5 * rec.times[1]) == 0
    assert jump_count(rec, rec.times[1]) == 1


def test_single_segment_when_horizon_short():
    sysm = two_state(affine_fields(), [Dirac(5.0), Dirac(5.0)])
    rec = simulate(sysm, HybridState([0.3], 0.0, 0), 4.0, 0)
    assert rec.n_jumps == 0 and rec.next_jump == pytest.approx(5.0)


def test_feller_dirac_first_jump():
    sysm = two_state(affine_fields(), [Dirac(1.0), Exponential(1.0)])
    for s in (0.0, 0.25, 0.9):
        rec = simulate(sysm, HybridState([0.5], s, 0), 3.0, 0)
        assert rec.times[1] == pytest.approx(1 - s, abs=1e-12)
    assert not in_K(sysm, HybridState([0.5], 1.0, 0))


def test_not_in_K_start(uniform_system):
    with pytest.raises(NotInK):
        simulate(uniform_system, HybridState([0.3], 2.5, 0), 1.0, 0)


def test_jump_budget():
    sysm = two_state(affine_fields(), [Exponential(1.0), Exponential(1.0)], rates=(1e3, 1e3))
    with pytest.raises(JumpBudgetExceeded):
        simulate(sysm, HybridState([0.3], 0.0, 0), 10.0, 0, jump_cap=100)


def test_batch_matches_scalar(uniform_system):
    z0 = HybridState([0.3], 0.2, 0)
    times = np.array([0.5, 3.0, 7.0])
    ps = sample_states(uniform_system, z0, times, 30, seed=4)
    for r in range(30):
        rec = simulate(uniform_system, z0, 7.0, 4, replica=r, grid=times)
        np.testing.assert_allclose(ps.x[r], rec.grid["x"], atol=1e-12)
        np.testing.assert_array_equal(ps.i[r], rec.grid["i"])
        np.testing.assert_allclose(ps.tau[r], rec.grid["tau"], atol=1e-12)


def test_thread_count_independent(uniform_system):
    z0 = HybridState([0.3], 0.0, 0)
    a = simulate_many(uniform_system, z0, 5.0, 8, seed=1, threads=1)
    b = simulate_many(uniform_system, z0, 5.0, 8, seed=1, threads=4)
    for ra, rb in zip(a, b):
        np.testing.assert_array_equal(ra.times, rb.times)


def test_poisson_jump_count(exp_system):
    ps = sample_states(exp_system, HybridState([0.3], 0.0, 0), [10.0], 10_000, seed=0)
    assert abs(ps.jumps[:, 0].mean() - 10.0) < 0.1 * 3


def test_expected_jump_bound(exp_system, uniform_system):
    b0, _ = expected_jump_bound(exp_system, 0.0)
    assert b0 == 1.0
    b, se = expected_jump_bound(exp_system, 10.0)
    assert abs(b - 11.0) < 3 * se + 0.05
    ps = sample_states(uniform_system, HybridState([0.3], 0.0, 0), [10.0], 4000, seed=2)
    bu, seu = expected_jump_bound(uniform_system, 10.0)
    mean = ps.jumps[:, 0].mean()
    assert mean <= bu + 3 * np.hypot(seu, ps.jumps[:, 0].std() / np.sqrt(4000))


def test_exponential_offset_invariance(exp_system):
    a = sample_states(exp_system, HybridState([0.3], 0.0, 0), [2.0], 20_000, seed=1)
    b = sample_states(exp_system, HybridState([0.3], 3.0, 0), [2.0], 20_000, seed=2)
    assert stats.ks_2samp(a.x[:, 0, 0], b.x[:, 0, 0]).pvalue > 1e-3


def test_trajectory_rows(uniform_system):
    rec = simulate(uniform_system, HybridState([0.3], 0.0, 0), 1.0, 0)
    rows = trajectory_rows(rec, 0.25)
    assert len(rows) == 5 and rows[0][0] == 0.0 and len(rows[0]) == 4
    assert rec.to_marks_csv().splitlines()[0] == "T_k,x_1,i"
