import numpy as np
import pytest
from scipy import stats

from conftest import affine_fields, constant_fields, two_state
from semiswitch.config import load_scenario
from semiswitch.dynamics import Box
from semiswitch.errors import AxisMismatch, DegenerateThreshold
from semiswitch.estimators import (Histogram, LVParams, convergence_diagnostic, dwell_threshold,
                                   excursion_bound, invasion_rate, logistic_field,
                                   occupation_measure, tv_distance)
from semiswitch.laws import Dirac, Exponential, Uniform
from semiswitch.switching import HybridState


def hist_1d(mass):
    """Histogram with one x bin, one tau bin and len(mass) discrete states."""
    edges = [np.array([0.0, 1.0]), np.array([0.0, 1.0])]
    return Histogram(edges, len(mass), np.asarray(mass, float).reshape(1, 1, -1))


# --- histograms and TV --------------------------------------------------

def test_tv_identical_is_zero():
    h = hist_1d([3, 5])
    assert tv_distance(h, h) == 0.0


def test_tv_disjoint_is_one():
    assert tv_distance(hist_1d([1, 0]), hist_1d([0, 1])) == pytest.approx(1.0, abs=1e-15)


def test_tv_hand_sum():
    assert tv_distance(hist_1d([0.5, 0.5]), hist_1d([0.25, 0.75])) == pytest.approx(0.25, abs=1e-15)


def test_tv_axis_mismatch():
    h = hist_1d([1, 1])
    other = Histogram([np.array([0.0, 2.0]), np.array([0.0, 1.0])], 2, h.counts.copy())
    with pytest.raises(AxisMismatch):
        tv_distance(h, other)
    with pytest.raises(AxisMismatch):
        tv_distance(h, hist_1d([1, 1, 1]))


def test_histogram_folds_out_of_range_and_normalizes():
    edges = [np.linspace(0, 1, 5), np.linspace(0, 2, 3)]
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 2, 500)
    tau = rng.uniform(0, 3, 500)
    i = rng.integers(0, 2, 500)
    h = Histogram.from_samples(x[:, None], tau, i, edges, 2)
    assert h.total == 500
    assert np.all(h.counts >= 0)
    assert abs(h.normalized().sum() - 1) < 1e-12


# --- occupation measure -------------------------------------------------

def test_occupation_frozen_field_point_mass():
    sysm = two_state(constant_fields(0.0, 0.0), [Exponential(1.0)] * 2, compact=Box([-1], [1]))
    h = occupation_measure(sysm, HybridState([0.3], 0.0, 0), 50.0, seed=3, dt=0.1)
    mx = h.marginal(0)
    assert mx.max() == pytest.approx(1.0, abs=1e-12)
    k = int(np.argmax(mx))
    assert h.edges[0][k] <= 0.3 < h.edges[0][k + 1]


def test_occupation_index_marginal_half():
    sysm = two_state(affine_fields(), [Exponential(1.0)] * 2, compact=Box([0], [1]))
    fr = []
    for seed in range(20):
        h = occupation_measure(sysm, HybridState([0.5], 0.0, 0), 300.0, seed=seed, dt=0.05)
        fr.append(h.marginal(2)[0])
    fr = np.array(fr)
    se = fr.std(ddof=1) / np.sqrt(fr.size)
    assert abs(fr.mean() - 0.5) <= 3 * se + 1e-3


def test_occupation_tau_marginal_exponential():
    # one grid point per replica at t=30: independent draws of the age process,
    # whose stationary law for exp(1) holding times is again exp(1)
    sysm = two_state(affine_fields(), [Exponential(1.0)] * 2, compact=Box([0], [1]))
    R = 4000
    h = occupation_measure(sysm, HybridState([0.5], 0.0, 0), 30.0, burn_in=25.0, dt=5.0,
                           replicas=R, seed=7, tau_max=8.0, tau_bins=64)
    p = h.marginal(1)
    e = h.edges[1]
    emp = np.cumsum(p)[:-1]
    exact = stats.expon.cdf(e[1:-1])
    D = float(np.abs(emp - exact).max())
    assert stats.kstwo.sf(D, R) > 1e-3


def test_occupation_replica_mode_pools_time_averages():
    sysm = two_state(affine_fields(), [Exponential(1.0)] * 2, compact=Box([0], [1]))
    h = occupation_measure(sysm, HybridState([0.5], 0.0, 0), 10.0, replicas=5, dt=0.5)
    assert h.total == 5 * 20


def test_occupation_needs_window():
    sysm = two_state(affine_fields(), [Exponential(1.0)] * 2, compact=Box([0], [1]))
    with pytest.raises(ValueError):
        occupation_measure(sysm, HybridState([0.5], 0.0, 0), 1.0, burn_in=1.0)


@pytest.mark.slow
def test_occupation_inflation_starts_converge():
    sc = load_scenario("inflation")
    vmax = np.arcsinh(1.0)
    za = HybridState([-vmax], 0.0, 0)
    zb = HybridState([vmax], 0.0, 1)
    ha = occupation_measure(sc.system, za, 1e4, seed=11)
    hb = occupation_measure(sc.system, zb, 1e4, seed=12)
    assert tv_distance(ha, hb) <= 0.05


# --- convergence diagnostic ---------------------------------------------

def test_diagnostic_zero_at_time_zero():
    sysm = two_state(affine_fields(), [Exponential(1.0)] * 2, compact=Box([0], [1]))
    z = HybridState([0.4], 0.0, 1)
    rows = convergence_diagnostic(sysm, z, z, [0.0, 1.0], replicas=200, seed=1)
    assert rows[0]["t"] == 0.0 and rows[0]["tv"] == 0.0
    assert set(rows[0]) == {"t", "tv", "stderr"}


def test_diagnostic_non_irreducible_stays_singular():
    sc = load_scenario("non-irreducible")
    za = HybridState([0.5, 0.2], 0.0, 0)
    zb = HybridState([0.5, 0.8], 0.0, 0)
    rows = convergence_diagnostic(sc.system, za, zb, [5.0, 20.0], replicas=300, seed=2)
    assert all(r["tv"] >= 0.99 for r in rows)


# --- Lotka-Volterra face ------------------------------------------------

def lv(alpha=(1.0, 1.0), a=(1.0, 0.25), beta=(1.0, 1.0), c=(1.5, 0.5)):
    return LVParams(alpha=alpha, a=a, beta=beta, b=(1.0, 1.0), c=c, d=(1.0, 1.0))


def test_delta1_canonical():
    assert dwell_threshold(lv(a=(1.0, 0.5), c=(1.0, 1.0))) == pytest.approx(2 * np.log(2), abs=1e-12)


def test_delta1_equal_carrying_capacities():
    assert dwell_threshold(lv(a=(0.5, 0.5), c=(1.0, 1.0))) == 0.0


def test_delta1_alpha_scaling():
    base = dwell_threshold(lv())
    assert dwell_threshold(lv(alpha=(1.0, 2.0))) == pytest.approx(base / 2, rel=1e-12)


def test_delta1_degenerate():
    with pytest.raises(DegenerateThreshold):
        dwell_threshold(lv(c=(1.5, 0.2)))  # c1 p1 = 0.8


def test_excursion_bound_threshold_and_sign():
    P = lv()
    d1 = dwell_threshold(P)
    assert excursion_bound(P, d1) == pytest.approx(0.0, abs=1e-12)
    assert excursion_bound(P, d1 + 0.5) < 0


def test_excursion_bound_dominates_quadrature():
    from scipy.integrate import quad
    P = lv()
    p0 = P.p[0]
    F = logistic_field(P.alpha[1], P.a[1])
    for T in np.linspace(0.2, 8.0, 12):
        val, _ = quad(lambda t: P.beta[1] * (1 - P.c[1] * F.flow(t, np.array([p0]))[0]),
                      0.0, T, epsabs=1e-12)
        assert val <= excursion_bound(P, T) + 1e-10


def test_invasion_negative_when_h_negative_everywhere():
    P = lv(c=(2.0, 2.0))  # q1 = 0.5 < p0 = 1
    est = invasion_rate(P, [Uniform(0.5, 1.5), Uniform(0.5, 1.5)], 500.0, seed=1)
    assert est.ci_high < 0


def test_invasion_frozen_environment():
    P = lv()
    p0 = P.p[0]
    est = invasion_rate(P, [Dirac(1e9), Dirac(1.0)], 200.0, seed=0, z0=HybridState([p0], 0.0, 0))
    exact = P.beta[0] * (1 - P.c[0] * p0)
    assert abs(est.rate - exact) <= max(3 * est.stderr, 1e-12)


def test_invasion_long_dwell_excursions_nonpositive():
    P = lv()
    d1 = dwell_threshold(P)
    est = invasion_rate(P, [Uniform(0.5, 1.5), Uniform(d1 + 0.1, d1 + 1.1)], 2000.0, seed=4)
    assert est.rate < 0
    assert est.excursions.size > 100
    assert np.all(est.excursions <= 1e-8)
    assert np.all(est.durations >= d1)


def _ci_slope(laws, seed):
    P = lv()
    Ts = np.array([1e3, 1e4, 1e5])
    se = np.array([invasion_rate(P, laws, T, seed=seed).stderr for T in Ts])
    return np.polyfit(np.log(Ts), np.log(se), 1)[0]


@pytest.mark.slow
def test_invasion_ci_shrinks_like_inverse_sqrt():
    slope = _ci_slope([Exponential(1.0), Exponential(1.0)], seed=5)
    assert -0.65 <= slope <= -0.35


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="near-periodic dwell cycles: batches of length T/50 "
                   "are pre-asymptotic at T=1e3 and the fitted slope is about -0.7")
def test_invasion_ci_slope_long_dwell_laws():
    d1 = dwell_threshold(lv())
    slope = _ci_slope([Uniform(0.5, 1.5), Uniform(d1 + 0.1, d1 + 1.1)], seed=5)
    assert -0.65 <= slope <= -0.35
