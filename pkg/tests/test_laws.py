import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semiswitch.errors import ConfigError, NoDensity, NoExpDecay
from semiswitch.laws import (AtomMixture, Dirac, Exponential, ShiftedExponential, SurvivalLaw,
                             Table, Uniform, UniformMixture, law_from_dict, rational_atoms,
                             rationals_in_unit_interval)

CONTINUOUS = [Exponential(1.0), Exponential(2.5), Uniform(0, 2), Uniform(0.5, 1.5),
              ShiftedExponential(1.0, 2.0), UniformMixture([(0, 1, 0.5), (2, 3, 0.5)])]


@pytest.mark.parametrize("law", CONTINUOUS + [Dirac(1.0), AtomMixture([1, 2], [1, 1])])
def test_survival_basic_shape(law):
    t = np.linspace(0, 20, 2001)
    G = law.survival(t)
    assert G[0] == 1.0
    assert np.all(np.diff(G) <= 1e-15)
    assert law.survival(1e6) < 1e-12


@pytest.mark.parametrize("law", CONTINUOUS)
def test_density_matches_survival_derivative(law):
    t = np.linspace(0.05, 4, 97)
    t = t[np.min(np.abs(t[:, None] - np.array([0.5, 1, 1.5, 2, 3])), axis=1) > 1e-3]
    h = 1e-6
    fd = -(law.survival(t + h) - law.survival(t - h)) / (2 * h)
    np.testing.assert_allclose(law.density(t), fd, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 1.0, exclude_min=False))
def test_isf_roundtrip_continuous(u):
    for law in CONTINUOUS:
        r = float(law.isf(u))
        assert law.survival(r) <= u * (1 + 1e-12)
        if r > 1e-7:
            assert law.survival(r - 1e-8) > u * (1 - 1e-12)


def test_isf_infimum_at_steps():
    law = AtomMixture([1.0, 2.0], [0.5, 0.5])
    assert law.isf(0.6) == 1.0
    assert law.isf(0.4) == 2.0
    assert law.isf(0.5) == 1.0
    assert law.isf(1.0) == 0.0


def test_exponential_isf():
    assert Exponential(1.0).isf(np.exp(-2)) == pytest.approx(2.0)


def test_uniform_isf_and_tbar():
    law = Uniform(0, 2)
    assert law.isf(0.25) == pytest.approx(1.5)
    assert law.tbar == 2.0 and law.survival(2.0) == 0.0 and law.survival(1.999) > 0


def test_atomic_law_has_no_density():
    with pytest.raises(NoDensity):
        Dirac(1.0).density(0.5)
    with pytest.raises(NoDensity):
        rational_atoms(8).density(0.5)


def test_atom_at_zero_rejected():
    with pytest.raises(ConfigError):
        Dirac(0.0)


def test_table_right_continuous():
    law = Table([1.0, 2.0, 3.0], [0.7, 0.2, 0.0])
    assert law.survival(0.999) == 1.0
    assert law.survival(1.0) == pytest.approx(0.7)
    assert law.survival(2.5) == pytest.approx(0.2)
    assert law.isf(0.5) == 2.0


def test_survival_law_generic_isf():
    law = SurvivalLaw(lambda t: np.exp(-np.asarray(t) ** 2), intervals=[(0, np.inf)])
    assert law.isf(np.exp(-4)) == pytest.approx(2.0, abs=1e-9)


def test_rationals_enumeration():
    qs = rationals_in_unit_interval(6)
    assert [str(q) for q in qs] == ["1", "1/2", "1/3", "2/3", "1/4", "3/4"]
    law = rational_atoms(64)
    assert law.atoms.size == 64 and abs(law.atom_weights.sum() - 1) < 1e-15
    assert np.all((law.atoms > 0) & (law.atoms <= 1))


def test_support_queries():
    law = UniformMixture([(0, 1, 0.5), (2, 3, 0.5)])
    assert law.in_support(0.5) and not law.in_support(1.5) and law.in_support(2.0)
    assert law.support_point_below(1.7) == 1.0
    assert Uniform(1, 2).support_point_below(0.5) is None
    assert law.support_min == 0.0


def test_exp_decay_gate():
    Exponential(1.0).check_exp_decay(1.0, 1.0)
    Uniform(0, 2).check_exp_decay(np.e ** 2, 1.0)
    with pytest.raises(NoExpDecay):
        Exponential(0.5).check_exp_decay(1.0, 1.0)


def test_expect_with_atoms():
    law = AtomMixture([1.0, 2.0], [0.25, 0.75])
    assert law.expect(lambda t: t) == pytest.approx(1.75)
    assert Exponential(1.0).expect(lambda t: t) == pytest.approx(1.0)


@pytest.mark.parametrize("spec", [
    {"kind": "exponential", "rate": 2},
    {"kind": "uniform", "a": 0, "b": 2},
    {"kind": "shifted_uniform", "shift": 1, "b": 1},
    {"kind": "uniform_mixture", "components": [[0, 1, 1], [2, 3, 1]]},
    {"kind": "dirac", "t": 1},
    {"kind": "atom_mixture", "atoms": [[1, 0.5], [2, 0.5]]},
    {"kind": "rational_atoms", "count": 10},
    {"kind": "shifted_exponential", "shift": 1, "rate": 1},
    {"kind": "table", "t": [1, 2], "G": [0.5, 0]},
])
def test_law_from_dict(spec):
    law = law_from_dict(spec)
    assert law.survival(0.0) == 1.0


def test_law_from_dict_errors():
    with pytest.raises(ConfigError):
        law_from_dict({"kind": "gamma"})
    with pytest.raises(ConfigError):
        law_from_dict({"kind": "uniform", "a": 0})
