import numpy as np
import pytest

from sirgame.model import (DiscreteProfile, ModelParams, TwoPointProfile, ValidationError,
                           example_params, profile_from_two_point, validate)


def test_example1_params_valid():
    p = validate(example_params(1))
    assert (p.u_m, p.u_M, p.T, p.r, p.I0) == (0.1, 0.9, 50.0, 2.0, 0.01)
    assert p.n == (2.0, 0.5) and p.alpha == (1.0, 1.0) and p.G == (0.2, 1.0)
    assert p.s == ((2.0, 0.5), (2.0, 0.5))


def test_degenerate_action_interval():
    with pytest.raises(ValidationError) as e:
        validate(example_params(1).with_(u_M=0.1))
    assert any(v.field == "u_M" and v.reason == "must exceed u_m" for v in e.value.violations)


def test_g_ordering():
    with pytest.raises(ValidationError) as e:
        validate(example_params(1).with_(G1=0.5, G2=0.5))
    assert any(v.field == "G2" and v.reason == "must exceed G1" for v in e.value.violations)


def test_all_violations_collected():
    bad = example_params(1).with_(r=-1.0, I0=1.5, n2=0.0, u_M=1.2, s=((2, -1), (0, 0)))
    with pytest.raises(ValidationError) as e:
        validate(bad)
    fields = {v.field for v in e.value.violations}
    assert {"r", "I0", "n2", "u_M", "s[1][2]"} <= fields


def test_nan_rejected():
    with pytest.raises(ValidationError):
        validate(example_params(1).with_(T=float("nan")))


def test_params_hashable_and_s_normalised():
    p = ModelParams(2, 50, .01, .1, .9, 2, .5, 1, 1, .2, 1, [[2, .5], [2, .5]])
    assert p == example_params(1) and hash(p) == hash(example_params(1))


def test_two_point_corner():
    p = example_params(1)
    prof = profile_from_two_point(p, TwoPointProfile(1, 0))
    assert prof.support1 == (0.9,) and prof.mass1 == (2.0,)
    assert prof.support2 == (0.1,) and prof.mass2 == (0.5,)


def test_two_point_even_split():
    p = example_params(1)
    prof = profile_from_two_point(p, TwoPointProfile(0.5, 0.5))
    assert prof.mass1 == (1.0, 1.0) and prof.mass2 == (0.25, 0.25)


def test_two_point_mean_action():
    p = example_params(1)
    prof = profile_from_two_point(p, TwoPointProfile(0, 0.395))
    assert prof.mean_action(2) == pytest.approx(0.1 + 0.8 * 0.395, abs=1e-12)
    assert TwoPointProfile(0, 0.395).mean_actions(p)[1] == pytest.approx(0.416)


def test_tilde_range_checked():
    with pytest.raises(ValueError):
        TwoPointProfile(1.2, 0)


def test_discrete_profile_sorts_and_merges():
    p = example_params(1)
    prof = DiscreteProfile.build(p, [0.5, 0.2, 0.5], [0.5, 1.0, 0.5], [0.3], [0.5])
    assert prof.support1 == (0.2, 0.5) and prof.mass1 == (1.0, 1.0)


@pytest.mark.parametrize("kwargs", [
    dict(support1=[0.2], mass1=[1.9], support2=[0.3], mass2=[0.5]),
    dict(support1=[0.05], mass1=[2.0], support2=[0.3], mass2=[0.5]),
    dict(support1=[0.2, 0.4], mass1=[2.5, -0.5], support2=[0.3], mass2=[0.5]),
])
def test_discrete_profile_rejects(kwargs):
    with pytest.raises(ValueError):
        DiscreteProfile.build(example_params(1), **kwargs)


def test_atoms_layout():
    p = example_params(2)
    u, m, t = DiscreteProfile.dirac(p, 0.3, 0.6).atoms()
    np.testing.assert_array_equal(u, [0.3, 0.6])
    np.testing.assert_array_equal(m, [2.0, 0.5])
    np.testing.assert_array_equal(t, [1, 2])


def test_examples_2_and_3():
    assert example_params(2).s == ((2.0, 0.5), (0.5, 2.0)) and example_params(2).G == (2.0, 2.8)
    assert example_params(3).G == (1.6, 16.0)
    with pytest.raises(ValueError):
        example_params(4)
