import numpy as np
import pytest

from sirgame.costs import cost_report
from sirgame.dynamics import (NonFiniteError, exposure_F, exposure_two_point, exposure_two_point_batch,
                              integrate, integrate_atoms, integrate_two_point)
from sirgame.model import DiscreteProfile, TwoPointProfile, example_params, profile_from_two_point

P1 = example_params(1)


def _mixed_profile(p):
    return DiscreteProfile.build(p, [0.1, 0.4, 0.9], [0.5, 1.0, 0.5], [0.1, 0.7], [0.3, 0.2])


def test_no_seed_no_epidemic():
    # at T=50 the outbreak is supercritical and grows from 1e-12 to F ~ 1e-4,
    # so the vanishing-seed limit is checked on a shorter horizon
    p = P1.with_(I0=1e-12, T=10.0)
    traj = integrate(p, _mixed_profile(p))
    assert traj.F < 1e-6
    assert traj.S[-1].min() >= 1 - 1e-6


def test_r_zero_closed_form():
    p = P1.with_(r=0.0, alpha2=0.5)
    prof = _mixed_profile(p)
    traj = integrate(p, prof)
    t = traj.times
    for k, j in enumerate(traj.types):
        a = p.alpha[j - 1]
        np.testing.assert_allclose(traj.I[:, k], p.I0 * np.exp(-a * t), rtol=1e-7)
        np.testing.assert_allclose(traj.S[:, k], 1 - p.I0, rtol=0, atol=1e-15)
    z = sum(p.n[j - 1] * prof.mean_action(j) * p.I0 * (1 - np.exp(-p.alpha[j - 1] * p.T)) / p.alpha[j - 1]
            for j in (1, 2))
    assert traj.z[-1] == pytest.approx(z, rel=1e-9)
    assert traj.F == 0.0


def test_more_contact_more_exposure():
    assert exposure_two_point(P1, 0.0, 0.0) < exposure_two_point(P1, 1.0, 1.0)


def test_row_02_cost_from_trajectory():
    p = example_params(1, G1=0.2)
    rep = cost_report(p, profile_from_two_point(p, TwoPointProfile(1, 1)))
    assert rep.Jbar1 == pytest.approx(-1.83, abs=0.02)


@pytest.mark.parametrize("which", [1, 2, 3])
def test_invariants(which):
    p = example_params(which)
    traj = integrate(p, _mixed_profile(p))
    assert traj.S.min() >= -1e-9 and traj.S.max() <= 1 + 1e-9
    assert traj.I.min() >= -1e-9 and traj.I.max() <= 1 + 1e-9
    assert np.all(np.diff(traj.S, axis=0) <= 1e-12)
    assert np.all(np.diff(traj.z) >= 0) and traj.z[0] == 0
    assert traj.If.min() >= 0 and traj.If.max() <= (p.n1 + p.n2) * p.u_M


def test_support_dominance():
    traj = integrate(P1, _mixed_profile(P1))
    S1 = traj.S[:, traj.types == 1]
    assert np.all(np.diff(S1, axis=1) <= 1e-15)


def test_closed_form_susceptible():
    traj = integrate(P1, _mixed_profile(P1))
    expected = (1 - P1.I0) * np.exp(-traj.actions * traj.F)
    np.testing.assert_allclose(traj.S[-1], expected, rtol=1e-6)


def test_order_of_convergence():
    tp = (1.0, 0.395)
    ref = exposure_two_point_batch(P1, *tp, steps=32000)[0]
    errs = [abs(exposure_two_point_batch(P1, *tp, steps=n)[0] - ref) for n in (250, 500, 1000)]
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 3.5, orders


def _mass_scaled_If(p, t1, t2, steps):
    # states scaled by mass, as in the two-point system with (1 - tilde) folded into initial values
    u = np.array([p.u_m, p.u_M, p.u_m, p.u_M])
    m = np.array([(1 - t1) * p.n1, t1 * p.n1, (1 - t2) * p.n2, t2 * p.n2])
    a = np.array([p.alpha1, p.alpha1, p.alpha2, p.alpha2])
    x = np.concatenate([m * (1 - p.I0), m * p.I0])

    def f(x):
        S, I = x[:4], x[4:]
        If = np.dot(u, I)
        inf = p.r * u * S * If
        return np.concatenate([-inf, inf - a * I])

    h = p.T / steps
    out = [np.dot(u, x[4:])]
    for _ in range(steps):
        k1 = f(x); k2 = f(x + h / 2 * k1); k3 = f(x + h / 2 * k2); k4 = f(x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(np.dot(u, x[4:]))
    return np.array(out)


def test_matches_mass_scaled_formulation():
    t1, t2 = 0.3, 0.7
    traj = integrate_atoms(P1, [P1.u_m, P1.u_M, P1.u_m, P1.u_M],
                           [(1 - t1) * 2, t1 * 2, (1 - t2) * .5, t2 * .5], [1, 1, 2, 2], steps=1000)
    np.testing.assert_allclose(traj.If, _mass_scaled_If(P1, t1, t2, 1000), rtol=1e-10, atol=1e-14)


def test_two_point_collapses_to_same_F():
    traj = integrate_two_point(P1, TwoPointProfile(1.0, 0.0))
    assert traj.F == pytest.approx(exposure_two_point(P1, 1.0, 0.0), rel=1e-12)


def test_coarse_step_raises():
    p = P1.with_(r=200.0)
    with pytest.raises(NonFiniteError):
        exposure_F(p, _mixed_profile(p), steps=10)


def test_too_few_steps():
    with pytest.raises(ValueError):
        integrate(P1, _mixed_profile(P1), steps=5)


def test_csv_header():
    traj = integrate(P1, DiscreteProfile.dirac(P1, 0.44, 0.29), steps=20)
    head = traj.to_csv().splitlines()[0]
    assert head == "time,I_f,z,S_1_u0.44,S_2_u0.29,I_1_u0.44,I_2_u0.29"
    assert len(traj.to_csv().splitlines()) == 22


def test_zero_mass_probe_is_passive():
    base = integrate_atoms(P1, [0.44, 0.29], [2, .5], [1, 2])
    probed = integrate_atoms(P1, [0.44, 0.29, 0.7], [2, .5, 0.0], [1, 2, 1])
    np.testing.assert_array_equal(base.z, probed.z)
