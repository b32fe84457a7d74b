import math

import numpy as np
import pytest
from scipy import stats

from authsim import pla
from authsim.channel import PilotSchedule, ScenarioParams, complex_normal, generate_trace, stream
from authsim.numerics import gls_mse, noncentral_chi2_cdf


def params(**kw):
    base = dict(M=2, alpha=0.9, beta1=0.5, beta2=0.7, sigma_A=0.1, sigma_B=0.1, sigma_E=0.2,
                schedule=PilotSchedule.preset("pla-default", 3), seed=4)
    base.update(kw)
    return ScenarioParams(**base)


def test_residual_variance_examples():
    with pytest.raises(pla.DegenerateVarianceError):
        pla.residual_variance(3, params(alpha=1.0, sigma_A=0.0))
    assert pla.residual_variance(2, params(alpha=0.0, sigma_A=0.0)) == 1.0
    p = params(alpha=0.9, sigma_A=0.1)
    assert pla.residual_variance(3, p, "literal") == pytest.approx(0.01 + 0.19 * 0.81)
    with pytest.raises(ValueError):
        pla.residual_variance(1, p)


def test_residual_variance_monte_carlo():
    p = params(M=1)
    tr = generate_trace(p, stream(1, 0), batch=(1_000_000,))
    r = tr.hA_hat[3][:, 0] - p.alpha ** 2 * tr.hA_hat[1][:, 0]
    assert np.mean(np.abs(r) ** 2) == pytest.approx(pla.residual_variance(3, p), rel=0.01)


def test_statistic_examples():
    p = params(M=1, alpha=math.sqrt(0.5), sigma_A=0.0)
    assert pla.residual_variance(2, p) == pytest.approx(0.5)
    h1 = np.array([0.3 - 0.2j])
    s = pla.test_statistic(p.alpha * h1 + 1.0, h1, 2, p)
    assert s.value == pytest.approx(2.0)
    assert s.normalized == pytest.approx(4.0)
    assert pla.test_statistic(p.alpha * h1, h1, 2, p).value == 0.0
    off = pla.noncentrality(p.alpha * h1 + math.sqrt(0.5), h1, 2, p)
    assert off.value == pytest.approx(1.0)


def test_decide():
    assert pla.decide(0.0, 0.3)
    assert not pla.decide(1.0, 1.0)
    assert not pla.decide(2.0, 1.0)


@pytest.mark.parametrize("N,alpha,sigma_A,t", [(1, 0.9, 0.1, 3), (4, 0.0, 0.1, 3), (4, 0.99, 0.0, 5)])
def test_h0_statistic_is_chi_square(N, alpha, sigma_A, t):
    p = params(M=int(math.isqrt(N)), alpha=alpha, sigma_A=sigma_A,
               schedule=PilotSchedule.preset("pla-default", t))
    tr = generate_trace(p, stream(2, 0), batch=(100_000,))
    psi = pla.test_statistic(tr.hA_hat[t], tr.hA_hat[1], t, p).normalized
    ks = stats.kstest(psi, lambda x: stats.chi2.cdf(x, 2 * N)).statistic
    assert ks < 0.01


def test_fa_probability_limits():
    assert pla.fa_probability(0.0, 3) == 1.0
    assert pla.fa_probability(math.inf, 3) == 0.0
    assert pla.fa_probability(1.2, 4) == pytest.approx(1 - stats.chi2.cdf(9.6, 8), abs=1e-12)
    with pytest.raises(ValueError):
        pla.fa_probability(1.0, 4, "literal")


def test_fa_probability_monte_carlo():
    p = params(M=2)
    tr = generate_trace(p, stream(3, 0), batch=(100_000,))
    psi = pla.test_statistic(tr.hA_hat[3], tr.hA_hat[1], 3, p).value
    emp = np.mean(~pla.decide(psi, 1.2))
    exact = pla.fa_probability(1.2, 4)
    assert abs(emp - exact) < 3 * math.sqrt(exact * (1 - exact) / psi.size)


def test_md_probability_limits():
    assert pla.md_probability(0.0, 2.0, 2) == 0.0
    assert pla.md_probability(50.0, 0.0, 2) == pytest.approx(1.0)
    grid = pla.md_probability(np.array([0.5, 1.0]), np.array([0.0, 3.0]), 2)
    assert grid.shape == (2, 2)
    assert grid[1, 1] == pytest.approx(noncentral_chi2_cdf(4.0, 4, 3.0))


def test_md_conditional_rate():
    p = params(M=1 + 1)
    rng = np.random.default_rng(9)
    h1 = complex_normal(rng, (4,))
    forged = p.alpha ** 2 * h1 + 0.4 * complex_normal(rng, (4,))
    ncp = pla.noncentrality(forged, h1, 3, p).normalized
    n = 100_000
    att = pla.attacked_estimate(np.broadcast_to(forged, (n, 4)), 3, p, stream(0, 1))
    emp = np.mean(pla.decide(pla.test_statistic(att, h1, 3, p).value, 1.3))
    exact = pla.md_probability(1.3, ncp, 4)
    assert abs(emp - exact) < 3 * math.sqrt(exact * (1 - exact) / n)


def test_md_physical_matches_monte_carlo():
    p = params(M=1)
    h1 = np.array([0.2 + 0.5j])
    forged = p.alpha ** 2 * h1 + 0.15
    gamma2 = pla.residual_variance(3, p)
    ncp = pla.noncentrality(forged, h1, 3, p).normalized
    n = 200_000
    att = pla.attacked_estimate(np.broadcast_to(forged, (n, 1)), 3, p, stream(0, 2), "physical")
    emp = np.mean(pla.decide(pla.test_statistic(att, h1, 3, p).value, 0.1))
    exact = pla.md_probability_physical(0.1, ncp, 1, gamma2, p.sigma_A)[0, 0]
    assert abs(emp - exact) < 3 * math.sqrt(exact * (1 - exact) / n) + 1e-12


def test_build_regression_single_bob_slot():
    p = params()
    m = pla.build_regression(PilotSchedule.preset("pla-default", 1), p)
    assert m.w.tolist() == [pytest.approx(0.7)]
    assert m.K[0, 0] == pytest.approx(0.04 + 1 - 0.49)


def test_build_regression_uses_transmitter_beta():
    p = params(alpha=0.8)
    m = pla.build_regression(PilotSchedule.preset("pla-default", 4), p)
    np.testing.assert_allclose(m.w, [0.7, 0.5 * 0.8, 0.7 * 0.64, 0.5 * 0.512])


def test_forge_noiseless_copies():
    p = params(alpha=1.0, beta1=1.0, beta2=1.0, sigma_E=0.0, sigma_A=0.1)
    tr = generate_trace(p, stream(0, 5), batch=(3,))
    forged = pla.forge_channel(pla.eve_observations(tr, p, 2), 3, p.alpha)
    np.testing.assert_allclose(forged, tr.h[:, 0], atol=1e-12)


def test_forge_single_observation():
    p = params(beta2=0.6, sigma_E=0.0, schedule=PilotSchedule.preset("pla-default", 1))
    tr = generate_trace(p, stream(0, 6))
    stack = pla.eve_observations(tr, p, 1)
    np.testing.assert_allclose(pla.forge_channel(stack, 1, p.alpha), tr.gE_hat[1] / 0.6)


def test_forge_mse_and_dominance():
    p = params(M=1, schedule=PilotSchedule.preset("pla-default", 4))
    tr = generate_trace(p, stream(0, 7), batch=(100_000,))
    stack = pla.eve_observations(tr, p, 4)
    est = pla.forge_channel(stack, 1, p.alpha)
    mse = np.mean(np.abs(est - tr.h[:, 0]) ** 2)
    assert mse == pytest.approx(gls_mse(stack.model), rel=0.02)
    latest = tr.gE_hat[4] / stack.model.w[-1]
    assert mse <= np.mean(np.abs(latest - tr.h[:, 0]) ** 2)


def test_more_slots_never_hurt():
    p = params(alpha=0.95)
    two = gls_mse(pla.build_regression(PilotSchedule.preset("pla-default", 2), p))
    for T in range(3, 8):
        assert gls_mse(pla.build_regression(PilotSchedule.preset("pla-default", T), p)) <= two + 1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        pla.PlaConfig(theta=0.0)
    with pytest.raises(ValueError):
        pla.PlaConfig(theta=1.0, t=1)
    with pytest.raises(ValueError):
        pla.PlaConfig(theta=1.0, variance_mode="other")
