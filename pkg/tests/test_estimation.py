import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbdpd.densities import Exponential, Gaussian, sample
from nbdpd.divergences import VSpec
from nbdpd.errors import DomainError, ParameterError
from nbdpd.estimation import (EmpiricalLossSpec, auto_init, empirical_loss, mean_psi, mle, psi,
                              scaled_residual, solve)
from nbdpd.phi import PhiSpec
from nbdpd.verify import bridge_log_bilinear_error, builtin_phis, fd_gradient, gradient_consistency

X_SMALL = np.random.default_rng(8).normal(0.5, 1.3, 300)


def test_zero_gamma_identity_loss_is_negative_log_likelihood():
    spec = EmpiricalLossSpec(X_SMALL, Gaussian, PhiSpec.identity(), 0.0)
    theta = np.array([0.2, 0.1])
    np.testing.assert_allclose(empirical_loss(spec, theta), -np.mean(Gaussian.from_theta(theta).log_pdf(X_SMALL)),
                               rtol=1e-14)


def test_single_point_density_power_loss():
    spec = EmpiricalLossSpec([0.0], Gaussian, PhiSpec.density_power(), 1.0)
    expected = -2 * (2 * math.pi) ** -0.5 + 1 + 1 / (2 * math.sqrt(math.pi))
    np.testing.assert_allclose(empirical_loss(spec, [0.0, 0.0]), expected, rtol=1e-14)


def test_small_gamma_loss_is_continuous():
    theta = np.array([0.3, 0.2])
    for phi in (PhiSpec.identity(), PhiSpec.density_power(), PhiSpec.bridge(0.5, 0.5)):
        at0 = empirical_loss(EmpiricalLossSpec(X_SMALL, Gaussian, phi, 0.0), theta)
        near = empirical_loss(EmpiricalLossSpec(X_SMALL, Gaussian, phi, 1e-8), theta)
        assert abs(at0 - near) < 1e-6


def test_loss_at_solution_is_grid_minimum():
    spec = EmpiricalLossSpec(X_SMALL, Gaussian, PhiSpec.density_power(), 0.5)
    res = solve(spec)
    mus = res.theta_hat[0] + np.linspace(-0.5, 0.5, 41)
    lss = res.theta_hat[1] + np.linspace(-0.5, 0.5, 41)
    grid = min(empirical_loss(spec, [m, s]) for m in mus for s in lss)
    assert res.loss <= grid + 1e-12


def test_psi_location_component_vanishes_at_centre():
    for phi in builtin_phis():
        val = psi([1.3], [1.3, 0.4], Gaussian, phi, 0.5)
        assert abs(val[0, 0]) < 1e-15


def test_identity_psi_vanishes_in_the_tail():
    val = psi([40.0], [0.0, 0.0], Gaussian, PhiSpec.identity(), 0.5)
    np.testing.assert_allclose(val, 0.0, atol=1e-15)


@pytest.mark.parametrize("gamma", [0.1, 0.5, 1.0])
@pytest.mark.parametrize("phi", builtin_phis(), ids=lambda f: f.label)
def test_mean_psi_is_scaled_loss_gradient(phi, gamma):
    rng = np.random.default_rng(int(gamma * 100))
    for _ in range(20):
        x = rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 2), 100)
        theta = np.array([rng.uniform(-1, 1), rng.uniform(-0.5, 0.5)])
        assert gradient_consistency(x, theta, phi, gamma) < 1e-5


def test_negative_gradient_sign_does_not_hold():
    # with psi as defined, mean psi is a positive multiple of the loss gradient
    x = np.random.default_rng(3).normal(0.0, 1.0, 100)
    err = gradient_consistency(x, np.array([0.4, 0.3]), PhiSpec.density_power(), 0.5, sign=-1.0)
    assert err > 1.9


def test_scaled_residual_matches_psi():
    spec = EmpiricalLossSpec(X_SMALL, Gaussian, PhiSpec.combined(0.3, 0.7, 2.5), 0.4)
    theta = np.array([0.1, -0.2])
    np.testing.assert_allclose(scaled_residual(spec, theta), mean_psi(spec, theta) / 0.4, rtol=1e-12)


def test_scaled_residual_small_gamma_branch():
    spec = EmpiricalLossSpec(X_SMALL, Gaussian, PhiSpec.bridge(0.5, 0.5), 1e-12)
    theta = np.array([0.1, -0.2])
    score = Gaussian.from_theta(theta).score(X_SMALL).mean(axis=0)
    np.testing.assert_allclose(scaled_residual(spec, theta), -spec.phi.dphi0_at_one() * score, rtol=1e-12)


def test_mle_recovery():
    x = sample(Gaussian(2, 3), 10_000, 2024)
    res = solve(EmpiricalLossSpec(x, Gaussian, PhiSpec.identity(), 1e-9))
    assert res.converged
    np.testing.assert_allclose(res.theta_hat, [x.mean(), math.log(x.std())], atol=1e-4)


@pytest.mark.parametrize("phi", builtin_phis(), ids=lambda f: f.label)
def test_population_consistency(phi):
    x = sample(Gaussian(0, 1), 100_000, 99)
    res = solve(EmpiricalLossSpec(x, Gaussian, phi, 0.5))
    assert res.converged
    np.testing.assert_allclose(res.theta_hat, [0.0, 0.0], atol=0.02)


def test_exponential_fit():
    x = sample(Exponential(2.0), 20_000, 4)
    res = solve(EmpiricalLossSpec(x, Exponential, PhiSpec.density_power(), 0.3))
    assert res.converged
    np.testing.assert_allclose(math.exp(res.theta_hat[0]), 2.0, rtol=0.05)
    res0 = solve(EmpiricalLossSpec(x, Exponential, PhiSpec.identity(), 0.0))
    np.testing.assert_allclose(res0.theta_hat, mle(x, Exponential), atol=1e-8)


def test_start_at_root_is_fixed_point():
    spec = EmpiricalLossSpec(X_SMALL, Gaussian, PhiSpec.mixture(0.5), 0.5)
    first = solve(spec)
    again = solve(spec, init=first.theta_hat)
    assert again.iterations <= 1
    np.testing.assert_allclose(again.theta_hat, first.theta_hat, atol=1e-9)


def test_trace_is_monotone_and_converged_flag_consistent():
    x = np.concatenate([sample(Gaussian(0, 1), 400, 1), sample(Gaussian(9, 0.5), 100, 2)])
    for phi in builtin_phis():
        res = solve(EmpiricalLossSpec(x, Gaussian, phi, 0.5), init=[3.0, 1.0])
        losses = [t[1] for t in res.trace]
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
        if res.converged:
            assert res.mean_psi_norm <= 1e-8


def test_non_convergence_is_reported():
    spec = EmpiricalLossSpec(X_SMALL, Gaussian, PhiSpec.density_power(), 0.5)
    res = solve(spec, init=[5.0, 2.0], max_iter=1)
    assert not res.converged
    assert res.starts == 4
    assert np.all(np.isfinite(res.theta_hat))


def test_identity_solution_matches_log_gamma_grid_argmin():
    # equivalent losses share minimisers; check the location at fixed scale
    gamma = 0.5
    res = solve(EmpiricalLossSpec(X_SMALL, Gaussian, PhiSpec.identity(), gamma))
    sigma = math.exp(res.theta_hat[1])
    step = 1e-3
    mus = res.theta_hat[0] + np.arange(-200, 201) * step + step / 3

    def log_gamma_loss(mu):
        m = Gaussian(mu, sigma)
        a = np.mean(np.exp(gamma * m.log_pdf(X_SMALL)))
        return -math.log(a) / gamma + m.power_moments(gamma).log_m0 / (1 + gamma)

    best = mus[np.argmin([log_gamma_loss(m) for m in mus])]
    assert abs(best - res.theta_hat[0]) <= step


def test_fdpd_bridge_log_bilinear_form():
    rng = np.random.default_rng(12)
    v = VSpec.bridge_log(0.3, 0.7)
    for _ in range(5):
        x = rng.normal(0.5, 1.5, 300)
        theta = np.array([rng.uniform(-1, 1), rng.uniform(-0.5, 0.5)])
        assert bridge_log_bilinear_error(x, theta, 0.3, 0.7, 0.4, v) < 1e-6


def test_auto_init():
    x = np.array([0.0, 1.0, 2.0, 3.0, 100.0])
    spec = EmpiricalLossSpec(x, Gaussian, PhiSpec.identity(), 0.5)
    np.testing.assert_allclose(auto_init(spec), [2.0, math.log(1.4826)])
    e = EmpiricalLossSpec([0.5, 1.5], Exponential, PhiSpec.identity(), 0.5)
    np.testing.assert_allclose(auto_init(e), [0.0])


@pytest.mark.parametrize("data, family, err", [
    ([], Gaussian, ParameterError),
    ([1.0, math.nan], Gaussian, ParameterError),
    ([1.0, -1.0], Exponential, DomainError),
])
def test_spec_validation(data, family, err):
    with pytest.raises(err):
        EmpiricalLossSpec(data, family, PhiSpec.identity(), 0.5)


def test_bad_init_shape():
    with pytest.raises(ParameterError):
        solve(EmpiricalLossSpec(X_SMALL, Gaussian, PhiSpec.identity(), 0.5), init=[0.0])


def test_psi_needs_positive_gamma():
    with pytest.raises(ParameterError):
        psi([0.0], [0.0, 0.0], Gaussian, PhiSpec.identity(), 0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(-0.5, 0.5), st.floats(0.05, 1.5), st.integers(0, 5))
def test_gradient_relation_property(mu, log_sigma, gamma, which):
    x = np.random.default_rng(0).normal(0.2, 1.1, 150)
    assert gradient_consistency(x, np.array([mu, log_sigma]), builtin_phis()[which], gamma) < 1e-5


def test_fd_gradient_helper():
    np.testing.assert_allclose(fd_gradient(lambda t: float(t @ t), [1.0, -2.0]), [2.0, -4.0], rtol=1e-8)
