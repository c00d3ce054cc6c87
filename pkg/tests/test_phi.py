import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbdpd.errors import DomainError, ParameterError
from nbdpd.phi import (LAMBDA2_EPS, PhiKind, PhiSpec, assumption_limits_check, phi_deriv, phi_gamma_deriv,
                       phi_second_deriv, phi_value, validate_phi)

GRID = np.linspace(0.05, 20, 120)


def builtin(gamma):
    return [
        PhiSpec.identity(gamma),
        PhiSpec.density_power(gamma),
        PhiSpec.power_kappa(2.0, gamma),
        PhiSpec.power_kappa(1.3, gamma),
        PhiSpec.bridge(0.5, 0.5, gamma),
        PhiSpec.bridge(0.0, 1.0, gamma),
        PhiSpec.bridge(0.7, 0.0, gamma),
        PhiSpec.combined(0.3, 0.7, 2.5, gamma),
        PhiSpec.combined(0.3, 0.0, 2.0, gamma),
        PhiSpec.mixture(0.5, gamma),
    ]


def test_values_from_closed_forms():
    assert phi_value(PhiSpec.identity(0.5), 2.0) == 2.0
    assert phi_value(PhiSpec.density_power(1.0), 2.0) == 4.0
    np.testing.assert_allclose(phi_value(PhiSpec.bridge(0.0, 1.0, 0.5), 2.0), 2.0, rtol=1e-15)


def test_first_and_second_derivatives():
    assert phi_deriv(PhiSpec.identity(0.3), 5.0) == 1.0
    assert phi_second_deriv(PhiSpec.identity(0.3), 5.0) == 0.0
    np.testing.assert_allclose(phi_deriv(PhiSpec.density_power(1.0), 3.0), 6.0)


def test_gamma_derivatives():
    assert phi_gamma_deriv(PhiSpec.identity(0.7), 3.0) == 0.0
    assert phi_gamma_deriv(PhiSpec.density_power(0.0), 1.0) == 0.0
    np.testing.assert_allclose(phi_gamma_deriv(PhiSpec.density_power(0.5), 2.0), 2 ** 1.5 * math.log(2),
                               rtol=1e-14)


@pytest.mark.parametrize("gamma", [0.0, 0.1, 0.5, 1.0])
def test_deriv_matches_finite_difference(gamma):
    h = 1e-6
    for spec in builtin(gamma):
        fd = (spec.value(GRID + h) - spec.value(GRID - h)) / (2 * h)
        np.testing.assert_allclose(spec.deriv(GRID), fd, rtol=1e-6, err_msg=spec.label)
        fd2 = (spec.deriv(GRID + h) - spec.deriv(GRID - h)) / (2 * h)
        np.testing.assert_allclose(spec.second_deriv(GRID), fd2, rtol=1e-5, atol=1e-8, err_msg=spec.label)


@pytest.mark.parametrize("gamma", [0.1, 0.5, 1.0])
def test_gamma_deriv_matches_finite_difference(gamma):
    h = 1e-6
    for spec in builtin(gamma):
        fd = (spec.with_gamma(gamma + h).value(GRID) - spec.with_gamma(gamma - h).value(GRID)) / (2 * h)
        np.testing.assert_allclose(spec.gamma_deriv(GRID), fd, rtol=1e-6, atol=1e-8, err_msg=spec.label)


@pytest.mark.parametrize("gamma", [0.1, 0.5, 1.0, 2.0])
def test_bridge_without_lambda1_is_scaled_identity(gamma):
    l2 = 0.8
    np.testing.assert_allclose(PhiSpec.bridge(0.0, l2, gamma).value(GRID), l2 ** (-gamma / (1 + gamma)) * GRID,
                               rtol=1e-12)


@pytest.mark.parametrize("gamma", [0.1, 0.5, 1.0])
def test_combined_reductions(gamma):
    np.testing.assert_allclose(PhiSpec.combined(0.3, 0.7, 1.0, gamma).value(GRID),
                               PhiSpec.bridge(0.3, 0.7, gamma).value(GRID), rtol=1e-12)
    np.testing.assert_allclose(PhiSpec.combined(0.0, 1.0, 2.5, gamma).value(GRID),
                               PhiSpec.power_kappa(2.5, gamma).value(GRID), rtol=1e-12)


@pytest.mark.parametrize("gamma", [0.1, 0.5, 1.0])
def test_mixture_endpoints(gamma):
    np.testing.assert_allclose(PhiSpec.mixture(1.0, gamma).value(GRID),
                               PhiSpec.density_power(gamma).value(GRID), rtol=1e-12)
    np.testing.assert_allclose(PhiSpec.mixture(0.0, gamma).value(GRID), GRID, rtol=1e-12)


@pytest.mark.parametrize("kind", ["bridge", "combined"])
def test_small_lambda2_limit_is_continuous(kind):
    # the substituted limit form must join the closed form smoothly
    gamma, l1 = 0.5, 0.4
    make = (lambda l2: PhiSpec.bridge(l1, l2, gamma)) if kind == "bridge" else \
        (lambda l2: PhiSpec.combined(l1, l2, 2.0, gamma))
    limit = make(0.0).value(GRID)
    near = make(1e-7).value(GRID)
    np.testing.assert_allclose(near, limit, rtol=1e-5)
    assert make(LAMBDA2_EPS / 2)._bridge_limit()


@pytest.mark.parametrize("gamma", [0.0, 0.5, 1.0])
def test_builtins_validate(gamma):
    for spec in builtin(gamma):
        report = validate_phi(spec, np.geomspace(1e-3, 100, 200))
        assert report.valid, spec.label


def test_validation_catches_bad_custom_generators():
    dec = PhiSpec.from_callbacks(lambda z, g: -z, lambda z, g: -np.ones_like(z), lambda z, g: np.zeros_like(z))
    grid = np.linspace(0.1, 10, 50)
    rep = validate_phi(dec, grid)
    assert len(rep.monotonicity_failures) == grid.size
    concave = PhiSpec.from_callbacks(np.sqrt, lambda z, g: 0.5 / np.sqrt(z), lambda z, g: -0.25 * z ** -1.5)
    rep = validate_phi(concave, grid)
    assert not rep.monotonicity_failures
    assert len(rep.convexity_failures) == grid.size


def test_validation_grid_rules():
    with pytest.raises(ParameterError):
        validate_phi(PhiSpec.identity(), [1.0, 0.5])
    with pytest.raises(ParameterError):
        validate_phi(PhiSpec.identity(), [])


def test_custom_gamma_deriv_uses_finite_difference():
    spec = PhiSpec.from_callbacks(lambda z, g: z ** (1 + g), lambda z, g: (1 + g) * z ** g,
                                  lambda z, g: g * (1 + g) * z ** (g - 1), gamma=0.5)
    np.testing.assert_allclose(spec.gamma_deriv(2.0), 2 ** 1.5 * math.log(2), rtol=1e-8)


@pytest.mark.parametrize("bad", [
    lambda: PhiSpec.bridge(0.0, 0.0),
    lambda: PhiSpec.bridge(-0.1, 1.0),
    lambda: PhiSpec.power_kappa(0.5),
    lambda: PhiSpec.mixture(1.5),
    lambda: PhiSpec.combined(0.0, 0.0, 2.0),
    lambda: PhiSpec.identity(-0.1),
])
def test_invalid_parameters(bad):
    with pytest.raises(ParameterError):
        bad()


def test_non_positive_argument():
    with pytest.raises(DomainError):
        PhiSpec.density_power(0.5).value(0.0)
    with pytest.raises(DomainError):
        PhiSpec.identity().deriv(np.array([1.0, -2.0]))


def test_record_round_trip():
    spec = PhiSpec.bridge(0.3, 0.7, 0.5)
    rec = spec.to_dict()
    assert rec == {"kind": "bridge", "lambda1": 0.3, "lambda2": 0.7, "gamma": 0.5}
    assert PhiSpec.from_dict(rec) == spec
    assert PhiSpec.from_dict({"kind": "combined", "lambda1": 0.3, "lambda2": 0.7, "kappa": 2}).kind \
        is PhiKind.COMBINED
    with pytest.raises(ParameterError):
        PhiSpec.from_dict({"kind": "bridge", "lambda1": 0.3, "lambda2": 0.7, "colour": 1})
    with pytest.raises(ParameterError):
        PhiSpec.from_dict({"kind": "nope"})


def _normal_norm(gamma):
    return ((2 * math.pi) ** (-gamma / 2) / math.sqrt(1 + gamma)) ** (1 / (1 + gamma))


@pytest.mark.parametrize("spec", [PhiSpec.identity(), PhiSpec.density_power()], ids=["identity", "density_power"])
def test_assumption_limits(spec):
    rep = assumption_limits_check(spec, _normal_norm)
    assert rep.ok, rep.flags
    np.testing.assert_allclose(rep.limits, (1.0, 1.0, 0.0), atol=1e-4)


def test_assumption_flags_parameter_without_limit():
    # kappa_gamma = 1 / gamma has no gamma -> 0 limit
    custom = PhiSpec.from_callbacks(
        lambda z, g: z ** (1 / max(g, 1e-12)),
        lambda z, g: (1 / g) * z ** (1 / g - 1),
        lambda z, g: (1 / g) * (1 / g - 1) * z ** (1 / g - 2),
        parameters=lambda g: {"kappa": 1 / g},
        name="kappa_inverse_gamma",
    )
    rep = assumption_limits_check(custom, _normal_norm)
    assert not rep.ok
    assert any("kappa" in f for f in rep.flags)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.01, 2.0), st.floats(0.01, 50.0))
def test_mixture_is_convex_combination(t, gamma, z):
    spec = PhiSpec.mixture(t, gamma)
    expected = t * z ** (1 + gamma) + (1 - t) * z
    assert math.isclose(spec.value(z), expected, rel_tol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(-30, 30), st.sampled_from(range(10)), st.sampled_from([1e-9, 1e-4, 0.5]))
def test_increment_matches_direct_difference(log_z, which, gamma):
    spec = builtin(gamma)[which]
    # increments are measured from the gamma = 0 generator at 1
    direct = spec.value(math.exp(log_z)) - spec.phi0_at_one()
    inc = spec.increment(log_z)
    assert math.isclose(inc, direct, rel_tol=1e-9, abs_tol=1e-12 * max(1.0, abs(spec.value(math.exp(log_z)))))
