import numpy as np
import pytest
from scipy.integrate import quad

from stochwave.errors import AliasingError, ConfigurationError
from stochwave.nonlinearity import (
    MODEL_NAMES,
    apply_F,
    audit_assumptions,
    builtin_models,
    empirical_h_minus1_lipschitz,
    make_model,
)
from stochwave.spectral import SpectralField, synthesize, to_grid

from property_checks import random_field

ETA = 1.0


def test_apply_f_zero_model():
    model = make_model("zero", ETA)
    v = random_field(np.random.default_rng(0), 8)
    assert np.all(apply_F(model, v).coeffs == 0.0)


def test_apply_f_linear_is_exact_diagonal():
    alpha = 0.2
    model = make_model("linear", ETA, {"alpha": alpha})
    v = random_field(np.random.default_rng(1), 12)
    out = apply_F(model, v)
    assert np.max(np.abs(out.coeffs - alpha * v.coeffs)) < 1e-12


def test_apply_f_sine_against_quadrature():
    # oracle: <sin(v(.)), e_k> by adaptive quadrature, independent of the
    # grid-transform path under test
    n = 8
    v = 0.1 * SpectralField.basis(1, n)
    model = make_model("sine", ETA, {"amplitude": 1.0})
    result = apply_F(model, v, m_points=2 * n + 1)

    def coefficient(k):
        def integrand(x):
            vx = 0.1 * np.sqrt(2.0) * np.sin(np.pi * x)
            return np.sin(vx) * np.sqrt(2.0) * np.sin(k * np.pi * x)

        value, _ = quad(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-13)
        return value

    expected = np.array([coefficient(k) for k in range(1, n + 1)])
    assert np.max(np.abs(result.coeffs - expected)) < 1e-8


def test_apply_f_grid_too_small():
    model = make_model("sine", ETA)
    v = random_field(np.random.default_rng(2), 6)
    with pytest.raises(AliasingError):
        apply_F(model, v, m_points=5)


def test_audit_sine_passes():
    audit = audit_assumptions(make_model("sine", ETA), ETA)
    assert audit.passed
    assert audit.measured_a1 <= ETA / 4.0 + 1e-12
    assert audit.measured_min_fprime == pytest.approx(-ETA / 4.0, abs=1e-9)


def test_audit_quadratic_fails_linear_growth():
    audit = audit_assumptions(make_model("quadratic", ETA), ETA)
    assert not audit.passed
    assert not audit.pass_linear_growth
    assert any("linear growth" in msg for msg in audit.failures())


def test_audit_zero_passes():
    audit = audit_assumptions(make_model("zero", ETA), ETA)
    assert audit.passed
    assert audit.measured_a1 == 0.0
    assert audit.measured_min_fprime == 0.0


def test_catalogue_certified_and_fd_consistent():
    for name, model in builtin_models(ETA).items():
        model.check_against_damping(ETA)
        audit = audit_assumptions(model, ETA)
        assert audit.passed, f"{name}: {audit.failures()}"
        # fprime matches central differences within 1e-6 on [-10, 10]
        assert audit.fd_max_error <= 1e-6, name
        assert np.isfinite(audit.empirical_lip_l)


def test_uncertified_model_refused_for_simulation():
    with pytest.raises(ConfigurationError):
        make_model("quadratic", ETA).check_against_damping(ETA)


def test_linear_alpha_bounds():
    with pytest.raises(ConfigurationError):
        make_model("linear", ETA, {"alpha": -1.5})
    # admissible but over the linear-growth limit: caught by the eta check
    strong = make_model("linear", ETA, {"alpha": 0.9})
    with pytest.raises(ConfigurationError):
        strong.check_against_damping(ETA)


def test_unknown_model_and_params():
    with pytest.raises(ConfigurationError):
        make_model("cubic", ETA)
    with pytest.raises(ConfigurationError):
        make_model("sine", ETA, {"alpha": 1.0})


# ---------------------------------------------------------------------------
# sawtooth specifics
# ---------------------------------------------------------------------------

def test_sawtooth_knot_values():
    # away from the smoothed corners h matches the piecewise profile:
    # h(0.5) = -1/4, h(1.5) = -1/4, h(3) = -1/2, h(4.5) = -1/2,
    # h(7) = -1, h(8.5) = -3/4, odd extension
    model = make_model("sawtooth", ETA)
    xs = np.array([0.5, 1.5, 3.0, 4.5, 7.0, 8.5, -3.0, -7.0])
    expected_h = np.array([-0.25, -0.25, -0.5, -0.5, -1.0, -0.75, 0.5, 1.0])
    assert np.allclose(2.0 * model.f(xs) / ETA, expected_h, rtol=0, atol=1e-12)


def test_sawtooth_bounded_by_identity_and_slope_floor():
    model = make_model("sawtooth", ETA)
    x = np.linspace(-200.0, 200.0, 400001)
    h = 2.0 * model.f(x) / ETA
    assert np.max(np.abs(h) - np.abs(x)) <= 1e-12
    slopes = 2.0 * model.fprime(x) / ETA
    assert slopes.min() >= -0.5 - 1e-12


def test_sawtooth_up_slopes_grow_without_bound():
    model = make_model("sawtooth", ETA)
    alpha = lambda n: n * (n + 1) / 2.0 - 1.0
    for n in (5, 12, 40):
        x_mid_up = alpha(n) + n + 0.5  # middle of the up segment of block n
        assert 2.0 * model.fprime(np.array([x_mid_up]))[0] / ETA == pytest.approx(n / 2.0)


def test_sawtooth_is_c1_at_corners():
    model = make_model("sawtooth", ETA, {"smoothing_eps": 0.1})
    # corners of blocks 2 and 3: peak at alpha_n, valley at alpha_n + n
    corners = [2.0, 4.0, 5.0, 8.0, 9.0]
    for y in corners:
        for edge in (y - 0.1, y + 0.1):
            left = model.fprime(np.array([edge - 1e-9]))[0]
            right = model.fprime(np.array([edge + 1e-9]))[0]
            assert abs(left - right) < 1e-6
    # derivative of f matches finite differences through the blend
    x = np.linspace(1.85, 2.15, 2001)
    fd = (model.f(x + 1e-8) - model.f(x - 1e-8)) / 2e-8
    assert np.max(np.abs(fd - model.fprime(x))) < 1e-6


def test_sawtooth_smoothing_eps_validated():
    with pytest.raises(ConfigurationError):
        make_model("sawtooth", ETA, {"smoothing_eps": 0.7})
    narrow = make_model("sawtooth", ETA, {"smoothing_eps": 0.01})
    assert audit_assumptions(narrow, ETA).passed


def test_one_sided_monotonicity_grid_quadrature():
    # <v1 - v2, F(v1) - F(v2)> >= a2 |v1 - v2|^2, evaluated by the exact
    # grid quadrature underlying the Nemytskii transforms
    rng = np.random.default_rng(8)
    m_points = 33
    for name, model in builtin_models(ETA).items():
        for _ in range(50):
            v1 = synthesize(random_field(rng, 16, 1.0, 3.0).coeffs, m_points)
            v2 = synthesize(random_field(rng, 16, 1.0, 3.0).coeffs, m_points)
            inner = np.sum((v1 - v2) * (model.f(v1) - model.f(v2))) / (m_points + 1)
            dist_sq = np.sum((v1 - v2) ** 2) / (m_points + 1)
            assert inner >= model.a2 * dist_sq - 1e-12 * max(1.0, dist_sq), name


def test_empirical_lipschitz_linear_closed_form():
    model = make_model("linear", ETA, {"alpha": 0.3})
    assert empirical_h_minus1_lipschitz(model, np.random.default_rng(0)) == \
        pytest.approx(0.3 / np.pi)


def test_model_names_exposed():
    assert set(MODEL_NAMES) == {"zero", "linear", "sine", "arctan", "sawtooth", "quadratic"}
