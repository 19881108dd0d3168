import numpy as np
import pytest

from stochwave.errors import AliasingError, ShapeError
from stochwave.spectral import (
    GridField,
    PhaseState,
    SpectralField,
    eigenvalue,
    eigenvalues,
    from_grid,
    phase_norm,
    project,
    smooth_state,
    sobolev_norm,
    to_grid,
)

from property_checks import (
    check_grid_roundtrip,
    check_norm_scaling,
    check_parseval,
    check_projection_error_bound,
    check_projection_idempotent,
    random_field,
)


def test_eigenvalue_closed_form():
    assert eigenvalue(1) == pytest.approx(np.pi**2)
    assert eigenvalue(2) == pytest.approx(4 * np.pi**2)
    assert eigenvalue(8) / eigenvalue(4) == pytest.approx(4.0)
    lam = eigenvalues(10)
    assert np.all(np.diff(lam) > 0)


def test_eigenvalue_rejects_zero():
    with pytest.raises(ValueError):
        eigenvalue(0)
    with pytest.raises(ValueError):
        eigenvalues(0)


def test_sobolev_norm_single_mode():
    e3 = SpectralField.basis(3, 5)
    assert sobolev_norm(e3, 2.0) == pytest.approx(9 * np.pi**2)
    assert sobolev_norm(SpectralField.zero(7), -1.3) == 0.0
    two = SpectralField([1.0, 1.0])
    assert sobolev_norm(two, 0.0) == pytest.approx(np.sqrt(2.0))


def test_sobolev_norm_monotone_in_order():
    rng = np.random.default_rng(11)
    f = random_field(rng, 12)
    orders = np.linspace(-1.0, 3.0, 9)
    norms = [sobolev_norm(f, r) for r in orders]
    assert np.all(np.diff(norms) >= -1e-12)


def test_field_rejects_non_finite():
    with pytest.raises(ValueError):
        SpectralField([1.0, np.nan])
    with pytest.raises(ValueError):
        SpectralField([np.inf, 0.0])


def test_phase_norm_examples():
    e1 = SpectralField.basis(1, 4)
    zero = SpectralField.zero(4)
    assert phase_norm(PhaseState(e1, zero), 1.0) == pytest.approx(np.pi)
    assert phase_norm(PhaseState(zero, e1), 1.0) == pytest.approx(1.0)
    lam1 = np.pi**2
    assert phase_norm(PhaseState(e1, e1), 2.0) == pytest.approx(np.sqrt(lam1**2 + lam1))


def test_phase_state_mode_mismatch():
    with pytest.raises(ShapeError):
        PhaseState(SpectralField.zero(3), SpectralField.zero(4))


def test_project_identity_on_resolved_span():
    f = SpectralField([1.0, -2.0, 0.5])
    assert np.array_equal(project(f, 3).coeffs, f.coeffs)
    padded = project(f, 6)
    assert padded.n_modes == 6
    assert np.array_equal(padded.coeffs[:3], f.coeffs)
    assert np.all(padded.coeffs[3:] == 0.0)


def test_project_kills_high_mode_with_sharp_bound():
    n = 5
    e_next = SpectralField.basis(n + 1, n + 1)
    proj = project(e_next, n)
    assert np.all(proj.coeffs == 0.0)
    # the bound lambda_N^{-1/2} |psi|_{H^1} is attained up to (N+1)/N
    err = sobolev_norm(e_next - proj, 0.0)
    bound = eigenvalue(n) ** -0.5 * sobolev_norm(e_next, 1.0)
    assert err == pytest.approx(1.0)
    assert err <= bound


def test_projection_bound_random_fields():
    assert check_projection_error_bound(200) == 0


def test_to_grid_basis_values():
    e1 = SpectralField.basis(1, 1)
    grid = to_grid(e1, 3)
    expected = np.sqrt(2.0) * np.sin(np.pi * np.arange(1, 4) / 4.0)
    assert np.allclose(grid.values, expected, rtol=0, atol=1e-15)
    assert np.allclose(grid.x, [0.25, 0.5, 0.75])


def test_grid_roundtrip_identity():
    rng = np.random.default_rng(7)
    f = random_field(rng, 16, decay=0.5)
    back = from_grid(to_grid(f, 33), 16)
    assert np.max(np.abs(back.coeffs - f.coeffs)) < 1e-12


def test_from_grid_zero():
    zero_grid = GridField(np.zeros(9))
    assert np.all(from_grid(zero_grid, 4).coeffs == 0.0)


def test_grid_aliasing_errors():
    f = random_field(np.random.default_rng(0), 8)
    with pytest.raises(AliasingError):
        to_grid(f, 7)
    with pytest.raises(AliasingError):
        from_grid(GridField(np.ones(5)), 6)


def test_fast_transform_matches_direct():
    rng = np.random.default_rng(3)
    f = random_field(rng, 21, decay=0.3)
    for m in (21, 40, 97):
        direct = to_grid(f, m, fast=False)
        fast = to_grid(f, m, fast=True)
        assert np.allclose(direct.values, fast.values, rtol=0, atol=1e-12)
        back_direct = from_grid(direct, 21, fast=False)
        back_fast = from_grid(direct, 21, fast=True)
        assert np.allclose(back_direct.coeffs, back_fast.coeffs, rtol=0, atol=1e-13)


def test_field_arithmetic_pads():
    a = SpectralField([1.0, 2.0])
    b = SpectralField([1.0, 1.0, 1.0])
    diff = a - b
    assert diff.n_modes == 3
    assert np.allclose(diff.coeffs, [0.0, 1.0, -1.0])
    assert np.allclose((2.0 * a).coeffs, [2.0, 4.0])


def test_smooth_state_is_h2_regular():
    x = smooth_state(64)
    # coefficient decay keeps the H^2 product norm bounded as N grows
    assert phase_norm(x, 2.0) < phase_norm(smooth_state(512), 2.0) + 1.0
    assert np.isfinite(phase_norm(smooth_state(512), 2.0))


def test_property_suites_small():
    assert check_parseval(200) == 0
    assert check_norm_scaling(200) == 0
    assert check_projection_idempotent(200) == 0
    assert check_grid_roundtrip(100) == 0
