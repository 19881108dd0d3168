import numpy as np
import pytest

from stochwave.errors import ConfigurationError, ShapeError
from stochwave.noise import (
    IncrementPath,
    NoiseSpec,
    build_power_law_q,
    coarsen_path,
    experiment_rng,
    project_path,
    sample_increment,
    sample_increment_path,
    trajectory_rngs,
)


def test_power_law_values():
    spec = build_power_law_q(1.0, 4.0, 4)
    assert np.allclose(spec.q, [1.0, 1.0 / 16.0, 1.0 / 81.0, 1.0 / 256.0], rtol=0)
    assert spec.valid
    assert spec.trace_q == pytest.approx(np.sum(spec.q))


def test_power_law_s2_invalid():
    spec = build_power_law_q(1.0, 2.0, 16)
    assert not spec.valid
    assert "diverges" in spec.invalid_reason
    with pytest.raises(ConfigurationError):
        sample_increment(spec, 0.1, experiment_rng(0))


def test_power_law_rejects_bad_amplitude():
    with pytest.raises(ConfigurationError):
        build_power_law_q(0.0, 4.0, 4)


def test_trace_lambda_converges_to_closed_form():
    # s = 4: Tr(Lambda Q) = pi^2 sum k^-2 -> pi^4 / 6
    limit = np.pi**4 / 6.0
    previous = 0.0
    for n in (10, 50, 200, 800):
        spec = build_power_law_q(1.0, 4.0, n)
        value = spec.trace_lambda_q
        assert value > previous  # monotone in the truncation
        # integral tail bound: sum_{k>N} k^-2 < 1/N
        assert limit - value < np.pi**2 / n
        assert value < limit
        previous = value
    # per-mode increments decay at the exact k^-2 rate; the plain trace
    # (without the lambda weight) has increments below 1e-6 from N ~ 200 on
    spec_200 = build_power_law_q(1.0, 4.0, 200)
    spec_201 = build_power_law_q(1.0, 4.0, 201)
    assert spec_201.trace_lambda_q - spec_200.trace_lambda_q == pytest.approx(
        np.pi**2 * 201.0**-2, rel=1e-12)
    assert spec_201.trace_q - spec_200.trace_q < 1e-6


def test_increment_moments_match_q_tau():
    spec = build_power_law_q(1.0, 4.0, 4)
    tau = 0.37
    rng = experiment_rng(123)
    draws = np.stack([sample_increment(spec, tau, rng).coeffs for _ in range(10**5)])
    var = draws.var(axis=0)
    assert np.all(np.abs(var / (spec.q * tau) - 1.0) < 0.05)
    # increments are mode-wise independent: cross-covariances within 3 SE of 0
    for i in range(4):
        for j in range(i + 1, 4):
            cov = np.mean(draws[:, i] * draws[:, j])
            se = np.sqrt(spec.q[i] * spec.q[j]) * tau / np.sqrt(len(draws))
            assert abs(cov) < 3.0 * se


def test_identical_seeds_bitwise_identical():
    spec = build_power_law_q(1.0, 4.0, 8)
    a = sample_increment_path(spec, 0.1, 64, experiment_rng(2024))
    b = sample_increment_path(spec, 0.1, 64, experiment_rng(2024))
    assert np.array_equal(a.increments, b.increments)


def test_trajectory_rngs_are_independent_streams():
    rngs = trajectory_rngs(7, 3)
    draws = [rng.standard_normal(4) for rng in rngs]
    assert not np.allclose(draws[0], draws[1])
    again = trajectory_rngs(7, 3)
    assert np.array_equal(draws[2], again[2].standard_normal(4))


def test_zero_tau_rejected():
    spec = build_power_law_q(1.0, 4.0, 4)
    with pytest.raises(ConfigurationError):
        sample_increment(spec, 0.0, experiment_rng(0))


def test_coarsen_ratio_one_is_identity():
    spec = build_power_law_q(1.0, 4.0, 4)
    path = sample_increment_path(spec, 0.25, 8, experiment_rng(5))
    assert coarsen_path(path, 1) is path


def test_coarsen_telescopes_bitwise():
    spec = build_power_law_q(1.0, 4.0, 6)
    fine = sample_increment_path(spec, 2.0**-8, 256, experiment_rng(42))
    for ratio in (2, 4, 8, 256):
        coarse = coarsen_path(fine, ratio)
        assert coarse.n_steps == 256 // ratio
        assert coarse.tau == pytest.approx(2.0**-8 * ratio)
        # pairwise folding makes the Brownian total identical bitwise
        assert np.array_equal(coarse.total_increment(), fine.total_increment())


def test_coarsen_associative_bitwise():
    spec = build_power_law_q(1.0, 4.0, 3)
    fine = sample_increment_path(spec, 0.001, 64, experiment_rng(9))
    twice = coarsen_path(coarsen_path(fine, 2), 2)
    once = coarsen_path(fine, 4)
    assert np.array_equal(twice.increments, once.increments)


def test_coarsen_general_ratio_sums_groups():
    spec = build_power_law_q(1.0, 4.0, 2)
    fine = sample_increment_path(spec, 0.1, 12, experiment_rng(3))
    coarse = coarsen_path(fine, 3)
    expected = fine.increments.reshape(4, 3, 2).sum(axis=1)
    assert np.allclose(coarse.increments, expected, rtol=0, atol=1e-15)


def test_coarsen_rejects_non_divisible():
    spec = build_power_law_q(1.0, 4.0, 2)
    path = sample_increment_path(spec, 0.1, 10, experiment_rng(0))
    with pytest.raises(ShapeError):
        coarsen_path(path, 3)


def test_project_path_truncates_modes():
    spec = build_power_law_q(1.0, 4.0, 8)
    path = sample_increment_path(spec, 0.1, 5, experiment_rng(1))
    small = project_path(path, 3)
    assert small.n_modes == 3
    assert np.array_equal(small.increments, path.increments[:, :3])
    with pytest.raises(ShapeError):
        project_path(small, 8)


def test_noise_spec_validation():
    with pytest.raises(ConfigurationError):
        NoiseSpec(np.array([1.0, -0.5]))
    with pytest.raises(ShapeError):
        NoiseSpec(np.zeros((2, 2)))
