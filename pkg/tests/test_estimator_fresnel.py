import math

import numpy as np
import pytest

from nfmusic import (
    ArrayConfig,
    DetectionFailure,
    FrequencyGrid,
    OfdmConfig,
    Scene,
    SearchGrid,
    Target,
    ambiguity_candidates,
    angle_spectrum,
    antidiagonal_vector,
    distance_spectrum,
    element_offsets,
    estimate_fresnel,
    estimate_sf,
    fresnel_phase_params,
    sample_covariance,
    spatial_smooth,
    synthesize_received,
)
from nfmusic.subspace import SubspaceDecomposition, decompose_covariance, decompose_received

FC = 28e9


def fresnel_model_covariance(array, freq_hz, targets, energies=None):
    """Covariance built directly from the quadratic-phase steering model."""
    offs = element_offsets(array)
    sigma = np.zeros((array.n_elements, array.n_elements), dtype=complex)
    energies = energies if energies is not None else [1.0] * len(targets)
    for target, chi in zip(targets, energies):
        phi, gamma, eta = fresnel_phase_params(array, freq_hz, target)
        a = np.exp(1j * (phi + gamma * offs + eta * offs**2))
        sigma += chi * np.outer(a, a.conj())
    return sigma


class TestAntidiagonalVector:
    def test_broadside_phases_vanish(self):
        array = ArrayConfig(9, FC)
        target = Target(range_m=10.0, angle_rad=np.pi / 2)
        ybar = antidiagonal_vector(fresnel_model_covariance(array, FC, [target]))
        np.testing.assert_allclose(np.angle(ybar.values), 0.0, atol=1e-12)

    def test_phases_are_twice_offset_gamma(self):
        array = ArrayConfig(11, FC)
        target = Target(range_m=8.0, angle_rad=np.deg2rad(70.0))
        _, gamma, _ = fresnel_phase_params(array, FC, target)
        ybar = antidiagonal_vector(fresnel_model_covariance(array, FC, [target]))
        offs = element_offsets(array)
        expected = 2.0 * offs * gamma
        got = np.unwrap(np.angle(ybar.values))
        # Compare modulo 2 pi via unit phasors to avoid branch-cut issues.
        np.testing.assert_allclose(
            np.exp(1j * got), np.exp(1j * expected), atol=1e-10
        )

    def test_two_target_sum_oracle(self):
        array = ArrayConfig(5, FC)
        targets = [
            Target(range_m=6.0, angle_rad=np.deg2rad(80.0)),
            Target(range_m=9.0, angle_rad=np.deg2rad(104.0)),
        ]
        energies = [1.3, 0.7]
        ybar = antidiagonal_vector(
            fresnel_model_covariance(array, FC, targets, energies)
        )
        offs = element_offsets(array)
        expected = np.zeros(5, dtype=complex)
        for target, chi in zip(targets, energies):
            gamma = (
                2 * np.pi * array.spacing_m / array.carrier_wavelength_m
            ) * np.cos(target.angle_rad)
            expected += chi * np.exp(2j * offs * gamma)
        np.testing.assert_allclose(ybar.values, expected, atol=1e-9)

    def test_rejects_even_dimension(self):
        with pytest.raises(ValueError, match="odd"):
            antidiagonal_vector(np.eye(4, dtype=complex))

    def test_range_independence(self):
        # Scenes differing only in ranges produce identical anti-diagonals
        # under the quadratic-phase model: the curvature term cancels on the
        # anti-diagonal, which is the whole point of the decoupling.
        array = ArrayConfig(31, FC)
        angles = (np.deg2rad(70.0), np.deg2rad(100.0))
        scene_a = [Target(range_m=7.0, angle_rad=t) for t in angles]
        scene_b = [Target(range_m=13.0, angle_rad=t) for t in angles]
        ybar_a = antidiagonal_vector(fresnel_model_covariance(array, FC, scene_a))
        ybar_b = antidiagonal_vector(fresnel_model_covariance(array, FC, scene_b))
        np.testing.assert_allclose(
            np.angle(ybar_a.values), np.angle(ybar_b.values), atol=1e-9
        )


class TestSpatialSmooth:
    def test_single_window_is_outer_product(self):
        rng = np.random.default_rng(0)
        values = rng.standard_normal(7) + 1j * rng.standard_normal(7)
        ybar = antidiagonal_vector(np.diag(np.zeros(7)).astype(complex) + 0j)
        ybar = type(ybar)(values=values, n_half=3)
        smoothed = spatial_smooth(ybar, 1)
        assert smoothed.window_len == 7
        np.testing.assert_allclose(smoothed.matrix, np.outer(values, values.conj()), atol=1e-12)
        assert np.linalg.matrix_rank(smoothed.matrix, tol=1e-10) == 1

    def test_constant_vector_rank_one(self):
        from nfmusic import AntiDiagonalVector

        ybar = AntiDiagonalVector(values=np.full(9, 2.0 + 0j), n_half=4)
        smoothed = spatial_smooth(ybar, 4)
        np.testing.assert_allclose(smoothed.matrix, 4.0 * np.ones((6, 6)), atol=1e-12)
        assert np.linalg.matrix_rank(smoothed.matrix, tol=1e-10) == 1

    def test_decorrelates_two_targets(self):
        array = ArrayConfig(127, FC)
        targets = [
            Target(range_m=20.0, angle_rad=np.deg2rad(75.0)),
            Target(range_m=35.0, angle_rad=np.deg2rad(102.0)),
        ]
        ybar = antidiagonal_vector(fresnel_model_covariance(array, FC, targets))
        smoothed = spatial_smooth(ybar, 50)
        assert smoothed.window_len == 128 - 50
        values = np.linalg.eigvalsh(smoothed.matrix)[::-1]
        dominant = values[values > 1e-8 * values[0]]
        assert dominant.size == 2

    def test_rejects_bad_window_count(self):
        from nfmusic import AntiDiagonalVector

        ybar = AntiDiagonalVector(values=np.ones(5, dtype=complex), n_half=2)
        with pytest.raises(ValueError):
            spatial_smooth(ybar, 0)
        with pytest.raises(ValueError):
            spatial_smooth(ybar, 6)


def desk_received(targets, snr_db, n_elements=65, n_subcarriers=4, seed=0, k=64):
    array = ArrayConfig(n_elements, FC)
    ofdm = OfdmConfig(n_subcarriers=n_subcarriers, spacing_hz=4.8e7, n_symbols=k)
    received = synthesize_received(array, ofdm, Scene(targets=tuple(targets)), snr_db, seed)
    return array, received


def smoothed_stages(array, received, n_targets, windows=None):
    covariances = [sample_covariance(y) for y in received.per_subcarrier]
    n_odd = array.n_elements if array.n_elements % 2 else array.n_elements - 1
    if windows is None:
        from nfmusic.estimator_fresnel import default_window_count

        windows = default_window_count(n_odd, n_targets)
    smoothed = [
        spatial_smooth(antidiagonal_vector(sigma[:n_odd, :n_odd]), windows)
        for sigma in covariances
    ]
    return covariances, smoothed


class TestAngleSpectrum:
    def test_broadside_target_peaks_on_grid(self):
        array, received = desk_received(
            [Target(range_m=10.0, angle_rad=np.pi / 2)], math.inf
        )
        _, smoothed = smoothed_stages(array, received, 1)
        theta_axis = np.deg2rad(np.arange(60.0, 120.25, 0.25))
        values, peaks = angle_spectrum(
            smoothed, theta_axis, 1, received.freq_grid, array.spacing_m
        )
        assert peaks[0] == pytest.approx(np.pi / 2, abs=1e-12)
        assert theta_axis[np.argmax(values)] == pytest.approx(np.pi / 2, abs=1e-12)

    def test_candidates_contain_true_angle_at_reference_scale(self):
        array = ArrayConfig(128, FC)
        ofdm = OfdmConfig(n_subcarriers=64, spacing_hz=4.8e7, n_symbols=200)
        truth = Target(range_m=22.0, angle_rad=np.deg2rad(75.0))
        received = synthesize_received(array, ofdm, Scene(targets=(truth,)), 0.0, 5)
        _, smoothed = smoothed_stages(array, received, 1, windows=50)
        theta_axis = np.deg2rad(np.arange(30.0, 150.25, 0.25))
        _, peaks = angle_spectrum(
            smoothed, theta_axis, 1, received.freq_grid, array.spacing_m
        )
        candidates = ambiguity_candidates(
            peaks[0], array.carrier_wavelength_m, array.spacing_m
        )
        assert any(abs(c - truth.angle_rad) <= np.deg2rad(0.25) for c in candidates)

    def test_single_carrier_matches_independent_1d_music(self):
        array, received = desk_received(
            [Target(range_m=9.0, angle_rad=np.deg2rad(85.0))], 5.0, n_subcarriers=1
        )
        _, smoothed = smoothed_stages(array, received, 1)
        cov = smoothed[0]
        theta_axis = np.deg2rad(np.arange(70.0, 100.5, 0.5))
        values, _ = angle_spectrum(
            smoothed, theta_axis, 1, received.freq_grid, array.spacing_m
        )
        # Independent oracle: ascending eigh, explicit noise projection.
        w, v = np.linalg.eigh(cov.matrix)
        noise = v[:, : cov.window_len - 1]
        lam0 = received.freq_grid.wavelengths_m[0]
        idx = np.arange(cov.window_len)
        for j, theta in enumerate(theta_axis):
            gamma = 2 * np.pi * array.spacing_m / lam0 * np.cos(theta)
            manifold = np.exp(2j * idx * gamma)
            oracle = 1.0 / np.linalg.norm(noise.conj().T @ manifold) ** 2
            assert values[j] == pytest.approx(oracle, rel=1e-9)

    def test_detection_failure_reports_counts(self):
        # A 2-point axis admits at most one strict local maximum, so asking
        # for two targets must fail regardless of the data.
        array, received = desk_received(
            [Target(range_m=10.0, angle_rad=np.deg2rad(80.0))], 10.0
        )
        _, smoothed = smoothed_stages(array, received, 2)
        theta_axis = np.deg2rad(np.array([80.0, 81.0]))
        with pytest.raises(DetectionFailure) as info:
            angle_spectrum(smoothed, theta_axis, 2, received.freq_grid, array.spacing_m)
        assert info.value.n_wanted == 2
        assert info.value.n_found <= 1


class TestDistanceSpectrum:
    def test_noiseless_truth_angle_recovers_range(self):
        truth = Target(range_m=11.3, angle_rad=np.deg2rad(82.0))
        array, received = desk_received([truth], math.inf)
        decomps = decompose_received(received, 1)
        r_axis = np.arange(8.0, 16.25, 0.25)
        _, r_hat, _ = distance_spectrum(
            truth.angle_rad, decomps, r_axis, received.freq_grid, array
        )
        assert abs(r_hat - truth.range_m) <= 0.25

    def test_alias_candidate_scores_much_lower(self):
        truth = Target(range_m=10.2, angle_rad=np.deg2rad(75.0))
        for seed in range(4):
            array, received = desk_received([truth], 0.0, seed=seed)
            decomps = decompose_received(received, 1)
            candidates = ambiguity_candidates(
                truth.angle_rad, array.carrier_wavelength_m, array.spacing_m
            )
            r_axis = np.arange(5.0, 18.25, 0.25)
            _, _, peak_true = distance_spectrum(
                candidates[0], decomps, r_axis, received.freq_grid, array
            )
            _, _, peak_alias = distance_spectrum(
                candidates[1], decomps, r_axis, received.freq_grid, array
            )
            assert peak_true >= 10.0 * peak_alias

    def test_invariant_to_unit_modulus_basis_scaling(self):
        truth = Target(range_m=10.0, angle_rad=np.deg2rad(80.0))
        array, received = desk_received([truth], 5.0)
        decomps = decompose_received(received, 1)
        scaled = [
            SubspaceDecomposition(
                signal_basis=np.exp(0.7j) * d.signal_basis,
                noise_basis=np.exp(-1.1j) * d.noise_basis,
                eigenvalues=d.eigenvalues,
            )
            for d in decomps
        ]
        r_axis = np.arange(8.0, 12.25, 0.25)
        base, _, _ = distance_spectrum(
            truth.angle_rad, decomps, r_axis, received.freq_grid, array, refine_iters=0
        )
        same, _, _ = distance_spectrum(
            truth.angle_rad, scaled, r_axis, received.freq_grid, array, refine_iters=0
        )
        np.testing.assert_allclose(same, base, rtol=1e-12)


def reference_grid():
    return SearchGrid.from_bounds(
        3.0, 50.0, 0.25, np.deg2rad(60.0), np.deg2rad(120.0), np.deg2rad(0.25), 20
    )


class TestEstimateFresnel:
    def test_noiseless_two_targets_reference_scale(self):
        array = ArrayConfig(128, FC)
        ofdm = OfdmConfig(n_subcarriers=16, spacing_hz=4.8e7, n_symbols=64)
        truths = (
            Target(range_m=20.0, angle_rad=np.deg2rad(80.0)),
            Target(range_m=40.0, angle_rad=np.deg2rad(100.0)),
        )
        received = synthesize_received(array, ofdm, Scene(targets=truths), math.inf, 9)
        estimate = estimate_fresnel(received, 2, reference_grid(), smoothing_windows=50)
        got = sorted((t.range_m, t.angle_rad) for t in estimate.targets)
        for (gr, gt), truth in zip(got, truths):
            assert abs(gr - truth.range_m) <= 0.25
            assert abs(gt - truth.angle_rad) <= np.deg2rad(0.25)

    def test_on_grid_consistency_with_sf(self):
        truths = (
            Target(range_m=10.0, angle_rad=np.deg2rad(75.0)),
            Target(range_m=14.0, angle_rad=np.deg2rad(90.0)),
        )
        array, received = desk_received(truths, math.inf, seed=12)
        grid = SearchGrid.from_bounds(
            8.0, 16.0, 0.25, np.deg2rad(60.0), np.deg2rad(100.0), np.deg2rad(0.25), 20
        )
        est_fr = estimate_fresnel(received, 2, grid)
        est_sf = estimate_sf(received, 2, grid)
        got_fr = sorted((t.range_m, t.angle_rad) for t in est_fr.targets)
        got_sf = sorted((t.range_m, t.angle_rad) for t in est_sf.targets)
        for (fr_r, fr_t), (sf_r, sf_t) in zip(got_fr, got_sf):
            assert fr_r == pytest.approx(sf_r, abs=1e-12)
            assert fr_t == pytest.approx(sf_t, abs=1e-12)
        assert got_fr[0] == pytest.approx((10.0, np.deg2rad(75.0)), abs=1e-12)

    def test_even_array_matches_odd_of_same_aperture(self):
        truth = Target(range_m=10.3, angle_rad=np.deg2rad(77.7))
        grid = SearchGrid.from_bounds(
            8.0, 13.0, 0.25, np.deg2rad(60.0), np.deg2rad(100.0), np.deg2rad(0.25), 0
        )
        angles = []
        for n in (64, 63):
            array, received = desk_received([truth], math.inf, n_elements=n, seed=3)
            estimate = estimate_fresnel(received, 1, grid)
            angles.append(estimate.targets[0].angle_rad)
        assert abs(angles[0] - angles[1]) <= np.deg2rad(0.25)

    def test_smoothing_validity_two_dominant_eigenvalues(self):
        # Under the quadratic-phase model (expectation covariance, no
        # finite-snapshot cross terms) smoothing leaves exactly P dominant
        # eigenvalues for angle phases separated by more than a resolution
        # cell of the virtual array.
        array = ArrayConfig(65, FC)
        truths = [
            Target(range_m=10.0, angle_rad=np.deg2rad(70.0)),
            Target(range_m=14.0, angle_rad=np.deg2rad(95.0)),
        ]
        energies = [0.8, 1.1]
        sigma = fresnel_model_covariance(array, FC, truths, energies)
        smoothed = spatial_smooth(antidiagonal_vector(sigma), 26)
        values = np.linalg.eigvalsh(smoothed.matrix)[::-1]
        assert values[1] > 1e3 * max(values[2], 1e-300)
