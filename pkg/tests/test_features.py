"""Tests for vsdoa.features: covariance, vectorization, standardization."""

import numpy as np
import pytest

from vsdoa.features import (
    FEATURE_WIDTH,
    analytic_covariance,
    devectorize,
    fit_stats,
    sample_covariance,
    snapshot_snr_tradeoff,
    standardize,
    vectorize,
)
from vsdoa.geometry import DoA, sample_uniform_sphere
from vsdoa.signal_model import SourceSpec, noise_variance, synth_noise, synth_snapshots


class TestSampleCovariance:
    def test_noiseless_single_source_matches_analytic(self):
        rng = np.random.default_rng(0)
        spec = SourceSpec(sample_uniform_sphere(rng))
        x = synth_snapshots([spec], np.inf, 100_000, rng)
        z = sample_covariance(x)
        target = analytic_covariance([spec])
        assert np.linalg.norm(z - target) / np.linalg.norm(target) < 0.02

    def test_noise_only_converges_to_identity(self):
        noise = synth_noise(100_000, 1.0, np.random.default_rng(1))
        z = sample_covariance(noise)
        assert np.linalg.norm(z - np.eye(6)) < 0.05

    def test_exactly_hermitian(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((6, 50)) + 1j * rng.standard_normal((6, 50))
        z = sample_covariance(x)
        np.testing.assert_array_equal(z, z.conj().T)
        assert np.all(np.diag(z).real >= 0)
        assert np.all(np.diag(z).imag == 0)

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError):
            sample_covariance(np.zeros((5, 10)))


class TestVectorize:
    def test_identity_matrix_layout(self):
        f = vectorize(np.eye(6, dtype=complex))
        ones = np.flatnonzero(f == 1.0)
        assert len(ones) == 6
        # diagonal real slots sit at the start of each row's triangle run
        assert f.sum() == 6.0
        assert np.all(f[1::2] == 0.0)

    def test_zero_matrix(self):
        np.testing.assert_array_equal(vectorize(np.zeros((6, 6))), np.zeros(FEATURE_WIDTH))

    def test_round_trip_exact(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((6, 40)) + 1j * rng.standard_normal((6, 40))
        z = sample_covariance(x)
        np.testing.assert_array_equal(devectorize(vectorize(z)), z)

    def test_width(self):
        assert vectorize(np.eye(6)).shape == (FEATURE_WIDTH,)


class TestFeatureStats:
    def test_fit_then_standardize_centers(self):
        rng = np.random.default_rng(4)
        feats = rng.standard_normal((500, FEATURE_WIDTH)) * rng.uniform(0.5, 3.0, FEATURE_WIDTH)
        stats = fit_stats(feats)
        z = standardize(feats, stats)
        assert np.abs(z.mean(axis=0)).max() < 1e-9
        np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-9)

    def test_constant_dimension_maps_to_zero(self):
        feats = np.ones((100, FEATURE_WIDTH))
        stats = fit_stats(feats)
        z = standardize(feats, stats)
        np.testing.assert_array_equal(z, np.zeros_like(z))

    def test_frozen_stats_deterministic(self):
        rng = np.random.default_rng(5)
        feats = rng.standard_normal((50, FEATURE_WIDTH))
        stats = fit_stats(feats)
        np.testing.assert_array_equal(standardize(feats, stats), standardize(feats, stats))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            fit_stats(np.zeros((0, FEATURE_WIDTH)))


class TestSourcePermutationInvariance:
    def test_permuted_sources_same_feature(self):
        rng = np.random.default_rng(6)
        specs = [SourceSpec(sample_uniform_sphere(rng), power_db=p) for p in (0.0, 2.0, -1.0)]
        f1 = vectorize(sample_covariance(synth_snapshots(specs, 10.0, 256, np.random.default_rng(9))))
        perm = [specs[2], specs[0], specs[1]]
        f2 = vectorize(sample_covariance(synth_snapshots(perm, 10.0, 256, np.random.default_rng(9))))
        np.testing.assert_allclose(f1, f2, rtol=1e-10, atol=1e-12)


class TestWaveformInvariance:
    def test_mean_feature_matches_across_waveforms(self):
        """Fingerprints depend on the scene, not the modulation."""
        doa = DoA.from_degrees(70.0, 100.0)
        means = {}
        for waveform in ("single_tone", "digital"):
            rng = np.random.default_rng(7)
            acc = np.zeros(FEATURE_WIDTH)
            for _ in range(100):
                x = synth_snapshots([SourceSpec(doa, waveform=waveform)], 10.0, 4000, rng)
                acc += vectorize(sample_covariance(x))
            means[waveform] = acc / 100
        scale = np.abs(vectorize(analytic_covariance([SourceSpec(doa)], noise_variance(10.0))))
        live = scale > 0.01  # skip structurally-zero slots
        rel = np.abs(means["single_tone"][live] - means["digital"][live]) / scale[live]
        assert rel.max() < 0.05


class TestEigenvalueRank:
    @pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
    def test_analytic_covariance_rank(self, k):
        rng = np.random.default_rng(80 + k)
        specs = [SourceSpec(sample_uniform_sphere(rng)) for _ in range(k)]
        nv = 0.01
        z = analytic_covariance(specs, nv)
        eigvals = np.linalg.eigvalsh(z)
        assert int(np.sum(eigvals > nv + 1e-6)) == k


class TestSnapshotSnrTradeoff:
    def test_error_decreases_with_snapshots(self):
        rng = np.random.default_rng(8)
        rows = snapshot_snr_tradeoff([10.0], [30, 300], 50, rng)
        table = {r["n_snapshots"]: r["mean_err"] for r in rows}
        assert table[300] < table[30]

    def test_ten_x_snapshots_tracks_three_db(self):
        """Ten times the snapshots buys about 3 dB of SNR, within 2x."""
        rng = np.random.default_rng(9)
        rows = snapshot_snr_tradeoff([0.0, 5.0, 10.0, -3.0, 2.0, 7.0], [10, 30, 100, 300], 50, rng)
        table = {(r["snr_db"], r["n_snapshots"]): r["mean_err"] for r in rows}
        for snr in (0.0, 5.0, 10.0):
            for n in (10, 30):
                ratio = table[(snr, n)] / table[(snr - 3.0, 10 * n)]
                assert 0.5 <= ratio <= 2.0, (snr, n, ratio)

    def test_noiseless_error_vanishes_with_snapshots(self):
        rng = np.random.default_rng(10)
        rows = snapshot_snr_tradeoff([np.inf], [100, 10_000], 20, rng)
        table = {r["n_snapshots"]: r["mean_err"] for r in rows}
        assert table[10_000] < table[100] / 5.0

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            snapshot_snr_tradeoff([], [10], 5, np.random.default_rng(0))
