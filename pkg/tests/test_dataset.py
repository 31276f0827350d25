"""Tests for vsdoa.dataset: generation, splitting, persistence, kNN."""

import numpy as np
import pytest

from vsdoa import binio
from vsdoa.dataset import (
    GenerationConfig,
    derive_sample_seed,
    generate,
    knn_fingerprint,
    load,
    save,
    split,
)
from vsdoa.geometry import FULL_FOV, LIMITED_FOV, chordal_sq
from vsdoa.features import FEATURE_WIDTH


def small_config(**overrides):
    base = dict(num_sources=2, samples=60, snapshots=64, snr_range_db=(5.0, 15.0), master_seed=9)
    base.update(overrides)
    return GenerationConfig(**base)


class TestGenerationConfig:
    def test_rejects_bad_source_count(self):
        with pytest.raises(ValueError):
            GenerationConfig(num_sources=6)

    def test_rejects_inverted_snr(self):
        with pytest.raises(ValueError):
            GenerationConfig(snr_range_db=(10.0, 0.0))

    def test_dict_round_trip(self):
        cfg = small_config(fov=LIMITED_FOV)
        assert GenerationConfig.from_dict(cfg.to_dict()) == cfg


class TestGenerate:
    def test_labels_elevation_sorted(self):
        ds = generate(small_config(samples=200))
        elevations = ds.doa_labels[:, 0::2]
        assert np.all(np.diff(elevations, axis=1) >= 0)

    def test_labels_inside_fov(self):
        ds = generate(small_config(samples=200, fov=LIMITED_FOV))
        elev = ds.doa_labels[:, 0::2]
        az = ds.doa_labels[:, 1::2]
        assert elev.min() >= 10.0 and elev.max() <= 170.0
        assert az.min() >= 30.0 and az.max() <= 330.0

    def test_worker_count_bit_identical(self):
        cfg = small_config(samples=100)
        solo = generate(cfg, workers=1)
        pooled = generate(cfg, workers=8)
        np.testing.assert_array_equal(solo.features, pooled.features)
        np.testing.assert_array_equal(solo.doa_labels, pooled.doa_labels)

    def test_mixed_counts_and_padding(self):
        ds = generate(small_config(num_sources="mixed", samples=300))
        assert ds.count_labels is not None
        assert set(np.unique(ds.count_labels)) == {1, 2, 3, 4, 5}
        assert ds.doa_labels.shape[1] == 10
        for i in range(len(ds)):
            k = int(ds.count_labels[i])
            row = ds.doa_labels[i]
            assert np.all(row[2 * k :] == -1.0)
            assert np.all(row[: 2 * k] >= 0.0)

    def test_seed_hash_spreads(self):
        seeds = {derive_sample_seed(0, i) for i in range(1000)}
        assert len(seeds) == 1000
        assert derive_sample_seed(1, 0) != derive_sample_seed(0, 0)


class TestSplit:
    def test_sizes(self):
        ds = generate(small_config(samples=100, snapshots=16))
        tr, va, te = split(ds, (0.8, 0.1, 0.1), np.random.default_rng(0))
        assert (len(tr), len(va), len(te)) == (80, 10, 10)

    def test_partition(self):
        ds = generate(small_config(samples=50, snapshots=16))
        parts = split(ds, (0.6, 0.2, 0.2), np.random.default_rng(1))
        stacked = np.concatenate([p.features for p in parts])
        assert stacked.shape[0] == 50
        assert len(np.unique(stacked, axis=0)) == len(np.unique(ds.features, axis=0))

    def test_deterministic(self):
        ds = generate(small_config(samples=50, snapshots=16))
        a = split(ds, (0.6, 0.2, 0.2), np.random.default_rng(2))
        b = split(ds, (0.6, 0.2, 0.2), np.random.default_rng(2))
        np.testing.assert_array_equal(a[0].features, b[0].features)

    def test_rejects_bad_fractions(self):
        ds = generate(small_config(samples=10, snapshots=16))
        with pytest.raises(ValueError):
            split(ds, (0.5, 0.2, 0.2), np.random.default_rng(0))


class TestSaveLoad:
    def test_round_trip_bit_exact(self, tmp_path):
        ds = generate(small_config(samples=40, snapshots=16))
        path = tmp_path / "ds.vsds"
        save(ds, path)
        loaded = load(path)
        np.testing.assert_array_equal(loaded.features, ds.features)
        np.testing.assert_array_equal(loaded.doa_labels, ds.doa_labels)
        assert loaded.config == ds.config
        save(loaded, tmp_path / "ds2.vsds")
        assert (tmp_path / "ds.vsds").read_bytes() == (tmp_path / "ds2.vsds").read_bytes()

    def test_mixed_round_trip(self, tmp_path):
        ds = generate(small_config(num_sources="mixed", samples=40, snapshots=16))
        save(ds, tmp_path / "m.vsds")
        loaded = load(tmp_path / "m.vsds")
        np.testing.assert_array_equal(loaded.count_labels, ds.count_labels)

    def test_corrupt_magic_rejected(self, tmp_path):
        path = tmp_path / "ds.vsds"
        save(generate(small_config(samples=5, snapshots=16)), path)
        data = bytearray(path.read_bytes())
        data[:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with pytest.raises(binio.BadMagicError):
            load(path)

    def test_version_gate(self, tmp_path):
        path = tmp_path / "ds.vsds"
        save(generate(small_config(samples=5, snapshots=16)), path)
        data = bytearray(path.read_bytes())
        data[4] = 99  # format version field
        path.write_bytes(bytes(data))
        with pytest.raises(binio.VersionError):
            load(path)

    def test_flipped_payload_byte_fails_checksum(self, tmp_path):
        path = tmp_path / "ds.vsds"
        save(generate(small_config(samples=5, snapshots=16)), path)
        data = bytearray(path.read_bytes())
        data[-20] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(binio.ChecksumError):
            load(path)

    def test_truncation_rejected(self, tmp_path):
        path = tmp_path / "ds.vsds"
        save(generate(small_config(samples=5, snapshots=16)), path)
        path.write_bytes(path.read_bytes()[:30])
        with pytest.raises(binio.TruncatedError):
            load(path)


class TestKnnFingerprint:
    @pytest.fixture(scope="class")
    def dense_ds(self):
        # noiseless single source: fingerprints are exact, so neighbors in
        # feature space should be neighbors on the sphere
        cfg = GenerationConfig(
            num_sources=1, samples=4000, snapshots=8, snr_range_db=(300.0, 300.0), fov=FULL_FOV, master_seed=21
        )
        return generate(cfg)

    def test_self_match_when_included(self, dense_ds):
        report = knn_fingerprint(dense_ds, 17, k=1, include_self=True)
        assert report.neighbor_indices[0] == 17
        assert report.distances[0] == 0.0

    def test_neighbors_have_close_labels(self, dense_ds):
        rng = np.random.default_rng(3)
        queries = rng.integers(0, len(dense_ds), 100)
        nn_dists, random_dists = [], []
        for q in queries:
            report = knn_fingerprint(dense_ds, int(q), k=3)
            qe, qa = np.radians(report.query_label_pairs[0])
            for pairs in report.neighbor_label_pairs:
                ne, na = np.radians(pairs[0])
                nn_dists.append(np.sqrt(chordal_sq(qe, qa, ne, na)))
            r = int(rng.integers(0, len(dense_ds)))
            re_, ra = np.radians(dense_ds.label_pairs(r)[0])
            random_dists.append(np.sqrt(chordal_sq(qe, qa, re_, ra)))
        assert np.mean(nn_dists) < np.mean(random_dists) / 10.0

    def test_distances_ascending_and_k_rows(self, dense_ds):
        report = knn_fingerprint(dense_ds, 5, k=7)
        assert len(report.neighbor_indices) == 7
        assert np.all(np.diff(report.distances) >= 0)
        assert 5 not in report.neighbor_indices

    def test_k_too_large(self, dense_ds):
        with pytest.raises(ValueError):
            knn_fingerprint(dense_ds, 0, k=len(dense_ds))


class TestPermutationCommutativity:
    def test_shuffled_draw_order_same_sample(self):
        """The same scene synthesized twice must fingerprint identically."""
        from vsdoa.features import sample_covariance, vectorize
        from vsdoa.geometry import DoA, sort_doa_pairs
        from vsdoa.signal_model import SourceSpec, synth_snapshots

        rng = np.random.default_rng(5)
        specs = [
            SourceSpec(DoA.from_degrees(40, 100), power_db=0.0),
            SourceSpec(DoA.from_degrees(120, 200), power_db=2.0),
            SourceSpec(DoA.from_degrees(80, 300), power_db=-1.0),
        ]
        perm = [specs[1], specs[2], specs[0]]
        f1 = vectorize(sample_covariance(synth_snapshots(specs, 10.0, 128, np.random.default_rng(42))))
        f2 = vectorize(sample_covariance(synth_snapshots(perm, 10.0, 128, np.random.default_rng(42))))
        np.testing.assert_allclose(f1, f2, rtol=1e-10)
        pairs = np.array([[s.doa.to_degrees() for s in specs]])
        np.testing.assert_array_equal(sort_doa_pairs(pairs), sort_doa_pairs(pairs[:, [1, 2, 0], :]))
