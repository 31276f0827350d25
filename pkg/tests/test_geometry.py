"""Tests for vsdoa.geometry."""

import numpy as np
import pytest

from vsdoa.geometry import (
    DoA,
    FULL_FOV,
    FieldOfView,
    LIMITED_FOV,
    chordal_sq,
    chordal_sq_distance,
    doa_to_unit,
    sample_uniform_sphere,
    sort_by_elevation,
    sort_doa_pairs,
    unit_vectors,
    wrapped_azimuth_error,
)


class TestDoA:
    def test_normalizes_azimuth(self):
        d = DoA(1.0, 2.0 * np.pi + 0.25)
        assert d.azimuth == pytest.approx(0.25)

    def test_reflects_over_pole(self):
        d = DoA(np.radians(190.0), 0.0)
        assert np.degrees(d.elevation) == pytest.approx(170.0)
        assert np.degrees(d.azimuth) == pytest.approx(180.0)

    def test_degrees_round_trip(self):
        d = DoA.from_degrees(42.0, 123.0)
        assert d.to_degrees() == (pytest.approx(42.0), pytest.approx(123.0))


class TestDoaToUnit:
    def test_north_pole(self):
        np.testing.assert_allclose(doa_to_unit(DoA(0.0, 1.234)), [0.0, 0.0, 1.0], atol=1e-15)

    def test_x_axis(self):
        np.testing.assert_allclose(doa_to_unit(DoA.from_degrees(90, 0)), [1.0, 0.0, 0.0], atol=1e-15)

    def test_y_axis(self):
        np.testing.assert_allclose(doa_to_unit(DoA.from_degrees(90, 90)), [0.0, 1.0, 0.0], atol=1e-15)


class TestChordal:
    def test_identity_is_zero(self):
        d = DoA.from_degrees(57.0, 211.0)
        assert chordal_sq_distance(d, d) == pytest.approx(0.0, abs=1e-14)

    def test_antipodal_is_four(self):
        assert chordal_sq_distance(DoA(0.0, 0.0), DoA.from_degrees(180.0, 0.0)) == pytest.approx(4.0)

    def test_orthogonal_is_two(self):
        a = DoA.from_degrees(90, 0)
        b = DoA.from_degrees(90, 90)
        assert chordal_sq_distance(a, b) == pytest.approx(2.0)

    def test_matches_unit_vector_distance(self):
        """Closed form equals squared Euclidean distance for 1e4 random pairs."""
        rng = np.random.default_rng(0)
        e1, a1 = sample_uniform_sphere(rng, size=10_000)
        e2, a2 = sample_uniform_sphere(rng, size=10_000)
        closed = chordal_sq(e1, a1, e2, a2)
        vecs = np.sum((unit_vectors(e1, a1) - unit_vectors(e2, a2)) ** 2, axis=-1)
        np.testing.assert_allclose(closed, vecs, atol=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        e1, a1 = sample_uniform_sphere(rng, size=100)
        e2, a2 = sample_uniform_sphere(rng, size=100)
        np.testing.assert_allclose(chordal_sq(e1, a1, e2, a2), chordal_sq(e2, a2, e1, a1), atol=1e-14)


class TestWrappedAzimuthError:
    def test_wrap_at_zero(self):
        assert wrapped_azimuth_error(1.0, 359.0) == pytest.approx(2.0)

    def test_identity(self):
        assert wrapped_azimuth_error(180.0, 180.0) == 0.0

    def test_wrap_symmetry(self):
        assert wrapped_azimuth_error(350.0, 10.0) == pytest.approx(20.0)

    def test_never_exceeds_180(self):
        rng = np.random.default_rng(2)
        t = rng.uniform(0, 360, 1000)
        e = rng.uniform(0, 360, 1000)
        assert np.all(wrapped_azimuth_error(t, e) <= 180.0)


class TestSortByElevation:
    def test_reorders_pairs_together(self):
        doas = [DoA.from_degrees(30, 60), DoA.from_degrees(20, 50)]
        out = sort_by_elevation(doas)
        assert out[0].to_degrees() == (pytest.approx(20), pytest.approx(50))
        assert out[1].to_degrees() == (pytest.approx(30), pytest.approx(60))

    def test_idempotent_permutation(self):
        rng = np.random.default_rng(3)
        doas = [sample_uniform_sphere(rng) for _ in range(5)]
        once = sort_by_elevation(doas)
        assert sort_by_elevation(once) == once
        assert sorted(d.elevation for d in doas) == [d.elevation for d in once]

    def test_tie_breaks_by_azimuth(self):
        doas = [DoA.from_degrees(20, 90), DoA.from_degrees(20, 10)]
        out = sort_by_elevation(doas)
        assert [round(d.to_degrees()[1]) for d in out] == [10, 90]

    def test_array_version_matches(self):
        rng = np.random.default_rng(4)
        elev, az = sample_uniform_sphere(rng, size=(200, 4))
        pairs = np.stack([elev, az], axis=-1)
        sorted_pairs = sort_doa_pairs(pairs)
        assert np.all(np.diff(sorted_pairs[..., 0], axis=-1) >= 0)
        for row, out_row in zip(pairs[:5], sorted_pairs[:5]):
            expected = sort_by_elevation([DoA(e, a) for e, a in row])
            np.testing.assert_allclose(out_row[:, 0], [d.elevation for d in expected])


class TestFieldOfView:
    def test_rejects_inverted_range(self):
        with pytest.raises(ValueError):
            FieldOfView((170.0, 10.0), (0.0, 360.0))

    def test_rejects_out_of_domain(self):
        with pytest.raises(ValueError):
            FieldOfView((0.0, 200.0), (0.0, 360.0))

    def test_contains(self):
        assert LIMITED_FOV.contains(90.0, 180.0)
        assert not LIMITED_FOV.contains(5.0, 180.0)

    def test_dict_round_trip(self):
        assert FieldOfView.from_dict(LIMITED_FOV.to_dict()) == LIMITED_FOV


class TestSampleUniformSphere:
    def test_full_sphere_mean_vector_small(self):
        """Mean Cartesian vector of 1e5 uniform draws stays near zero."""
        rng = np.random.default_rng(5)
        elev, az = sample_uniform_sphere(rng, FULL_FOV, size=100_000)
        mean_vec = unit_vectors(elev, az).mean(axis=0)
        assert np.linalg.norm(mean_vec) < 0.02

    def test_limited_fov_containment(self):
        rng = np.random.default_rng(6)
        elev, az = sample_uniform_sphere(rng, LIMITED_FOV, size=20_000)
        assert np.all(LIMITED_FOV.contains(np.degrees(elev), np.degrees(az)))

    def test_seeded_determinism(self):
        a = sample_uniform_sphere(np.random.default_rng(7), size=50)
        b = sample_uniform_sphere(np.random.default_rng(7), size=50)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_cos_elevation_uniform(self):
        """Chi-square on 20 bins of cos(elevation) over the full sphere."""
        from scipy import stats

        rng = np.random.default_rng(8)
        elev, _ = sample_uniform_sphere(rng, FULL_FOV, size=100_000)
        observed, _ = np.histogram(np.cos(elev), bins=20, range=(-1.0, 1.0))
        _, p = stats.chisquare(observed)
        assert p > 0.001

    def test_scalar_draw_returns_doa(self):
        d = sample_uniform_sphere(np.random.default_rng(9))
        assert isinstance(d, DoA)
