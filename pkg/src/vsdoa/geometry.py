"""Angle conventions and unit-sphere geometry for direction-of-arrival labels.

Conventions used across the whole package:

* ``elevation`` is the polar angle measured from the +z axis, in
  ``[0, pi)`` radians (0 points at the z pole, pi/2 is the horizon plane).
* ``azimuth`` is measured counterclockwise from the +x axis, in
  ``[0, 2*pi)`` radians.
* Angles are stored in radians; degrees appear only at I/O boundaries
  and in reported error metrics.

All functions accept scalars or numpy arrays and vectorize elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_angles(elevation, azimuth):
    """Normalize (elevation, azimuth) onto the canonical sphere ranges.

    Elevations outside [0, pi] are reflected across the nearest pole,
    which carries the azimuth to the antipodal meridian; azimuth is then
    reduced modulo 2*pi.
    """
    elev = np.mod(elevation, TWO_PI)
    over = elev > np.pi
    elev = np.where(over, TWO_PI - elev, elev)
    az = np.mod(np.where(over, np.asarray(azimuth) + np.pi, azimuth), TWO_PI)
    return elev, az


@dataclass(frozen=True)
class DoA:
    """A direction of arrival on the unit sphere.

    Attributes
    ----------
    elevation : float
        Polar angle from +z in radians, normalized into [0, pi).
    azimuth : float
        Angle from +x in radians, normalized into [0, 2*pi).
    """

    elevation: float
    azimuth: float

    def __post_init__(self):
        elev, az = wrap_angles(float(self.elevation), float(self.azimuth))
        object.__setattr__(self, "elevation", float(elev))
        object.__setattr__(self, "azimuth", float(az))

    @classmethod
    def from_degrees(cls, elevation_deg: float, azimuth_deg: float) -> "DoA":
        return cls(np.radians(elevation_deg), np.radians(azimuth_deg))

    def to_degrees(self) -> tuple[float, float]:
        return float(np.degrees(self.elevation)), float(np.degrees(self.azimuth))


@dataclass(frozen=True)
class FieldOfView:
    """Admitted (elevation, azimuth) region, stored in degrees."""

    elevation_deg: tuple[float, float] = (0.0, 180.0)
    azimuth_deg: tuple[float, float] = (0.0, 360.0)

    def __post_init__(self):
        elo, ehi = self.elevation_deg
        alo, ahi = self.azimuth_deg
        if not (0.0 <= elo < ehi <= 180.0):
            raise ValueError(f"invalid elevation range: {self.elevation_deg}")
        if not (0.0 <= alo < ahi <= 360.0):
            raise ValueError(f"invalid azimuth range: {self.azimuth_deg}")
        object.__setattr__(self, "elevation_deg", (float(elo), float(ehi)))
        object.__setattr__(self, "azimuth_deg", (float(alo), float(ahi)))

    def contains(self, elevation_deg, azimuth_deg):
        elo, ehi = self.elevation_deg
        alo, ahi = self.azimuth_deg
        inside = (
            (np.asarray(elevation_deg) >= elo)
            & (np.asarray(elevation_deg) <= ehi)
            & (np.asarray(azimuth_deg) >= alo)
            & (np.asarray(azimuth_deg) <= ahi)
        )
        return bool(inside) if np.ndim(inside) == 0 else inside

    def to_dict(self) -> dict:
        return {"elevation_deg": list(self.elevation_deg), "azimuth_deg": list(self.azimuth_deg)}

    @classmethod
    def from_dict(cls, d: dict) -> "FieldOfView":
        return cls(tuple(d["elevation_deg"]), tuple(d["azimuth_deg"]))


FULL_FOV = FieldOfView((0.0, 180.0), (0.0, 360.0))
LIMITED_FOV = FieldOfView((10.0, 170.0), (30.0, 330.0))


def sample_uniform_sphere(rng: np.random.Generator, fov: FieldOfView = FULL_FOV, size=None):
    """Draw directions uniform w.r.t. sphere surface area restricted to ``fov``.

    The cosine of the elevation is uniform over the admitted interval and
    the azimuth is uniform over its interval, so no clustering appears at
    the poles.

    Returns a single :class:`DoA` when ``size`` is None, otherwise a pair
    of arrays ``(elevation, azimuth)`` in radians.
    """
    elo, ehi = np.radians(fov.elevation_deg)
    alo, ahi = np.radians(fov.azimuth_deg)
    u = rng.uniform(np.cos(ehi), np.cos(elo), size=size)
    elevation = np.arccos(u)
    azimuth = rng.uniform(alo, ahi, size=size)
    if size is None:
        return DoA(float(elevation), float(azimuth))
    return elevation, azimuth


def unit_vectors(elevation, azimuth) -> np.ndarray:
    """Cartesian unit vectors for (elevation, azimuth), stacked on the last axis."""
    st = np.sin(elevation)
    return np.stack(
        [st * np.cos(azimuth), st * np.sin(azimuth), np.broadcast_to(np.cos(elevation), np.shape(st))],
        axis=-1,
    )


def doa_to_unit(d: DoA) -> np.ndarray:
    """Unit vector (x, y, z) = (sin el cos az, sin el sin az, cos el)."""
    return unit_vectors(d.elevation, d.azimuth)


def chordal_sq(elev_a, az_a, elev_b, az_b):
    """Squared chord length between two sphere points, in [0, 4].

    Equals the squared Euclidean distance between the corresponding unit
    vectors; the azimuth enters only through cos(az_a - az_b), so full
    turns are free.
    """
    d = 2.0 * (
        1.0
        - np.sin(elev_a) * np.sin(elev_b) * np.cos(np.asarray(az_a) - np.asarray(az_b))
        - np.cos(elev_a) * np.cos(elev_b)
    )
    return np.maximum(d, 0.0)


def chordal_sq_distance(a: DoA, b: DoA) -> float:
    return float(chordal_sq(a.elevation, a.azimuth, b.elevation, b.azimuth))


def wrapped_azimuth_error(truth_deg, estimate_deg):
    """Smallest azimuth separation in degrees, in [0, 180].

    359 degrees against a truth of 1 degree is a 2 degree error, not 358.
    """
    delta = np.abs(np.mod(truth_deg, 360.0) - np.mod(estimate_deg, 360.0))
    err = np.minimum(delta, 360.0 - delta)
    return float(err) if np.ndim(err) == 0 else err


def sort_by_elevation(doas):
    """Sort directions by ascending elevation, ties by ascending azimuth.

    The azimuth travels with its elevation; the result is a permutation
    of the input.
    """
    return sorted(doas, key=lambda d: (d.elevation, d.azimuth))


def sort_doa_pairs(pairs: np.ndarray) -> np.ndarray:
    """Sort an (..., K, 2) array of (elevation, azimuth) pairs per row.

    Ascending elevation with ascending-azimuth tie break, matching
    :func:`sort_by_elevation`. Works in any angle unit.
    """
    pairs = np.asarray(pairs)
    order = np.lexsort((pairs[..., 1], pairs[..., 0]), axis=-1)
    return np.take_along_axis(pairs, order[..., None], axis=-2)
