"""Covariance fingerprints: the 42-real feature every network consumes.

The 6 x 6 sample covariance Z = X X^H / N compresses a snapshot block into
a fixed-size summary that is independent of the modulation and averages
the additive noise down to a diagonal floor. Its upper triangle (21
complex entries, row-major) is split into interleaved real/imaginary
slots, giving a 42-real vector; the six diagonal imaginary slots are
structurally zero and harmless after standardization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import signal_model
from .geometry import FULL_FOV, FieldOfView, sample_uniform_sphere

FEATURE_LAYOUT_VERSION = 1
FEATURE_WIDTH = 42

_UPPER = np.triu_indices(signal_model.N_ANTENNAS)
STD_FLOOR = 1e-8


def sample_covariance(x: np.ndarray) -> np.ndarray:
    """Snapshot-count-normalized sample covariance Z = X X^H / N.

    Normalizing by N makes the fingerprint invariant to the snapshot
    count, so one model serves any N. The result is exactly Hermitian.
    """
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != signal_model.N_ANTENNAS:
        raise ValueError(f"expected a ({signal_model.N_ANTENNAS}, N) snapshot matrix, got {x.shape}")
    z = x @ x.conj().T / x.shape[1]
    return 0.5 * (z + z.conj().T)


def analytic_covariance(specs, noise_var: float = 0.0) -> np.ndarray:
    """Expected covariance A diag(p) A^H + noise_var * I for uncorrelated sources."""
    a = signal_model.manifold(specs)
    powers = signal_model.source_amplitudes(specs) ** 2
    return (a * powers) @ a.conj().T + noise_var * np.eye(signal_model.N_ANTENNAS)


def vectorize(z: np.ndarray) -> np.ndarray:
    """Upper triangle of a Hermitian 6 x 6 matrix as 42 interleaved reals.

    Slot 2*m holds the real part and slot 2*m + 1 the imaginary part of
    the m-th upper-triangle entry in row-major order.
    """
    vals = np.asarray(z)[_UPPER]
    feature = np.empty(FEATURE_WIDTH)
    feature[0::2] = vals.real
    feature[1::2] = vals.imag
    return feature


def devectorize(feature: np.ndarray) -> np.ndarray:
    """Rebuild the Hermitian matrix from its 42-slot fingerprint."""
    feature = np.asarray(feature)
    if feature.shape != (FEATURE_WIDTH,):
        raise ValueError(f"expected a ({FEATURE_WIDTH},) feature, got {feature.shape}")
    vals = feature[0::2] + 1j * feature[1::2]
    z = np.zeros((signal_model.N_ANTENNAS, signal_model.N_ANTENNAS), dtype=np.complex128)
    z[_UPPER] = vals
    lower = np.tril_indices(signal_model.N_ANTENNAS, k=-1)
    z[lower] = z.conj().T[lower]
    return z


@dataclass(frozen=True)
class FeatureStats:
    """Per-dimension standardization constants fitted on a training set."""

    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureStats":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def fit_stats(features: np.ndarray) -> FeatureStats:
    """Fit per-dimension mean and deviation, flooring degenerate deviations."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("fit_stats needs a nonempty (n, width) feature matrix")
    return FeatureStats(
        mean=features.mean(axis=0),
        std=np.maximum(features.std(axis=0), STD_FLOOR),
    )


def standardize(features: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """Z-score features with frozen training statistics."""
    return (np.asarray(features, dtype=np.float64) - stats.mean) / stats.std


def snapshot_snr_tradeoff(
    snr_grid_db,
    n_grid,
    trials: int,
    rng: np.random.Generator,
    fov: FieldOfView = FULL_FOV,
    pol: signal_model.Polarization = signal_model.DEFAULT_POLARIZATION,
    waveform: str = "digital",
):
    """Fingerprint error versus snapshot count and SNR for one source.

    For each (snr, N) cell, draws ``trials`` random single-source scenes,
    and measures the deviation of the sampled fingerprint from the
    noise-free analytic one. Returns one row dict per cell with
    ``mean_err`` (mean per-slot RMS deviation across trials) and ``mse``
    (mean per-slot squared deviation), ready for CSV export.
    """
    if len(snr_grid_db) == 0 or len(n_grid) == 0:
        raise ValueError("snr and snapshot grids must be nonempty")
    rows = []
    for snr_db in snr_grid_db:
        for n in n_grid:
            sq_errs = np.empty(trials)
            for t in range(trials):
                doa = sample_uniform_sphere(rng, fov)
                spec = signal_model.SourceSpec(doa, pol=pol, waveform=waveform)
                x = signal_model.synth_snapshots([spec], snr_db, n, rng)
                sampled = vectorize(sample_covariance(x))
                clean = vectorize(analytic_covariance([spec]))
                sq_errs[t] = np.mean((sampled - clean) ** 2)
            rows.append(
                {
                    "snr_db": float(snr_db),
                    "n_snapshots": int(n),
                    "mean_err": float(np.mean(np.sqrt(sq_errs))),
                    "mse": float(np.mean(sq_errs)),
                }
            )
    return rows
