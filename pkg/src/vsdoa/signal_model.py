"""Vector-sensor snapshot synthesis.

A vector sensor measures all six electromagnetic field components (three
electric, three magnetic) of incident plane waves at a single point. The
received 6 x N data matrix follows X = A S + n, where A holds one steering
column per source, S the unit-power source symbols scaled by per-source
amplitudes, and n circular white Gaussian noise.

The steering response for a wave from polar angle ``el``, azimuth ``az``
with polarization (gamma, eta) is built from the two tangent-frame unit
vectors

    theta_hat = (cos el cos az, cos el sin az, -sin el)
    phi_hat   = (-sin az, cos az, 0)

as ``a = w0 * [theta_hat; phi_hat] + w1 * [phi_hat; -theta_hat]`` with
weights ``w = (sin gamma * exp(j eta), cos gamma)``. The two 6-vector basis
columns are orthogonal with squared norm 2, so every steering vector has
squared norm 2; the magnetic triple equals u x e for propagation direction
u, and both triples are transverse to u.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import DoA, unit_vectors

N_ANTENNAS = 6
MAX_SOURCES = 5
WAVEFORMS = ("single_tone", "digital")


@dataclass(frozen=True)
class Polarization:
    """Wave polarization state: auxiliary angle gamma, phase difference eta."""

    gamma: float
    eta: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= np.pi / 2:
            raise ValueError(f"gamma must lie in [0, pi/2], got {self.gamma}")
        if not -np.pi <= self.eta <= np.pi:
            raise ValueError(f"eta must lie in [-pi, pi], got {self.eta}")


# Fixed default; configurable per run. Both basis columns stay active and
# the polarization is deliberately elliptical: at circular polarization
# (gamma = 45 deg, eta = +/-90 deg) the magnetic triple degenerates to
# +/-j times the electric triple and the steering family collapses into a
# rank-3 subspace, which starves multi-source fingerprints.
DEFAULT_POLARIZATION = Polarization(gamma=np.pi / 4, eta=np.pi / 4)


@dataclass(frozen=True)
class SourceSpec:
    """One emitter: direction, polarization, power offset, waveform.

    ``power_db`` is relative to the 0 dB reference level that also anchors
    the SNR definition; the first source of a scene conventionally sits
    at 0 dB.
    """

    doa: DoA
    pol: Polarization = DEFAULT_POLARIZATION
    power_db: float = 0.0
    waveform: str = "digital"

    def __post_init__(self):
        if self.waveform not in WAVEFORMS:
            raise ValueError(f"unknown waveform {self.waveform!r}, expected one of {WAVEFORMS}")


def response_basis(elevation, azimuth) -> np.ndarray:
    """The real 6 x 2 steering basis for given angles, shape (..., 6, 2).

    Column 0 stacks (theta_hat, phi_hat), column 1 stacks (phi_hat,
    -theta_hat); the columns are orthogonal with squared norm 2.
    """
    ce, se = np.cos(elevation), np.sin(elevation)
    ca, sa = np.cos(azimuth), np.sin(azimuth)
    zero = np.zeros(np.broadcast_shapes(np.shape(ce), np.shape(ca)))
    theta_hat = np.stack([ce * ca, ce * sa, -se + zero], axis=-1)
    phi_hat = np.stack([-sa + zero, ca + zero, zero], axis=-1)
    col0 = np.concatenate([theta_hat, phi_hat], axis=-1)
    col1 = np.concatenate([phi_hat, -theta_hat], axis=-1)
    return np.stack([col0, col1], axis=-1)


def steering_vectors(elevation, azimuth, gamma, eta) -> np.ndarray:
    """Complex 6-component steering responses, shape (..., 6)."""
    basis = response_basis(elevation, azimuth)
    w0 = np.sin(gamma) * np.exp(1j * np.asarray(eta, dtype=np.float64))
    w1 = np.cos(gamma) + 0j
    return basis[..., 0] * np.asarray(w0)[..., None] + basis[..., 1] * np.asarray(w1)[..., None]


def steering_vector(doa: DoA, pol: Polarization = DEFAULT_POLARIZATION) -> np.ndarray:
    """Steering response of a single source, shape (6,) complex."""
    return steering_vectors(doa.elevation, doa.azimuth, pol.gamma, pol.eta)


def manifold(specs) -> np.ndarray:
    """Array manifold: one steering column per source, shape (6, K)."""
    if not 1 <= len(specs) <= MAX_SOURCES:
        raise ValueError(f"source count must be 1..{MAX_SOURCES}, got {len(specs)}")
    return np.stack([steering_vector(s.doa, s.pol) for s in specs], axis=1)


def source_amplitudes(specs) -> np.ndarray:
    """Per-source linear amplitudes sqrt(p_k) from the dB offsets."""
    return np.asarray([10.0 ** (s.power_db / 20.0) for s in specs])


def synth_symbols(waveform: str, n_snapshots: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-average-power source symbols of length ``n_snapshots``.

    ``single_tone`` emits exp(j*(w*n + psi)) with frequency uniform on
    (0, pi) rad/sample (avoiding DC) and uniform phase; ``digital`` emits
    independent unit-modulus QPSK symbols.
    """
    if n_snapshots < 1:
        raise ValueError("n_snapshots must be >= 1")
    if waveform == "single_tone":
        omega = rng.uniform(0.0, np.pi)
        psi = rng.uniform(0.0, 2.0 * np.pi)
        return np.exp(1j * (omega * np.arange(n_snapshots) + psi))
    if waveform == "digital":
        quadrant = rng.integers(0, 4, size=n_snapshots)
        return np.exp(1j * (np.pi / 4 + np.pi / 2 * quadrant))
    raise ValueError(f"unknown waveform {waveform!r}")


def synth_noise(n_snapshots: int, noise_var: float, rng: np.random.Generator) -> np.ndarray:
    """Circular white Gaussian noise, variance ``noise_var`` per antenna."""
    scale = np.sqrt(noise_var / 2.0)
    re = rng.standard_normal((N_ANTENNAS, n_snapshots))
    im = rng.standard_normal((N_ANTENNAS, n_snapshots))
    return scale * (re + 1j * im)


def noise_variance(snr_db: float) -> float:
    """Per-antenna noise variance for an SNR quoted against the 0 dB source power."""
    return 10.0 ** (-snr_db / 10.0)


def _canonical_order(specs):
    return sorted(
        range(len(specs)),
        key=lambda i: (
            specs[i].doa.elevation,
            specs[i].doa.azimuth,
            specs[i].pol.gamma,
            specs[i].pol.eta,
            specs[i].power_db,
            specs[i].waveform,
        ),
    )


def synth_snapshots(specs, snr_db: float, n_snapshots: int, rng: np.random.Generator) -> np.ndarray:
    """Received data X = A S + n, shape (6, n_snapshots) complex.

    SNR is 10*log10(p_ref / noise_var) with p_ref the 0 dB source power,
    so the noise level does not depend on how the sources are listed.
    Source contributions (and their symbol draws) are accumulated in a
    canonical angle order, which makes the result independent of the
    ordering of ``specs``. Pass ``snr_db=inf`` for a noiseless scene.
    """
    if not 1 <= len(specs) <= MAX_SOURCES:
        raise ValueError(f"source count must be 1..{MAX_SOURCES}, got {len(specs)}")
    if n_snapshots < 1:
        raise ValueError("n_snapshots must be >= 1")
    x = np.zeros((N_ANTENNAS, n_snapshots), dtype=np.complex128)
    for i in _canonical_order(specs):
        spec = specs[i]
        symbols = synth_symbols(spec.waveform, n_snapshots, rng)
        amplitude = 10.0 ** (spec.power_db / 20.0)
        x += amplitude * np.outer(steering_vector(spec.doa, spec.pol), symbols)
    if np.isfinite(snr_db):
        x += synth_noise(n_snapshots, noise_variance(snr_db), rng)
    return x
