"""Dataset generation, splitting, persistence, and fingerprint inspection.

Each sample is produced end to end from its own random stream, derived
from (master_seed, sample_index) with a 64-bit mixing hash, so generation
is reproducible and independent of execution order or worker count.

Labels are stored in degrees. Per-count datasets carry ``2K`` columns of
elevation-sorted (elevation, azimuth) pairs. Mixed datasets (classifier
training data) additionally carry the source count, and their angle
columns are padded to 10 slots with the sentinel value -1.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from multiprocessing import get_context

import numpy as np

from . import binio
from .features import FEATURE_LAYOUT_VERSION, FEATURE_WIDTH, fit_stats, sample_covariance, standardize, vectorize
from .geometry import DoA, FieldOfView, LIMITED_FOV, sample_uniform_sphere, sort_doa_pairs
from .signal_model import DEFAULT_POLARIZATION, MAX_SOURCES, Polarization, SourceSpec, WAVEFORMS, synth_snapshots

DATASET_MAGIC = b"VSDS"
DATASET_FORMAT_VERSION = 1
MIXED = "mixed"
PAD_VALUE = -1.0
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class GenerationConfig:
    """Fully describes one dataset draw; echoed into the file header."""

    num_sources: int | str = 1
    samples: int = 1000
    snapshots: int = 4000
    snr_range_db: tuple[float, float] = (0.0, 20.0)
    power_ratio_range_db: tuple[float, float] = (-3.0, 3.0)
    fov: FieldOfView = LIMITED_FOV
    polarization: Polarization = DEFAULT_POLARIZATION
    waveform: str = "digital"
    master_seed: int = 0

    def __post_init__(self):
        if self.num_sources != MIXED and not 1 <= int(self.num_sources) <= MAX_SOURCES:
            raise ValueError(f"num_sources must be 1..{MAX_SOURCES} or {MIXED!r}, got {self.num_sources}")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.snapshots < 1:
            raise ValueError("snapshots must be >= 1")
        if self.snr_range_db[0] > self.snr_range_db[1]:
            raise ValueError(f"bad snr range {self.snr_range_db}")
        if self.power_ratio_range_db[0] > self.power_ratio_range_db[1]:
            raise ValueError(f"bad power ratio range {self.power_ratio_range_db}")
        if self.waveform not in WAVEFORMS:
            raise ValueError(f"unknown waveform {self.waveform!r}")

    @property
    def mixed(self) -> bool:
        return self.num_sources == MIXED

    @property
    def label_width(self) -> int:
        return 2 * MAX_SOURCES if self.mixed else 2 * int(self.num_sources)

    def to_dict(self) -> dict:
        return {
            "num_sources": self.num_sources,
            "samples": self.samples,
            "snapshots": self.snapshots,
            "snr_range_db": list(self.snr_range_db),
            "power_ratio_range_db": list(self.power_ratio_range_db),
            "fov": self.fov.to_dict(),
            "polarization": {"gamma_rad": self.polarization.gamma, "eta_rad": self.polarization.eta},
            "waveform": self.waveform,
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationConfig":
        return cls(
            num_sources=d["num_sources"],
            samples=int(d["samples"]),
            snapshots=int(d["snapshots"]),
            snr_range_db=tuple(d["snr_range_db"]),
            power_ratio_range_db=tuple(d["power_ratio_range_db"]),
            fov=FieldOfView.from_dict(d["fov"]),
            polarization=Polarization(d["polarization"]["gamma_rad"], d["polarization"]["eta_rad"]),
            waveform=d["waveform"],
            master_seed=int(d["master_seed"]),
        )


@dataclass
class LabeledDataset:
    """Fingerprint features plus elevation-sorted angle labels in degrees."""

    features: np.ndarray  # (n, 42) float32
    doa_labels: np.ndarray  # (n, label_width) float32, degrees; padded for mixed
    count_labels: np.ndarray | None  # (n,) int32, mixed datasets only
    config: GenerationConfig

    def __len__(self) -> int:
        return self.features.shape[0]

    def label_pairs(self, index: int) -> np.ndarray:
        """The (K, 2) sorted (elevation, azimuth) label of one sample, degrees."""
        row = self.doa_labels[index]
        if self.count_labels is not None:
            row = row[: 2 * int(self.count_labels[index])]
        return row.reshape(-1, 2).astype(np.float64)

    def subset(self, indices) -> "LabeledDataset":
        counts = None if self.count_labels is None else self.count_labels[indices]
        return LabeledDataset(self.features[indices], self.doa_labels[indices], counts, self.config)


def derive_sample_seed(master_seed: int, index: int) -> int:
    """64-bit mixing hash of (master_seed, index); fixed-width arithmetic."""
    z = (int(master_seed) + 0x9E3779B97F4A7C15 * (int(index) + 1)) & _MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z


def _generate_one(config: GenerationConfig, index: int):
    rng = np.random.default_rng(derive_sample_seed(config.master_seed, index))
    k = int(rng.integers(1, MAX_SOURCES + 1)) if config.mixed else int(config.num_sources)
    elev, az = sample_uniform_sphere(rng, config.fov, size=k)
    power_db = np.zeros(k)
    if k > 1:
        power_db[1:] = rng.uniform(*config.power_ratio_range_db, size=k - 1)
    snr_db = rng.uniform(*config.snr_range_db)
    specs = [
        SourceSpec(DoA(elev[j], az[j]), pol=config.polarization, power_db=float(power_db[j]), waveform=config.waveform)
        for j in range(k)
    ]
    x = synth_snapshots(specs, snr_db, config.snapshots, rng)
    feature = vectorize(sample_covariance(x))
    pairs = sort_doa_pairs(np.degrees(np.stack([elev, az], axis=-1)))
    label = np.full(config.label_width, PAD_VALUE)
    label[: 2 * k] = pairs.reshape(-1)
    return feature.astype(np.float32), label.astype(np.float32), k


def _generate_chunk(config_dict: dict, start: int, stop: int):
    config = GenerationConfig.from_dict(config_dict)
    n = stop - start
    features = np.empty((n, FEATURE_WIDTH), dtype=np.float32)
    labels = np.empty((n, config.label_width), dtype=np.float32)
    counts = np.empty(n, dtype=np.int32)
    for i in range(start, stop):
        features[i - start], labels[i - start], counts[i - start] = _generate_one(config, i)
    return start, features, labels, counts


def generate(config: GenerationConfig, workers: int = 1) -> LabeledDataset:
    """Generate a dataset; output is bit-identical for any worker count."""
    n = config.samples
    features = np.empty((n, FEATURE_WIDTH), dtype=np.float32)
    labels = np.empty((n, config.label_width), dtype=np.float32)
    counts = np.empty(n, dtype=np.int32)
    if workers <= 1:
        _, features, labels, counts = _generate_chunk(config.to_dict(), 0, n)
    else:
        chunk = max(1, (n + workers * 4 - 1) // (workers * 4))
        bounds = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]
        with ProcessPoolExecutor(max_workers=workers, mp_context=get_context("spawn")) as pool:
            futures = [pool.submit(_generate_chunk, config.to_dict(), lo, hi) for lo, hi in bounds]
            for fut in futures:
                start, f, l, c = fut.result()
                features[start : start + len(f)] = f
                labels[start : start + len(l)] = l
                counts[start : start + len(c)] = c
    return LabeledDataset(features, labels, counts if config.mixed else None, config)


def split(ds: LabeledDataset, fractions: tuple[float, float, float], rng: np.random.Generator):
    """Disjoint train/val/test partition by shuffled indices."""
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three positive values summing to 1, got {fractions}")
    n = len(ds)
    if n < 3:
        raise ValueError("dataset too small to split three ways")
    order = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_val = min(n_val, n - n_train - 1)
    parts = (order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :])
    return tuple(ds.subset(np.sort(p)) for p in parts)


def save(ds: LabeledDataset, path) -> None:
    header = {
        "kind": MIXED if ds.config.mixed else "per_k",
        "samples": len(ds),
        "feature_width": FEATURE_WIDTH,
        "label_width": int(ds.doa_labels.shape[1]),
        "has_count_labels": ds.count_labels is not None,
        "feature_layout_version": FEATURE_LAYOUT_VERSION,
        "checksum": binio.CHECKSUM_ALGORITHM,
        "config": ds.config.to_dict(),
    }
    blobs = [np.ascontiguousarray(ds.features, dtype="<f4").tobytes()]
    if ds.count_labels is not None:
        blobs.append(np.ascontiguousarray(ds.count_labels, dtype="<f4").tobytes())
    blobs.append(np.ascontiguousarray(ds.doa_labels, dtype="<f4").tobytes())
    binio.write_artifact(path, DATASET_MAGIC, DATASET_FORMAT_VERSION, header, blobs)


def load(path) -> LabeledDataset:
    header, payload = binio.read_artifact(path, DATASET_MAGIC, DATASET_FORMAT_VERSION)
    if header.get("feature_layout_version") != FEATURE_LAYOUT_VERSION:
        raise binio.VersionError(
            f"{path}: feature layout version {header.get('feature_layout_version')}, "
            f"reader supports {FEATURE_LAYOUT_VERSION}"
        )
    n = int(header["samples"])
    fw = int(header["feature_width"])
    lw = int(header["label_width"])
    counts = None
    expected = n * fw * 4 + n * lw * 4 + (n * 4 if header["has_count_labels"] else 0)
    if len(payload) != expected:
        raise binio.TruncatedError(f"{path}: payload length {len(payload)}, expected {expected}")
    offset = 0
    features = np.frombuffer(payload, dtype="<f4", count=n * fw, offset=offset).reshape(n, fw)
    offset += n * fw * 4
    if header["has_count_labels"]:
        counts = np.frombuffer(payload, dtype="<f4", count=n, offset=offset).astype(np.int32)
        offset += n * 4
    labels = np.frombuffer(payload, dtype="<f4", count=n * lw, offset=offset).reshape(n, lw)
    return LabeledDataset(features.copy(), labels.copy(), counts, GenerationConfig.from_dict(header["config"]))


@dataclass
class NeighborReport:
    """A query fingerprint next to its nearest neighbors in feature space."""

    query_index: int
    query_label_pairs: np.ndarray  # (K, 2) degrees
    neighbor_indices: np.ndarray  # (k,) ascending distance
    distances: np.ndarray  # (k,)
    neighbor_label_pairs: list  # k entries of (K_i, 2) degrees

    def to_dict(self) -> dict:
        return {
            "query_index": int(self.query_index),
            "query_label_pairs": np.asarray(self.query_label_pairs).tolist(),
            "neighbor_indices": np.asarray(self.neighbor_indices).tolist(),
            "distances": np.asarray(self.distances).tolist(),
            "neighbor_label_pairs": [np.asarray(p).tolist() for p in self.neighbor_label_pairs],
        }


def knn_fingerprint(ds: LabeledDataset, query_index: int, k: int, include_self: bool = False) -> NeighborReport:
    """Nearest samples by Euclidean distance in standardized feature space.

    Similar fingerprints should point at similar directions; this report
    makes that inspectable sample by sample.
    """
    n = len(ds)
    limit = n if include_self else n - 1
    if not 1 <= k <= limit:
        raise ValueError(f"k must be 1..{limit} for this dataset, got {k}")
    stats = fit_stats(ds.features)
    z = standardize(ds.features, stats)
    d = np.sqrt(np.sum((z - z[query_index]) ** 2, axis=1))
    if not include_self:
        d[query_index] = np.inf
    order = np.argsort(d, kind="stable")[:k]
    return NeighborReport(
        query_index=query_index,
        query_label_pairs=ds.label_pairs(query_index),
        neighbor_indices=order,
        distances=d[order],
        neighbor_label_pairs=[ds.label_pairs(int(i)) for i in order],
    )
