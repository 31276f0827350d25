"""The end-to-end system: count the sources, then regress their angles.

One softmax classifier estimates the number of sources K from the
fingerprint; five per-K regressors (output width 2K) estimate the
elevation-sorted angle pairs; prediction routes through the classifier to
the matching regressor. A closed-form cross-product baseline covers the
single-source case via the time-averaged real Poynting vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import binio, neural_net
from .dataset import LabeledDataset
from .features import FEATURE_LAYOUT_VERSION, FEATURE_WIDTH, fit_stats, sample_covariance, standardize, vectorize
from .geometry import DoA, sort_doa_pairs, wrap_angles
from .neural_net import Mlp, TrainOptions, load_model, save_model
from .signal_model import MAX_SOURCES, N_ANTENNAS

MANIFEST_NAME = "system.json"
SYSTEM_FORMAT_VERSION = 1


@dataclass
class Prediction:
    """Routing result: estimated count, class probabilities, sorted angles."""

    k_hat: int
    probs: np.ndarray  # (5,)
    doas: list  # k_hat DoA values, elevation ascending


@dataclass
class CrossProductResult:
    doa: DoA
    confidence: float
    low_confidence: bool


def normalized_labels(ds: LabeledDataset) -> np.ndarray:
    """Angle labels as (elevation/180, azimuth/360) slot pairs."""
    labels = ds.doa_labels.astype(np.float64).copy()
    labels[:, 0::2] /= 180.0
    labels[:, 1::2] /= 360.0
    return labels


def _carve_validation(n: int, val_fraction: float, seed: int):
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_val = max(1, int(round(val_fraction * n)))
    return order[n_val:], order[:n_val]


def labels_sorted(ds: LabeledDataset) -> bool:
    elevations = ds.doa_labels[:, 0::2]
    if ds.count_labels is not None:
        return False  # mixed datasets are not estimator material
    return bool(np.all(np.diff(elevations, axis=1) >= 0))


def train_estimator(
    k: int,
    ds: LabeledDataset,
    opts: TrainOptions,
    hidden_dims,
    val_fraction: float = 0.1,
) -> Mlp:
    """Train the 2K-output angle regressor for K = ``k`` sources."""
    if ds.config.mixed or int(ds.config.num_sources) != k:
        raise ValueError(f"dataset holds {ds.config.num_sources} sources, estimator wants {k}")
    if ds.doa_labels.shape[1] != 2 * k:
        raise ValueError(f"label width {ds.doa_labels.shape[1]}, expected {2 * k}")
    if not labels_sorted(ds):
        raise ValueError("dataset labels are not elevation-sorted")
    tr_idx, val_idx = _carve_validation(len(ds), val_fraction, opts.seed)
    stats = fit_stats(ds.features[tr_idx])
    x = standardize(ds.features, stats)
    y = normalized_labels(ds)
    model = Mlp(FEATURE_WIDTH, hidden_dims, 2 * k, head="regression", seed=opts.seed, dropout_rate=opts.dropout_rate)
    model.feature_stats = stats
    model.train_config = {"kind": "estimator", "num_sources": k, "hidden_dims": list(hidden_dims), **opts.to_dict()}
    neural_net.train(model, (x[tr_idx], y[tr_idx]), (x[val_idx], y[val_idx]), opts)
    return model


def train_classifier(
    ds: LabeledDataset,
    opts: TrainOptions,
    hidden_dims,
    val_fraction: float = 0.1,
) -> Mlp:
    """Train the 5-way source-count classifier on a mixed dataset."""
    if ds.count_labels is None:
        raise ValueError("classifier training needs a mixed dataset with count labels")
    present = set(int(c) for c in np.unique(ds.count_labels))
    if present != set(range(1, MAX_SOURCES + 1)):
        raise ValueError(f"dataset must cover all counts 1..{MAX_SOURCES}, found {sorted(present)}")
    tr_idx, val_idx = _carve_validation(len(ds), val_fraction, opts.seed)
    stats = fit_stats(ds.features[tr_idx])
    x = standardize(ds.features, stats)
    y = ds.count_labels.astype(np.int64)
    model = Mlp(
        FEATURE_WIDTH, hidden_dims, neural_net.N_CLASSES, head="classifier", seed=opts.seed, dropout_rate=opts.dropout_rate
    )
    model.feature_stats = stats
    model.train_config = {"kind": "classifier", "hidden_dims": list(hidden_dims), **opts.to_dict()}
    neural_net.train(model, (x[tr_idx], y[tr_idx]), (x[val_idx], y[val_idx]), opts)
    return model


def estimate_angles(model: Mlp, features_raw: np.ndarray) -> np.ndarray:
    """Angle estimates in degrees for raw fingerprints, shape (n, K, 2).

    De-normalizes the network outputs and wraps them onto the canonical
    sphere ranges; the chordal training loss is periodic, so the network
    may settle on any equivalent angle branch and wrapping recovers the
    canonical one. Output is re-sorted by elevation to match the training
    label convention.
    """
    out = model.predict_standardized(features_raw)
    elev, az = wrap_angles(out[:, 0::2] * np.pi, out[:, 1::2] * 2.0 * np.pi)
    pairs = np.stack([np.degrees(elev), np.degrees(az)], axis=-1)
    return sort_doa_pairs(pairs)


def classify_counts(model: Mlp, features_raw: np.ndarray):
    """(probabilities, counts) for raw fingerprints."""
    logits = model.predict_standardized(features_raw)
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs = shifted / shifted.sum(axis=1, keepdims=True)
    return probs, probs.argmax(axis=1) + 1


@dataclass
class DoaSystem:
    """A trained classifier plus one angle regressor per source count."""

    classifier: Mlp
    estimators: dict  # K -> Mlp

    def __post_init__(self):
        for k, model in self.estimators.items():
            if model.output_dim != 2 * k:
                raise ValueError(f"estimator for K={k} has output width {model.output_dim}")


def predict_from_feature(system: DoaSystem, feature: np.ndarray) -> Prediction:
    feature = np.atleast_2d(feature)
    probs, counts = classify_counts(system.classifier, feature)
    k_hat = int(counts[0])
    pairs = estimate_angles(system.estimators[k_hat], feature)[0]
    doas = [DoA.from_degrees(e, a) for e, a in pairs]
    return Prediction(k_hat=k_hat, probs=probs[0], doas=doas)


def predict(system: DoaSystem, x: np.ndarray) -> Prediction:
    """Full flow for one snapshot block: fingerprint, classify, regress."""
    return predict_from_feature(system, vectorize(sample_covariance(x)))


def save_system(system: DoaSystem, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {"classifier": "classifier.vsnn"}
    save_model(system.classifier, directory / files["classifier"])
    for k, model in sorted(system.estimators.items()):
        name = f"estimator_k{k}.vsnn"
        files[f"estimator_k{k}"] = name
        save_model(model, directory / name)
    manifest = {
        "format_version": SYSTEM_FORMAT_VERSION,
        "feature_layout_version": FEATURE_LAYOUT_VERSION,
        "files": files,
    }
    binio.atomic_write_text(directory / MANIFEST_NAME, json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def load_system(directory) -> DoaSystem:
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST_NAME).read_text())
    if manifest.get("format_version") != SYSTEM_FORMAT_VERSION:
        raise binio.VersionError(f"{directory}: unsupported system format {manifest.get('format_version')}")
    if manifest.get("feature_layout_version") != FEATURE_LAYOUT_VERSION:
        raise binio.VersionError(f"{directory}: feature layout mismatch")
    files = manifest["files"]
    classifier = load_model(directory / files["classifier"])
    estimators = {}
    for k in range(1, MAX_SOURCES + 1):
        key = f"estimator_k{k}"
        if key in files:
            estimators[k] = load_model(directory / files[key])
    return DoaSystem(classifier=classifier, estimators=estimators)


def cross_product_doa(x: np.ndarray, low_confidence_threshold: float = 0.05) -> CrossProductResult:
    """Single-source direction from the time-averaged real Poynting vector.

    s = mean_n Re(e_n x conj(h_n)) points along the propagation direction
    for the steering convention used here (verified against the manifold,
    so no sign flip is applied). Confidence compares |s| against the total
    received field power; noise-dominated inputs are flagged rather than
    rejected.
    """
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != N_ANTENNAS:
        raise ValueError(f"expected a ({N_ANTENNAS}, N) snapshot matrix, got {x.shape}")
    e, h = x[:3], x[3:]
    s = np.cross(e, h.conj(), axis=0).real.mean(axis=1)
    norm = float(np.linalg.norm(s))
    total_power = float(np.mean(np.sum(np.abs(x) ** 2, axis=0)))
    confidence = 2.0 * norm / total_power if total_power > 0 else 0.0
    if norm == 0.0:
        return CrossProductResult(DoA(0.0, 0.0), 0.0, True)
    elevation = float(np.arccos(np.clip(s[2] / norm, -1.0, 1.0)))
    azimuth = float(np.mod(np.arctan2(s[1], s[0]), 2.0 * np.pi))
    return CrossProductResult(DoA(elevation, azimuth), confidence, confidence < low_confidence_threshold)
