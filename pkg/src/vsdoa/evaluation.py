"""Error metrics, confusion matrices, and field-of-view analyses.

Angle errors are computed slot-wise after elevation sorting, matching the
labeling convention the estimators are trained with; no assignment search
is performed for the headline numbers (an assignment-based diagnostic is
reported alongside). Elevation error is a plain absolute difference (the
[0, 180] domain has no wrap); azimuth error is wrapped into [0, 180].
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .dataset import LabeledDataset
from .geometry import chordal_sq, wrapped_azimuth_error
from .neural_net import Mlp, TrainOptions
from .pipeline import classify_counts, estimate_angles, train_estimator

REPORT_SCHEMA_VERSION = 1
QUIVER_HEADER = "true_elev_deg,true_az_deg,est_elev_deg,est_az_deg,chordal_err"
N_CLASSES = 5


def angle_errors(pred_pairs: np.ndarray, true_pairs: np.ndarray) -> np.ndarray:
    """Per-slot (elevation error, azimuth error) in degrees, both sorted."""
    pred = np.asarray(pred_pairs, dtype=np.float64)
    true = np.asarray(true_pairs, dtype=np.float64)
    if pred.shape != true.shape:
        raise ValueError(f"source count mismatch: {pred.shape} vs {true.shape}")
    errs = np.empty_like(pred)
    errs[..., 0] = np.abs(pred[..., 0] - true[..., 0])
    errs[..., 1] = wrapped_azimuth_error(true[..., 1], pred[..., 1])
    return errs


def metrics(errors) -> tuple[float, float]:
    """(MAE, RMSE) of a list of error magnitudes in degrees."""
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise ValueError("metrics need at least one error value")
    return float(np.mean(np.abs(errors))), float(np.sqrt(np.mean(errors**2)))


@dataclass
class ConfusionMatrix:
    """Source-count confusion: rows are truth, columns are prediction."""

    counts: np.ndarray  # (5, 5) int

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / max(self.total, 1))

    def off_diagonal_fraction(self, truth: int, pred: int) -> float:
        """Share of all misclassifications landing in one (truth, pred) cell."""
        off = self.total - int(np.trace(self.counts))
        if off == 0:
            return 0.0
        return float(self.counts[truth - 1, pred - 1]) / off

    def to_dict(self) -> dict:
        return {"counts": self.counts.tolist(), "accuracy": self.accuracy, "total": self.total}


def confusion(preds, truths) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64)
    truths = np.asarray(truths, dtype=np.int64)
    if preds.shape != truths.shape:
        raise ValueError("prediction and truth lists differ in length")
    if preds.min() < 1 or preds.max() > N_CLASSES or truths.min() < 1 or truths.max() > N_CLASSES:
        raise ValueError(f"class values must lie in 1..{N_CLASSES}")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(counts, (truths - 1, preds - 1), 1)
    return ConfusionMatrix(counts)


@dataclass
class QuiverRecord:
    true_elev_deg: float
    true_az_deg: float
    est_elev_deg: float
    est_az_deg: float
    chordal_err: float


@dataclass
class EvalReport:
    """Per-angle and per-source error summary for one evaluation run."""

    samples: int
    elevation_mae: float
    elevation_rmse: float
    azimuth_mae: float
    azimuth_rmse: float
    per_source: list = field(default_factory=list)
    assignment_mae: float | None = None  # best-permutation diagnostic, not the headline
    snr_bins: list = field(default_factory=list)
    config_echo: dict = field(default_factory=dict)
    schema_version: int = REPORT_SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "samples": self.samples,
            "elevation_mae_deg": self.elevation_mae,
            "elevation_rmse_deg": self.elevation_rmse,
            "azimuth_mae_deg": self.azimuth_mae,
            "azimuth_rmse_deg": self.azimuth_rmse,
            "per_source": self.per_source,
            "assignment_mae_deg": self.assignment_mae,
            "snr_bins": self.snr_bins,
            "config_echo": self.config_echo,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        if d.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema_version')}")
        return cls(
            samples=d["samples"],
            elevation_mae=d["elevation_mae_deg"],
            elevation_rmse=d["elevation_rmse_deg"],
            azimuth_mae=d["azimuth_mae_deg"],
            azimuth_rmse=d["azimuth_rmse_deg"],
            per_source=d.get("per_source", []),
            assignment_mae=d.get("assignment_mae_deg"),
            snr_bins=d.get("snr_bins", []),
            config_echo=d.get("config_echo", {}),
        )

    @property
    def pooled_rmse(self) -> float:
        """RMSE over both angles pooled; the cross-view comparison number."""
        return float(np.sqrt(0.5 * (self.elevation_rmse**2 + self.azimuth_rmse**2)))


def _assignment_mae(pred_pairs: np.ndarray, true_pairs: np.ndarray) -> float:
    """Best-permutation mean error; cheap for K <= 5."""
    k = pred_pairs.shape[1]
    best = np.full(pred_pairs.shape[0], np.inf)
    for perm in permutations(range(k)):
        errs = angle_errors(pred_pairs[:, perm, :], true_pairs)
        best = np.minimum(best, errs.reshape(len(errs), -1).mean(axis=1))
    return float(np.mean(best))


def summarize_errors(pred_pairs: np.ndarray, true_pairs: np.ndarray, config_echo: dict | None = None) -> EvalReport:
    """Build a report from matched (n, K, 2) sorted prediction/truth arrays."""
    errs = angle_errors(pred_pairs, true_pairs)
    elev_mae, elev_rmse = metrics(errs[..., 0].ravel())
    az_mae, az_rmse = metrics(errs[..., 1].ravel())
    per_source = []
    for s in range(errs.shape[1]):
        e_mae, e_rmse = metrics(errs[:, s, 0])
        a_mae, a_rmse = metrics(errs[:, s, 1])
        per_source.append(
            {
                "slot": s,
                "elevation_mae_deg": e_mae,
                "elevation_rmse_deg": e_rmse,
                "azimuth_mae_deg": a_mae,
                "azimuth_rmse_deg": a_rmse,
            }
        )
    return EvalReport(
        samples=int(pred_pairs.shape[0]),
        elevation_mae=elev_mae,
        elevation_rmse=elev_rmse,
        azimuth_mae=az_mae,
        azimuth_rmse=az_rmse,
        per_source=per_source,
        assignment_mae=_assignment_mae(pred_pairs, true_pairs),
        config_echo=config_echo or {},
    )


def quiver_records(pred_pairs: np.ndarray, true_pairs: np.ndarray) -> list[QuiverRecord]:
    """One record per (sample, source): truth, estimate, squared chord error."""
    records = []
    for p_row, t_row in zip(np.asarray(pred_pairs), np.asarray(true_pairs)):
        for (pe, pa), (te, ta) in zip(p_row, t_row):
            err = float(chordal_sq(np.radians(te), np.radians(ta), np.radians(pe), np.radians(pa)))
            records.append(QuiverRecord(float(te), float(ta), float(pe), float(pa), err))
    return records


def region_grid(records, cell_deg: tuple[float, float] = (10.0, 10.0)) -> np.ndarray:
    """Mean chordal error per (elevation, azimuth) cell; NaN where empty."""
    n_elev = int(np.ceil(180.0 / cell_deg[0]))
    n_az = int(np.ceil(360.0 / cell_deg[1]))
    total = np.zeros((n_elev, n_az))
    count = np.zeros((n_elev, n_az))
    for r in records:
        i = min(int(r.true_elev_deg / cell_deg[0]), n_elev - 1)
        j = min(int(r.true_az_deg / cell_deg[1]), n_az - 1)
        total[i, j] += r.chordal_err
        count[i, j] += 1
    with np.errstate(invalid="ignore"):
        return np.where(count > 0, total / np.maximum(count, 1), np.nan)


def region_analysis(pred_pairs, true_pairs, cell_deg: tuple[float, float] = (10.0, 10.0)):
    records = quiver_records(pred_pairs, true_pairs)
    return records, region_grid(records, cell_deg)


def evaluate_estimator(model: Mlp, ds: LabeledDataset, config_echo: dict | None = None):
    """Run a regressor over a per-K dataset; returns (report, quiver records)."""
    pred = estimate_angles(model, ds.features)
    true = ds.doa_labels.astype(np.float64).reshape(len(ds), -1, 2)
    echo = dict(config_echo or {})
    echo.setdefault("dataset_config", ds.config.to_dict())
    report = summarize_errors(pred, true, echo)
    report.snr_bins = [
        {
            "snr_range_db": list(ds.config.snr_range_db),
            "elevation_mae_deg": report.elevation_mae,
            "azimuth_mae_deg": report.azimuth_mae,
        }
    ]
    return report, quiver_records(pred, true)


def evaluate_classifier(model: Mlp, ds: LabeledDataset) -> ConfusionMatrix:
    if ds.count_labels is None:
        raise ValueError("classifier evaluation needs a mixed dataset")
    _, counts = classify_counts(model, ds.features)
    return confusion(counts, ds.count_labels)


def fov_cross_experiment(
    train_full: LabeledDataset,
    train_limited: LabeledDataset,
    test_full: LabeledDataset,
    test_limited: LabeledDataset,
    opts: TrainOptions,
    hidden_dims,
) -> dict:
    """Train on {full, limited}, test on {full, limited}; 4 reports.

    Key format is 'train-test'; the limited-limited cell is expected to be
    the best of the four.
    """
    k = int(train_full.config.num_sources)
    models = {
        "full": train_estimator(k, train_full, opts, hidden_dims),
        "limited": train_estimator(k, train_limited, opts, hidden_dims),
    }
    tests = {"full": test_full, "limited": test_limited}
    table = {}
    for train_name, model in models.items():
        for test_name, test_ds in tests.items():
            report, _ = evaluate_estimator(model, test_ds, {"trained_on": train_name, "tested_on": test_name})
            table[f"{train_name}-{test_name}"] = report
    return table


def write_quiver_csv(path, records) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(QUIVER_HEADER.split(","))
    for r in records:
        writer.writerow(
            [
                f"{r.true_elev_deg:.6f}",
                f"{r.true_az_deg:.6f}",
                f"{r.est_elev_deg:.6f}",
                f"{r.est_az_deg:.6f}",
                f"{r.chordal_err:.9g}",
            ]
        )
    from .binio import atomic_write_text

    atomic_write_text(path, buf.getvalue())
