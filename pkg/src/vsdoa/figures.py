"""Figure rendering for the report path.

Every evaluation-style command can drop PNG figures next to its CSV/JSON
output: confusion heat maps, quiver and scatter plots of angle estimates,
error-versus-SNR curves, snapshot/SNR trade-off curves, and fingerprint
neighbor overlays. Rendering is file-only (Agg backend); nothing opens a
window.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

# Keep PNGs free of tool/version metadata so reruns stay byte-stable.
_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)


def save_confusion_figure(cm, path) -> None:
    counts = np.asarray(cm.counts, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    im = ax.imshow(counts, cmap="Blues")
    for i in range(counts.shape[0]):
        for j in range(counts.shape[1]):
            ax.text(j, i, int(counts[i, j]), ha="center", va="center", fontsize=8)
    ax.set_xticks(range(5), [str(k) for k in range(1, 6)])
    ax.set_yticks(range(5), [str(k) for k in range(1, 6)])
    ax.set_xlabel("predicted count")
    ax.set_ylabel("true count")
    ax.set_title(f"source-count confusion (accuracy {cm.accuracy:.3f})")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    _save(fig, path)


def save_quiver_figure(records, path, max_arrows: int = 2000) -> None:
    """Arrows from estimation (tail) to truth (head) over the angle plane."""
    records = records[:max_arrows]
    est_az = np.array([r.est_az_deg for r in records])
    est_el = np.array([r.est_elev_deg for r in records])
    d_az = np.array([r.true_az_deg for r in records]) - est_az
    d_az = (d_az + 180.0) % 360.0 - 180.0  # draw the short way around
    d_el = np.array([r.true_elev_deg for r in records]) - est_el
    err = np.sqrt([r.chordal_err for r in records])
    fig, ax = plt.subplots(figsize=(7, 4))
    q = ax.quiver(est_az, est_el, d_az, d_el, err, angles="xy", scale_units="xy", scale=1, cmap="viridis", width=0.002)
    ax.set_xlim(0, 360)
    ax.set_ylim(180, 0)
    ax.set_xlabel("azimuth (deg)")
    ax.set_ylabel("elevation (deg)")
    ax.set_title("estimation error field (tail = estimate, head = truth)")
    fig.colorbar(q, ax=ax, label="chord error")
    fig.tight_layout()
    _save(fig, path)


def save_scatter_figure(records, path, max_points: int = 5000) -> None:
    records = records[:max_points]
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.6))
    pairs = [
        ("elevation", [r.true_elev_deg for r in records], [r.est_elev_deg for r in records], 180),
        ("azimuth", [r.true_az_deg for r in records], [r.est_az_deg for r in records], 360),
    ]
    for ax, (name, true, est, hi) in zip(axes, pairs):
        ax.scatter(true, est, s=3, alpha=0.35, linewidths=0)
        ax.plot([0, hi], [0, hi], "k--", lw=0.8)
        ax.set_xlim(0, hi)
        ax.set_ylim(0, hi)
        ax.set_xlabel(f"true {name} (deg)")
        ax.set_ylabel(f"estimated {name} (deg)")
    fig.tight_layout()
    _save(fig, path)


def save_snr_curve_figure(snr_bins, path) -> None:
    """MAE against SNR bins (one line per angle)."""
    centers = [0.5 * (b["snr_range_db"][0] + b["snr_range_db"][1]) for b in snr_bins]
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(centers, [b["elevation_mae_deg"] for b in snr_bins], "o-", label="elevation")
    ax.plot(centers, [b["azimuth_mae_deg"] for b in snr_bins], "s-", label="azimuth")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("MAE (deg)")
    ax.grid(True, ls="--", alpha=0.5)
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def save_tradeoff_figure(rows, path) -> None:
    """Fingerprint error against snapshot count, one curve per SNR."""
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for snr in sorted({r["snr_db"] for r in rows}):
        pts = sorted((r["n_snapshots"], r["mean_err"]) for r in rows if r["snr_db"] == snr)
        ax.loglog([p[0] for p in pts], [p[1] for p in pts], "o-", label=f"{snr:g} dB")
    ax.set_xlabel("snapshots")
    ax.set_ylabel("mean fingerprint error")
    ax.grid(True, which="both", ls="--", alpha=0.5)
    ax.legend(title="SNR")
    fig.tight_layout()
    _save(fig, path)


def save_knn_figure(report, feature_matrix, path) -> None:
    """Query fingerprint over its neighbors, plus their angle labels."""
    fig, axes = plt.subplots(2, 1, figsize=(7, 5.6))
    axes[0].plot(feature_matrix[report.query_index], "k-", lw=1.5, label=f"query {report.query_index}")
    for idx in report.neighbor_indices:
        axes[0].plot(feature_matrix[int(idx)], alpha=0.6, lw=0.9, label=f"neighbor {int(idx)}")
    axes[0].set_xlabel("feature slot")
    axes[0].set_ylabel("value")
    axes[0].legend(fontsize=7)
    q = np.asarray(report.query_label_pairs)
    axes[1].scatter(q[:, 1], q[:, 0], marker="*", s=120, c="k", label="query")
    for idx, pairs in zip(report.neighbor_indices, report.neighbor_label_pairs):
        p = np.asarray(pairs)
        axes[1].scatter(p[:, 1], p[:, 0], s=25, alpha=0.7, label=f"neighbor {int(idx)}")
    axes[1].set_xlim(0, 360)
    axes[1].set_ylim(180, 0)
    axes[1].set_xlabel("azimuth (deg)")
    axes[1].set_ylabel("elevation (deg)")
    axes[1].legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def save_fov_cross_figure(table, path) -> None:
    """Pooled RMSE of the four train/test field-of-view combinations."""
    keys = ["limited-limited", "limited-full", "full-limited", "full-full"]
    keys = [k for k in keys if k in table]
    values = [table[k].pooled_rmse for k in keys]
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    ax.bar(keys, values, color=["#2a6" if k == "limited-limited" else "#888" for k in keys])
    ax.set_ylabel("pooled RMSE (deg)")
    ax.set_title("train-test field-of-view combinations")
    for i, v in enumerate(values):
        ax.text(i, v, f"{v:.2f}", ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    _save(fig, path)
