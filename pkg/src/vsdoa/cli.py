"""Command-line entry point for reproducible generation, training, and evaluation.

Subcommands: generate, train-classifier, train-estimator, train-system,
eval, predict, inspect-knn, fov-cross, tradeoff.

Flag precedence is command line > --config file > built-in defaults; the
fully resolved configuration is echoed into every artifact. All file
writes are atomic, and with a fixed --seed every data artifact is
byte-for-byte reproducible. Evaluation-style commands also render PNG
figures next to their CSV/JSON outputs unless --no-figures is given.

The environment variable VSDOA_DATA_DIR, when set, is used as the base
directory for relative data-file paths.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import binio, dataset, evaluation, figures, neural_net, pipeline
from .features import snapshot_snr_tradeoff
from .geometry import FULL_FOV, LIMITED_FOV, FieldOfView
from .signal_model import DEFAULT_POLARIZATION, Polarization

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_FORMAT = 4
EXIT_CONFIG = 5


class ConfigError(ValueError):
    pass


def _data_path(value: str) -> Path:
    p = Path(value)
    base = os.environ.get("VSDOA_DATA_DIR")
    if base and not p.is_absolute():
        return Path(base) / p
    return p


def parse_range(text: str, name: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise ConfigError(f"{name} must look like 'lo:hi', got {text!r}") from None
    return lo, hi


def parse_fov(text: str) -> FieldOfView:
    if text == "full":
        return FULL_FOV
    if text == "limited":
        return LIMITED_FOV
    try:
        elev_part, az_part = text.split(",")
        return FieldOfView(parse_range(elev_part, "elevation"), parse_range(az_part, "azimuth"))
    except (ValueError, ConfigError):
        raise ConfigError(f"fov must be 'full', 'limited', or 'elo:ehi,alo:ahi', got {text!r}") from None


def parse_hidden(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"hidden dims must be comma-separated integers, got {text!r}") from None
    if not dims or any(d < 1 for d in dims):
        raise ConfigError(f"hidden dims must be positive, got {text!r}")
    return dims


def _merge_config(args: argparse.Namespace, defaults: dict) -> dict:
    """Resolve option values: CLI flag > config file entry > default."""
    file_values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(str(path))
        file_values = json.loads(path.read_text())
        unknown = set(file_values) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    resolved = {}
    for key, default in defaults.items():
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = flag_value
        elif key in file_values:
            resolved[key] = file_values[key]
        else:
            resolved[key] = default
    return resolved


def _train_options(cfg: dict) -> neural_net.TrainOptions:
    return neural_net.TrainOptions(
        max_epochs=int(cfg["epochs"]),
        batch_size=int(cfg["batch"]),
        learning_rate=float(cfg["lr"]),
        dropout_rate=float(cfg["dropout"]),
        patience=int(cfg["patience"]),
        loss=cfg["loss"],
        seed=int(cfg["seed"]),
    )


def _figures_dir(cfg: dict, anchor: Path) -> Path | None:
    if cfg.get("no_figures"):
        return None
    target = Path(cfg["figures"]) if cfg.get("figures") else anchor.parent
    target.mkdir(parents=True, exist_ok=True)
    return target


def _write_json(path: Path, payload: dict) -> None:
    binio.atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    defaults = {
        "k": "1",
        "samples": 1000,
        "snapshots": 4000,
        "snr": "0:20",
        "power_ratio": "-3:3",
        "fov": "limited",
        "waveform": "digital",
        "gamma_deg": 45.0,
        "eta_deg": 90.0,
        "seed": 0,
        "workers": 1,
    }
    cfg = _merge_config(args, defaults)
    k = cfg["k"] if cfg["k"] == dataset.MIXED else int(cfg["k"])
    config = dataset.GenerationConfig(
        num_sources=k,
        samples=int(cfg["samples"]),
        snapshots=int(cfg["snapshots"]),
        snr_range_db=parse_range(str(cfg["snr"]), "snr"),
        power_ratio_range_db=parse_range(str(cfg["power_ratio"]), "power-ratio"),
        fov=parse_fov(str(cfg["fov"])),
        polarization=Polarization(np.radians(float(cfg["gamma_deg"])), np.radians(float(cfg["eta_deg"]))),
        waveform=cfg["waveform"],
        master_seed=int(cfg["seed"]),
    )
    ds = dataset.generate(config, workers=int(cfg["workers"]))
    out = _data_path(args.output)
    dataset.save(ds, out)
    print(f"wrote {len(ds)} samples to {out}")
    return EXIT_OK


def cmd_train_classifier(args) -> int:
    defaults = {
        "hidden": "256,256,256",
        "epochs": 60,
        "batch": 128,
        "lr": 1e-3,
        "dropout": 0.1,
        "patience": 8,
        "loss": "chordal",
        "seed": 0,
        "val_fraction": 0.1,
    }
    cfg = _merge_config(args, defaults)
    ds = dataset.load(_data_path(args.data))
    model = pipeline.train_classifier(
        ds, _train_options(cfg), parse_hidden(str(cfg["hidden"])), val_fraction=float(cfg["val_fraction"])
    )
    out = _data_path(args.output)
    neural_net.save_model(model, out)
    print(f"classifier saved to {out}")
    return EXIT_OK


def cmd_train_estimator(args) -> int:
    defaults = {
        "hidden": "256,256,256",
        "epochs": 80,
        "batch": 128,
        "lr": 1e-3,
        "dropout": 0.1,
        "patience": 10,
        "loss": "chordal",
        "seed": 0,
        "val_fraction": 0.1,
    }
    cfg = _merge_config(args, defaults)
    ds = dataset.load(_data_path(args.data))
    model = pipeline.train_estimator(
        int(args.k), ds, _train_options(cfg), parse_hidden(str(cfg["hidden"])), val_fraction=float(cfg["val_fraction"])
    )
    out = _data_path(args.output)
    neural_net.save_model(model, out)
    print(f"estimator for K={args.k} saved to {out}")
    return EXIT_OK


def cmd_train_system(args) -> int:
    defaults = {
        "hidden": "256,256,256",
        "epochs": 60,
        "batch": 128,
        "lr": 1e-3,
        "dropout": 0.1,
        "patience": 8,
        "loss": "chordal",
        "seed": 0,
        "val_fraction": 0.1,
    }
    cfg = _merge_config(args, defaults)
    if len(args.estimator_data) != 5:
        raise ConfigError("train-system needs exactly five per-K dataset paths (K=1..5)")
    opts = _train_options(cfg)
    hidden = parse_hidden(str(cfg["hidden"]))
    classifier = pipeline.train_classifier(
        dataset.load(_data_path(args.mixed)), opts, hidden, val_fraction=float(cfg["val_fraction"])
    )
    estimators = {}
    for k, path in enumerate(args.estimator_data, start=1):
        estimators[k] = pipeline.train_estimator(
            k, dataset.load(_data_path(path)), opts, hidden, val_fraction=float(cfg["val_fraction"])
        )
        print(f"trained estimator K={k}")
    out = _data_path(args.output)
    pipeline.save_system(pipeline.DoaSystem(classifier, estimators), out)
    print(f"system saved to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    defaults = {"figures": None, "no_figures": False}
    cfg = _merge_config(args, defaults)
    if bool(args.model) == bool(args.system):
        raise ConfigError("eval needs exactly one of --model or --system")
    ds = dataset.load(_data_path(args.data))
    report_path = _data_path(args.report)
    payload: dict = {}
    records = []
    if args.model:
        model = neural_net.load_model(_data_path(args.model))
        report, records = evaluation.evaluate_estimator(model, ds, {"model": str(args.model)})
        payload = report.to_dict()
    else:
        system = pipeline.load_system(_data_path(args.system))
        if ds.count_labels is not None:
            cm = evaluation.evaluate_classifier(system.classifier, ds)
            payload["classifier"] = cm.to_dict()
        else:
            k = int(ds.config.num_sources)
            probs, counts = pipeline.classify_counts(system.classifier, ds.features)
            matched = counts == k
            payload["classifier"] = {
                "expected_count": k,
                "matched_fraction": float(np.mean(matched)),
            }
            if np.any(matched):
                sub = ds.subset(np.flatnonzero(matched))
                report, records = evaluation.evaluate_estimator(system.estimators[k], sub, {"system": str(args.system)})
                payload["estimation"] = report.to_dict()
    _write_json(report_path, payload)
    print(f"report written to {report_path}")
    if args.quiver and records:
        quiver_path = _data_path(args.quiver)
        evaluation.write_quiver_csv(quiver_path, records)
        print(f"quiver csv written to {quiver_path}")
    figdir = _figures_dir(cfg, report_path)
    if figdir is not None:
        stem = report_path.stem
        if records:
            figures.save_quiver_figure(records, figdir / f"{stem}_quiver.png")
            figures.save_scatter_figure(records, figdir / f"{stem}_scatter.png")
        if "classifier" in payload and "counts" in payload.get("classifier", {}):
            cm = evaluation.ConfusionMatrix(np.asarray(payload["classifier"]["counts"]))
            figures.save_confusion_figure(cm, figdir / f"{stem}_confusion.png")
        print(f"figures written to {figdir}")
    return EXIT_OK


def cmd_predict(args) -> int:
    system = pipeline.load_system(_data_path(args.system))
    x = np.load(_data_path(args.input))
    prediction = pipeline.predict(system, x)
    payload = {
        "k_hat": prediction.k_hat,
        "probs": prediction.probs.tolist(),
        "doas_deg": [list(d.to_degrees()) for d in prediction.doas],
    }
    if args.output:
        _write_json(_data_path(args.output), payload)
        print(f"prediction written to {args.output}")
    else:
        print(json.dumps(payload, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_inspect_knn(args) -> int:
    defaults = {"figures": None, "no_figures": False}
    cfg = _merge_config(args, defaults)
    ds = dataset.load(_data_path(args.data))
    report = dataset.knn_fingerprint(ds, int(args.query), int(args.k))
    out = _data_path(args.output)
    _write_json(out, report.to_dict())
    print(f"neighbor report written to {out}")
    figdir = _figures_dir(cfg, out)
    if figdir is not None:
        figures.save_knn_figure(report, ds.features, figdir / f"{out.stem}_neighbors.png")
        print(f"figures written to {figdir}")
    return EXIT_OK


def cmd_fov_cross(args) -> int:
    defaults = {
        "hidden": "128,128,128",
        "epochs": 40,
        "batch": 128,
        "lr": 1e-3,
        "dropout": 0.1,
        "patience": 8,
        "loss": "chordal",
        "seed": 0,
        "figures": None,
        "no_figures": False,
    }
    cfg = _merge_config(args, defaults)
    table = evaluation.fov_cross_experiment(
        dataset.load(_data_path(args.train_full)),
        dataset.load(_data_path(args.train_limited)),
        dataset.load(_data_path(args.test_full)),
        dataset.load(_data_path(args.test_limited)),
        _train_options(cfg),
        parse_hidden(str(cfg["hidden"])),
    )
    out = _data_path(args.output)
    _write_json(out, {key: report.to_dict() for key, report in table.items()})
    print(f"cross-view table written to {out}")
    for key in ("limited-limited", "limited-full", "full-limited", "full-full"):
        print(f"  {key}: pooled RMSE {table[key].pooled_rmse:.3f} deg")
    figdir = _figures_dir(cfg, out)
    if figdir is not None:
        figures.save_fov_cross_figure(table, figdir / f"{out.stem}_cells.png")
        print(f"figures written to {figdir}")
    return EXIT_OK


def cmd_tradeoff(args) -> int:
    defaults = {
        "snr_grid": "0,5,10",
        "n_grid": "30,300",
        "trials": 50,
        "seed": 0,
        "waveform": "digital",
        "figures": None,
        "no_figures": False,
    }
    cfg = _merge_config(args, defaults)
    snr_grid = [float(v) for v in str(cfg["snr_grid"]).split(",")]
    n_grid = [int(v) for v in str(cfg["n_grid"]).split(",")]
    rng = np.random.default_rng(int(cfg["seed"]))
    rows = snapshot_snr_tradeoff(snr_grid, n_grid, int(cfg["trials"]), rng, waveform=cfg["waveform"])
    out = _data_path(args.output)
    lines = [f"# seed={cfg['seed']} trials={cfg['trials']} waveform={cfg['waveform']}"]
    lines.append("snr_db,n_snapshots,mean_err,mse")
    for r in rows:
        lines.append(f"{r['snr_db']:g},{r['n_snapshots']},{r['mean_err']:.9g},{r['mse']:.9g}")
    binio.atomic_write_text(out, "\n".join(lines) + "\n")
    print(f"trade-off table written to {out}")
    figdir = _figures_dir(cfg, out)
    if figdir is not None:
        figures.save_tradeoff_figure(rows, figdir / f"{out.stem}_curves.png")
        print(f"figures written to {figdir}")
    return EXIT_OK


# ---------------------------------------------------------------- wiring


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden", help="comma-separated hidden layer widths")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--loss", choices=["chordal", "mse_angles"])
    p.add_argument("--seed", type=int)
    p.add_argument("--val-fraction", type=float, dest="val_fraction")


def _add_figure_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--figures", help="directory for PNG figures (default: next to the report)")
    p.add_argument("--no-figures", action="store_true", default=None, dest="no_figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vsdoa", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="JSON file with default option values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a labeled fingerprint dataset")
    p.add_argument("--k", help="source count 1..5 or 'mixed'")
    p.add_argument("--samples", type=int)
    p.add_argument("--snapshots", type=int)
    p.add_argument("--snr", help="SNR range in dB as 'lo:hi'")
    p.add_argument("--power-ratio", dest="power_ratio", help="per-source power offsets in dB as 'lo:hi'")
    p.add_argument("--fov", help="'full', 'limited', or 'elo:ehi,alo:ahi' in degrees")
    p.add_argument("--waveform", choices=["single_tone", "digital"])
    p.add_argument("--gamma-deg", dest="gamma_deg", type=float)
    p.add_argument("--eta-deg", dest="eta_deg", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train-classifier", help="train the 5-way source-count classifier")
    p.add_argument("--data", required=True)
    _add_train_flags(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("train-estimator", help="train a per-count angle regressor")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--data", required=True)
    _add_train_flags(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_train_estimator)

    p = sub.add_parser("train-system", help="train classifier plus all five estimators")
    p.add_argument("--mixed", required=True, help="mixed dataset for the classifier")
    p.add_argument("--estimator-data", nargs=5, required=True, metavar="DS", help="per-K datasets, K=1..5")
    _add_train_flags(p)
    p.add_argument("-o", "--output", required=True, help="output system directory")
    p.set_defaults(func=cmd_train_system)

    p = sub.add_parser("eval", help="evaluate a model or a full system on a dataset")
    p.add_argument("--model", help="single estimator model file")
    p.add_argument("--system", help="system directory")
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True, help="output JSON report")
    p.add_argument("--quiver", help="output CSV of per-source records")
    _add_figure_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="run the full flow on one snapshot matrix (.npy, 6xN complex)")
    p.add_argument("--system", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("inspect-knn", help="nearest fingerprint neighbors of one sample")
    p.add_argument("--data", required=True)
    p.add_argument("--query", type=int, required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("-o", "--output", required=True)
    _add_figure_flags(p)
    p.set_defaults(func=cmd_inspect_knn)

    p = sub.add_parser("fov-cross", help="2x2 table of full/limited field-of-view training and testing")
    p.add_argument("--train-full", required=True, dest="train_full")
    p.add_argument("--train-limited", required=True, dest="train_limited")
    p.add_argument("--test-full", required=True, dest="test_full")
    p.add_argument("--test-limited", required=True, dest="test_limited")
    _add_train_flags(p)
    p.add_argument("-o", "--output", required=True)
    _add_figure_flags(p)
    p.set_defaults(func=cmd_fov_cross)

    p = sub.add_parser("tradeoff", help="fingerprint error over a snapshot/SNR grid")
    p.add_argument("--snr-grid", dest="snr_grid", help="comma-separated SNR values in dB")
    p.add_argument("--n-grid", dest="n_grid", help="comma-separated snapshot counts")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--waveform", choices=["single_tone", "digital"])
    p.add_argument("-o", "--output", required=True)
    _add_figure_flags(p)
    p.set_defaults(func=cmd_tradeoff)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except binio.ArtifactError as exc:
        print(f"error: bad artifact: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ConfigError, ValueError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except neural_net.TrainingError as exc:
        print(f"error: training failed: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
