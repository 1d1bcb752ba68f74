"""Command-line pipeline runner: train, prune, quantize, eval, report.

Every command is driven by a declarative JSON run file plus a handful of
flags; unknown keys are rejected so typos fail loudly.  Commands are pure
functions of (run file, input files, seed): re-running reproduces outputs
byte for byte.  Wall-clock timestamps go only to a sidecar run.log.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

from . import costs, data, evaluation, modelfile, pruning, quantization
from .autoencoder import Autoencoder, TrainConfig, train
from .errors import ConfigurationError, DataError, TrainingError
from .nn import LayerSpec, OptimizerConfig
from .pruning import PruneConfig, derive_seed

METRICS_COLUMNS = [
    "model_id", "stage", "dataset", "sparsity", "density", "scheme", "bits",
    "omega", "psi", "precision", "recall", "f1", "threshold",
    "capacity_bits", "macs", "reduction_percent",
]

QUANT_BIT_CHOICES = (4, 5, 8, 16)


def default_encoder(channels):
    """Default 6-layer conv autoencoder (3 conv encoder stages, mirrored)."""
    mid = max(channels, 4)
    return [
        LayerSpec("conv1d", channels, 4 * mid, kernel_size=3, stride=1, padding=1),
        LayerSpec("conv1d", 4 * mid, 2 * mid, kernel_size=3, stride=2, padding=1),
        LayerSpec("conv1d", 2 * mid, mid, kernel_size=3, stride=2, padding=1),
    ]


def _check_keys(section, mapping, allowed):
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ConfigurationError(
            f"unknown key(s) in {section}: {', '.join(sorted(unknown))}"
        )


def _parse_anomalies(entries):
    specs = []
    for i, entry in enumerate(entries):
        _check_keys(f"dataset.anomalies[{i}]", entry,
                    ["kind", "count", "min_length", "max_length", "magnitude",
                     "channels_hit"])
        specs.append(data.AnomalySpec(**entry))
    return specs


class RunConfig:
    """Fully resolved run settings (all defaults materialized)."""

    def __init__(self, raw, seed_override=None):
        _check_keys("run file", raw, [
            "seed", "output_dir", "dataset", "window", "model", "train",
            "prune", "quantize", "eval",
        ])
        self.seed = int(seed_override if seed_override is not None
                        else raw.get("seed", 7))
        self.output_dir = raw.get("output_dir", "runs/out")

        ds = dict(raw.get("dataset", {"kind": "synthetic"}))
        kind = ds.get("kind", "synthetic")
        if kind == "synthetic":
            _check_keys("dataset", ds, [
                "kind", "channels", "length", "seed", "train_fraction",
                "val_fraction", "noise_sigma", "min_period", "max_period",
                "anomalies",
            ])
            anomalies = ds.get("anomalies")
            self.synth = data.SynthConfig(
                channels=ds.get("channels", 8),
                length=ds.get("length", 6000),
                seed=ds.get("seed", self.seed),
                train_fraction=ds.get("train_fraction", 0.5),
                val_fraction=ds.get("val_fraction", 0.25),
                noise_sigma=ds.get("noise_sigma", 0.04),
                min_period=ds.get("min_period", 8.0),
                max_period=ds.get("max_period", 60.0),
                **({"anomalies": _parse_anomalies(anomalies)}
                   if anomalies is not None else {}),
            )
            self.csv_paths = None
            self.dataset_name = "synthetic"
        elif kind == "csv":
            _check_keys("dataset", ds, [
                "kind", "train_path", "val_path", "test_path", "label_column",
            ])
            for key in ("train_path", "test_path"):
                if key not in ds:
                    raise ConfigurationError(f"dataset.{key} is required for csv datasets")
            self.synth = None
            self.csv_paths = {
                "train": ds["train_path"],
                "val": ds.get("val_path"),
                "test": ds["test_path"],
                "label_column": ds.get("label_column", "label"),
            }
            self.dataset_name = os.path.splitext(os.path.basename(ds["test_path"]))[0]
        else:
            raise ConfigurationError(f"unknown dataset kind {kind!r}")

        win = dict(raw.get("window", {}))
        _check_keys("window", win, ["length", "stride", "normalization"])
        self.window = data.WindowConfig(
            length=win.get("length", 12), stride=win.get("stride", 1),
            normalization=win.get("normalization", "minmax"))

        model = dict(raw.get("model", {}))
        _check_keys("model", model, ["encoder"])
        self.encoder_specs = None
        if "encoder" in model:
            specs = []
            for i, entry in enumerate(model["encoder"]):
                _check_keys(f"model.encoder[{i}]", entry, [
                    "kind", "in_channels", "out_channels", "kernel_size",
                    "stride", "padding", "activation",
                ])
                specs.append(LayerSpec(**entry))
            self.encoder_specs = specs

        tr = dict(raw.get("train", {}))
        _check_keys("train", tr, [
            "epochs", "batch_size", "batches_per_epoch", "optimizer", "seed",
        ])
        opt = dict(tr.get("optimizer", {}))
        _check_keys("train.optimizer", opt, [
            "kind", "learning_rate", "beta1", "beta2", "eps",
        ])
        self.train = TrainConfig(
            epochs=tr.get("epochs", 30),
            batch_size=tr.get("batch_size", 64),
            batches_per_epoch=tr.get("batches_per_epoch"),
            optimizer=OptimizerConfig(**opt),
            seed=tr.get("seed", derive_seed(self.seed, 10)),
        )

        pr = dict(raw.get("prune", {}))
        _check_keys("prune", pr, [
            "population_size", "v_min", "v_max", "short_epochs",
            "final_epochs", "selection_split", "seed",
        ])
        self.selection_split = pr.get("selection_split", "val")
        if self.selection_split not in ("val", "test"):
            raise ConfigurationError("prune.selection_split must be 'val' or 'test'")
        self.prune = PruneConfig(
            population_size=pr.get("population_size", 16),
            v_min=pr.get("v_min", 0.2), v_max=pr.get("v_max", 0.8),
            short_epochs=pr.get("short_epochs", 3),
            final_epochs=pr.get("final_epochs", 30),
            train=self.train,
            seed=pr.get("seed", derive_seed(self.seed, 11)),
        )

        qz = dict(raw.get("quantize", {}))
        _check_keys("quantize", qz, [
            "scheme", "bits", "omega", "psi", "act_bits",
            "calibration_windows", "seed",
        ])
        self.quant_scheme = qz.get("scheme", "linear")
        if self.quant_scheme not in ("linear", "nonlinear"):
            raise ConfigurationError("quantize.scheme must be 'linear' or 'nonlinear'")
        self.quant_bits = qz.get("bits", 8)
        self.quant_omega = qz.get("omega")
        self.quant_psi = qz.get("psi")
        self.act_bits = qz.get("act_bits", 8)
        self.calibration_windows = qz.get("calibration_windows", 256)
        self.quant_seed = qz.get("seed", derive_seed(self.seed, 12))

        ev = dict(raw.get("eval", {}))
        _check_keys("eval", ev, ["point_adjust"])
        self.point_adjust = bool(ev.get("point_adjust", False))

    def resolved(self):
        enc = self.encoder_specs
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "dataset": ({"kind": "csv", **self.csv_paths} if self.synth is None else {
                "kind": "synthetic",
                "channels": self.synth.channels, "length": self.synth.length,
                "seed": self.synth.seed,
                "train_fraction": self.synth.train_fraction,
                "val_fraction": self.synth.val_fraction,
                "noise_sigma": self.synth.noise_sigma,
                "min_period": self.synth.min_period,
                "max_period": self.synth.max_period,
                "anomalies": [vars(a) for a in self.synth.anomalies],
            }),
            "window": vars(self.window),
            "model": {"encoder": [dict(vars(s)) for s in enc]
                      if enc is not None else "default"},
            "train": {
                "epochs": self.train.epochs, "batch_size": self.train.batch_size,
                "batches_per_epoch": self.train.batches_per_epoch,
                "optimizer": vars(self.train.optimizer), "seed": self.train.seed,
            },
            "prune": {
                "population_size": self.prune.population_size,
                "v_min": self.prune.v_min, "v_max": self.prune.v_max,
                "short_epochs": self.prune.short_epochs,
                "final_epochs": self.prune.final_epochs,
                "selection_split": self.selection_split,
                "seed": self.prune.seed,
            },
            "quantize": {
                "scheme": self.quant_scheme, "bits": self.quant_bits,
                "omega": self.quant_omega, "psi": self.quant_psi,
                "act_bits": self.act_bits,
                "calibration_windows": self.calibration_windows,
                "seed": self.quant_seed,
            },
            "eval": {"point_adjust": self.point_adjust},
        }


def load_run_config(path, seed_override=None):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"run file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"run file is not valid JSON: {exc}") from None
    return RunConfig(raw, seed_override)


def prepare_data(cfg):
    """Load or generate splits, normalize with train stats, window train."""
    if cfg.synth is not None:
        train_s, val_s, test_s = data.generate_synthetic(cfg.synth)
    else:
        paths = cfg.csv_paths
        train_s = data.load_csv(paths["train"], paths["label_column"], "train")
        test_s = data.load_csv(paths["test"], paths["label_column"], "test")
        val_s = (data.load_csv(paths["val"], paths["label_column"], "val")
                 if paths["val"] else test_s)
    if cfg.window.normalization == "minmax":
        stats = data.fit_normalization(train_s)
        train_s = data.normalize(train_s, stats)
        val_s = data.normalize(val_s, stats)
        test_s = data.normalize(test_s, stats)
    windows, _ = data.window(train_s, cfg.window)
    return {"train": train_s, "val": val_s, "test": test_s, "windows": windows}


def _outdir(cfg, override):
    out = override or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _log(outdir, message):
    with open(os.path.join(outdir, "run.log"), "a") as fh:
        fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {message}\n")


def _append_metrics(outdir, row):
    path = os.path.join(outdir, "metrics.csv")
    fresh = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_COLUMNS)
        if fresh:
            writer.writeheader()
        writer.writerow(row)


def _evaluate_file(mf, splits, cfg, split="test", point_adjust=None):
    series = splits[split]
    model = mf.float_model()
    scores = evaluation.anomaly_scores(model, series, cfg.window,
                                       act_quant=mf.act_quantizers())
    pa = cfg.point_adjust if point_adjust is None else point_adjust
    return scores, evaluation.best_f1(scores, series.labels, point_adjust=pa)


def _metrics_row(mf, path, cfg, result):
    model = mf.float_model()
    report = costs.compression_report(model, mf.mask_set, mf.qmodel)
    density = (mf.mask_set.achieved_density() if mf.mask_set is not None else 1.0)
    if mf.qmodel is None:
        scheme, bits, omega, psi = "float32", 32, "", ""
    elif mf.qmodel.scheme == "linear":
        scheme, bits, omega, psi = "linear", mf.qmodel.total_bits, "", ""
    else:
        scheme, bits = "nonlinear", mf.qmodel.psi
        omega, psi = mf.qmodel.omega, mf.qmodel.psi
    return {
        "model_id": modelfile.model_id(path),
        "stage": mf.stage,
        "dataset": cfg.dataset_name,
        "sparsity": repr(1.0 - density),
        "density": repr(density),
        "scheme": scheme,
        "bits": bits,
        "omega": omega,
        "psi": psi,
        "precision": repr(result.precision),
        "recall": repr(result.recall),
        "f1": repr(result.f1),
        "threshold": repr(result.threshold),
        "capacity_bits": repr(report.capacity_bits),
        "macs": repr(report.mac_cost),
        "reduction_percent": repr(report.reduction_percent),
    }


def _finish_eval(mf, path, cfg, splits, outdir, stage):
    _, result = _evaluate_file(mf, splits, cfg)
    row = _metrics_row(mf, path, cfg, result)
    _append_metrics(outdir, row)
    _write_json(os.path.join(outdir, f"metrics_{stage}.json"),
                {**result.as_dict(), "model_id": row["model_id"], "stage": stage})
    return result


def cmd_synth_data(args):
    cfg = load_run_config(args.config, args.seed)
    if cfg.synth is None:
        raise ConfigurationError("synth-data requires a synthetic dataset section")
    outdir = _outdir(cfg, args.out)
    train_s, val_s, test_s = data.generate_synthetic(cfg.synth)
    for name, series in (("train", train_s), ("val", val_s), ("test", test_s)):
        data.save_csv(series, os.path.join(outdir, f"{name}.csv"))
    _write_json(os.path.join(outdir, "resolved_synth-data.json"), cfg.resolved())
    _log(outdir, "synth-data complete")
    print(json.dumps({"output_dir": outdir,
                      "lengths": {"train": train_s.length, "val": val_s.length,
                                  "test": test_s.length}}))
    return 0


def _build_model(cfg, channels):
    specs = cfg.encoder_specs or default_encoder(channels)
    return Autoencoder(specs, (channels, cfg.window.length), seed=cfg.seed)


def cmd_train(args):
    cfg = load_run_config(args.config, args.seed)
    outdir = _outdir(cfg, args.out)
    splits = prepare_data(cfg)
    model = _build_model(cfg, splits["train"].channels)
    history = train(model, splits["windows"], cfg.train)
    path = os.path.join(outdir, "baseline.aecz")
    mf = modelfile.ModelFile(stage="baseline", model=model)
    _, result = _evaluate_file(mf, splits, cfg)
    mf.metrics = {"f1": result.f1, "precision": result.precision,
                  "recall": result.recall, "threshold": result.threshold}
    mf.save(path)
    _append_metrics(outdir, _metrics_row(mf, path, cfg, result))
    _write_json(os.path.join(outdir, "metrics_baseline.json"),
                {**result.as_dict(), "model_id": modelfile.model_id(path),
                 "stage": "baseline", "final_loss": history[-1] if history else None})
    _write_json(os.path.join(outdir, "resolved_train.json"), cfg.resolved())
    _log(outdir, "train complete")
    print(json.dumps({"model": path, "f1": result.f1,
                      "final_loss": history[-1] if history else None}))
    return 0


def cmd_prune(args):
    cfg = load_run_config(args.config, args.seed)
    outdir = _outdir(cfg, args.out)
    splits = prepare_data(cfg)
    baseline = modelfile.load(args.model)
    if baseline.stage == "quantized":
        raise ConfigurationError("cannot prune a quantized model file")
    eval_series = splits[cfg.selection_split]
    pruned, report = pruning.lottery_search(
        baseline.float_model(), cfg.prune, splits["windows"], eval_series,
        cfg.window, point_adjust=cfg.point_adjust, jobs=args.jobs)
    path = os.path.join(outdir, "pruned.aecz")
    mf = modelfile.ModelFile(stage="pruned", model=pruned.model,
                             mask_set=pruned.mask_set,
                             provenance={"source_model": modelfile.model_id(args.model)})
    _, result = _evaluate_file(mf, splits, cfg)
    mf.metrics = {"f1": result.f1, "precision": result.precision,
                  "recall": result.recall, "threshold": result.threshold}
    mf.save(path)
    _append_metrics(outdir, _metrics_row(mf, path, cfg, result))
    _write_json(os.path.join(outdir, "search_report.json"), report.as_dict())
    _write_json(os.path.join(outdir, "metrics_pruned.json"),
                {**result.as_dict(), "model_id": modelfile.model_id(path),
                 "stage": "pruned",
                 "achieved_density": pruned.mask_set.achieved_density()})
    _write_json(os.path.join(outdir, "resolved_prune.json"), cfg.resolved())
    _log(outdir, "prune complete")
    print(json.dumps({"model": path, "f1": result.f1,
                      "density": pruned.mask_set.achieved_density(),
                      "selected_candidate": report.selected_index}))
    return 0


def cmd_quantize(args):
    cfg = load_run_config(args.config, args.seed)
    outdir = _outdir(cfg, args.out)
    scheme = args.scheme or cfg.quant_scheme
    bits = args.bits if args.bits is not None else cfg.quant_bits
    if bits not in QUANT_BIT_CHOICES:
        raise ConfigurationError(
            f"bits must be one of {QUANT_BIT_CHOICES}, got {bits}")
    splits = prepare_data(cfg)
    source = modelfile.load(args.model)
    if source.stage == "quantized":
        raise ConfigurationError("input model is already quantized")
    model = source.float_model()
    calib = splits["windows"][: cfg.calibration_windows]
    if scheme == "linear":
        qmodel = quantization.quantize_model_linear(
            model, bits, calibration_windows=calib, act_bits=cfg.act_bits)
        name = f"quantized_linear{bits}.aecz"
    else:
        omega = args.omega if args.omega is not None else (cfg.quant_omega or 2 ** bits)
        psi = args.psi if args.psi is not None else (cfg.quant_psi or bits)
        qmodel = quantization.quantize_model_nonlinear(
            model, omega, psi, calibration_windows=calib, act_bits=cfg.act_bits,
            seed=cfg.quant_seed)
        name = f"quantized_nonlinear{bits}.aecz"
    qmodel.provenance = {"source_model": modelfile.model_id(args.model)}
    path = os.path.join(outdir, args.out_file or name)
    mf = modelfile.ModelFile(stage="quantized", qmodel=qmodel,
                             mask_set=source.mask_set,
                             provenance=qmodel.provenance)
    _, result = _evaluate_file(mf, splits, cfg)
    mf.metrics = {"f1": result.f1, "precision": result.precision,
                  "recall": result.recall, "threshold": result.threshold}
    mf.save(path)
    _append_metrics(outdir, _metrics_row(mf, path, cfg, result))
    _write_json(os.path.join(outdir, f"metrics_quantized_{scheme}{bits}.json"),
                {**result.as_dict(), "model_id": modelfile.model_id(path),
                 "stage": "quantized", "scheme": scheme, "bits": bits})
    _write_json(os.path.join(outdir, "resolved_quantize.json"), cfg.resolved())
    _log(outdir, "quantize complete")
    print(json.dumps({"model": path, "f1": result.f1, "scheme": scheme,
                      "bits": bits}))
    return 0


def cmd_eval(args):
    cfg = load_run_config(args.config, args.seed)
    outdir = _outdir(cfg, args.out)
    splits = prepare_data(cfg)
    mf = modelfile.load(args.model)
    scores, result = _evaluate_file(mf, splits, cfg, split=args.split,
                                    point_adjust=args.point_adjust or None)
    row = _metrics_row(mf, args.model, cfg, result)
    _append_metrics(outdir, row)
    if args.scores_out:
        with open(args.scores_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["timestep", "score"])
            for t, s in enumerate(scores):
                writer.writerow([t, repr(float(s))])
    _log(outdir, "eval complete")
    print(json.dumps({**result.as_dict(), "model_id": row["model_id"],
                      "stage": mf.stage, "split": args.split}, sort_keys=True))
    return 0


def cmd_report(args):
    rows = []
    for path in args.models:
        mf = modelfile.load(path)
        model = mf.float_model()
        report = costs.compression_report(model, mf.mask_set, mf.qmodel)
        label = f"{os.path.basename(path)} [{mf.stage}]"
        print(costs.format_report(report, label))
        print()
        rows.append({"file": os.path.basename(path), "stage": mf.stage,
                     **report.as_dict()})
    if args.json_out:
        _write_json(args.json_out, rows)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="aecompress",
        description="Compression pipeline for autoencoder anomaly detectors",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model_arg=False):
        p.add_argument("--config", required=True, help="JSON run file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the run file seed")
        p.add_argument("--out", default=None, help="override output directory")
        if model_arg:
            p.add_argument("--model", required=True, help="input model file")

    p = sub.add_parser("synth-data", help="write the synthetic dataset as CSV")
    common(p)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", help="train the float baseline")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("prune", help="population mask search + final retraining")
    common(p, model_arg=True)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="parallel candidate workers")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("quantize", help="fixed-point or codebook quantization")
    common(p, model_arg=True)
    p.add_argument("--scheme", choices=["linear", "nonlinear"], default=None)
    p.add_argument("--bits", type=int, choices=list(QUANT_BIT_CHOICES), default=None)
    p.add_argument("--omega", type=int, default=None, help="cluster count")
    p.add_argument("--psi", type=int, default=None, help="centroid bit width")
    p.add_argument("--out-file", default=None, help="output file name")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("eval", help="score a saved model on a split")
    common(p, model_arg=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--point-adjust", action="store_true",
                   help="segment-level credit during evaluation")
    p.add_argument("--scores-out", default=None, help="write the score series CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="capacity / MAC report for model files")
    p.add_argument("models", nargs="+", help="model files")
    p.add_argument("--json-out", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except TrainingError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
